#!/usr/bin/env python3
"""Universal envelopes for the singular double-well law p^3 - p - 0.5/p.

Certifies the bound constants, then checks that an ensemble of random runs
stays strictly inside the envelopes at every record, no matter the data.
"""

import pathlib
import sys

sys.path.insert(0, str(pathlib.Path(__file__).resolve().parent.parent / "src"))

import numpy as np

from strainflow import (
    displacement_lower,
    displacement_upper,
    integrate,
    make_model,
    seeded_state,
)

model = make_model("singular-cubic", kappa=0.5)
mu = 1.0
records = np.arange(0.0, 30.5, 0.5)

lower, lc = displacement_lower(model, mu, records[1:])
upper, uc = displacement_upper(model, mu, records[1:])
print(f"certified constants: C={lc['C']:.4f} eps0={lc['eps0']:.4f} "
      f"t0={lc['t0_lower']:.4f} M={uc['M']:.4f} t0'={uc['t0_upper']:.4f}")

worst_low = np.inf
worst_high = np.inf
for seed in range(25):
    state = seeded_state(model, 16, mu, seed=seed, lo=0.05, hi=3.0)
    traj = integrate(model, state, 30.0, record_every=0.5)
    worst_low = min(worst_low, np.min(traj.values[1:].min(axis=1) - lower))
    worst_high = min(worst_high, np.min(upper - traj.values[1:].max(axis=1)))

print(f"25 random runs: smallest gap above the lower envelope {worst_low:.3e}")
print(f"                smallest gap below the upper envelope {worst_high:.3e}")
print("enclosure holds" if min(worst_low, worst_high) >= 0 else "ENCLOSURE VIOLATED")
