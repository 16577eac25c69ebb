#!/usr/bin/env python3
"""Dense-data convergence is not enough: the spiral ODE ensemble.

Every member with z(0) != 0 falls into the origin; the z(0) = 0 member keeps
circling the unit circle with its angle growing like log(t).
"""

import pathlib
import sys

sys.path.insert(0, str(pathlib.Path(__file__).resolve().parent.parent / "src"))

from strainflow import dense_data_demo

members = dense_data_demo(t_final=1e3)
print(f"{'z0':>10}  {'|u(T)|':>10}  {'theta gain':>10}  lyapunov monotone")
for m in sorted(members, key=lambda m: abs(m["z0"])):
    print(f"{m['z0']:>10.0e}  {m['final_abs_u']:>10.4f}  "
          f"{m['theta_gain']:>10.4f}  {m['lyapunov_monotone']}")
