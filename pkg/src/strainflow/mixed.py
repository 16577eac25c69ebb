"""Traction-free problem: the flow decouples into pointwise ODEs dp/dt = -sigma(p).

Each material point evolves independently; the field solver just maps the
pointwise solver over the samples and reassembles diagnostics. Strains
starting at exactly zero are bootstrapped through the travel-time relation
int_0^p -dz/sigma(z) = t (exact where the explicit stepper would be hopeless)
and handed to the adaptive stepper once clear of the singularity.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .bounds import time_from_zero_curve
from .errors import DomainError, HypothesisError
from .numerics import rk45
from .state import Trajectory
from .stress_models import POSITIVE, StressModel, eval_W

EQUILIBRIUM_TOL = 1e-8  # residual |sigma| below which a limit counts as a root
BOOTSTRAP_STRAIN = 1e-4  # hand-off level from the travel-time relation to the ODE


@dataclass(frozen=True)
class PointwiseSolution:
    p0: float
    method: str  # "stiff-ode" | "quadrature-inversion" | "rest-point"
    times: np.ndarray
    values: np.ndarray
    limit_root: float | None  # nearest root of sigma, None when unresolved

    @property
    def final(self) -> float:
        return float(self.values[-1])


def _classify_limit(model: StressModel, p_final: float) -> float | None:
    if abs(float(model.sigma(np.array([p_final]))[0])) >= EQUILIBRIUM_TOL:
        return None
    roots = model.roots_of_sigma
    if len(roots) == 0:
        return None
    return float(roots[np.argmin(np.abs(roots - p_final))])


def solve_pointwise(
    model: StressModel,
    p0: float,
    t_grid,
    rtol: float = 1e-9,
    atol: float = 1e-12,
) -> PointwiseSolution:
    """Solve dp/dt = -sigma(p), p(0) = p0 >= 0, recording on ``t_grid``."""
    t_grid = np.asarray(t_grid, dtype=float)
    if p0 < 0:
        raise DomainError("initial strain must be nonnegative")
    if t_grid[0] != 0.0:
        raise ValueError("the record grid must start at t = 0")

    zero_ok = model.domain != POSITIVE
    if p0 == 0.0 and zero_ok:
        sigma0 = float(model.sigma(np.array([0.0]))[0])
        if sigma0 == 0.0:
            vals = np.zeros_like(t_grid)
            return PointwiseSolution(p0, "rest-point", t_grid, vals, 0.0)

    f = lambda y: -np.asarray(model.sigma(y), dtype=float)
    guard = None
    if model.domain == POSITIVE:
        guard = lambda y_old, y_new: bool(np.all(y_new > 0.0))

    if p0 == 0.0 and not zero_ok:
        # strain 0 is not in the domain: invert the travel-time relation for
        # small times, then continue with the stepper
        curve, p_minus = time_from_zero_curve(model)
        t_boot = min(curve.value(BOOTSTRAP_STRAIN), float(t_grid[-1]))
        early = t_grid[(t_grid > 0.0) & (t_grid <= t_boot)]
        early_vals = np.array([curve.invert(float(t)) for t in early])
        p_start = curve.invert(t_boot)
        if p_start <= 0.0:
            raise HypothesisError(
                "travel-time relation from zero strain is not solvable; "
                "the stress does not blow down fast enough at zero"
            )
        rest = t_grid[t_grid > t_boot]
        if len(rest):
            grid2 = np.concatenate([[t_boot], rest])
            res = rk45(f, np.array([p_start]), grid2, rtol=rtol, atol=atol,
                       accept_state=guard)
            vals = np.concatenate([[0.0], early_vals, res.states[1:, 0]])
        else:
            vals = np.concatenate([[0.0], early_vals])
        method = "quadrature-inversion"
    else:
        res = rk45(f, np.array([p0]), t_grid, rtol=rtol, atol=atol, accept_state=guard)
        vals = res.states[:, 0]
        method = "stiff-ode"
    return PointwiseSolution(
        p0=p0,
        method=method,
        times=t_grid,
        values=vals,
        limit_root=_classify_limit(model, float(vals[-1])),
    )


def solve_field(
    model: StressModel,
    p0_samples,
    t_grid,
    rtol: float = 1e-9,
    atol: float = 1e-12,
) -> tuple[Trajectory, np.ndarray]:
    """Solve the decoupled flow for a sampled field; returns the trajectory
    and the classified limit field (limit roots, or the final value where the
    limit is unresolved)."""
    samples = np.asarray(p0_samples, dtype=float)
    t_grid = np.asarray(t_grid, dtype=float)
    if samples.ndim != 1 or len(samples) == 0:
        raise ValueError("p0_samples must be a non-empty 1-d array")
    if np.any(samples < 0):
        raise DomainError("all samples must be nonnegative")

    solutions = [solve_pointwise(model, float(p), t_grid, rtol=rtol, atol=atol)
                 for p in samples]
    values = np.column_stack([s.values for s in solutions])
    weights = np.full(len(samples), 1.0 / len(samples))

    # diagnostics evaluated just inside the domain when a sample sits at 0
    floor = 1e-12 if model.domain == POSITIVE else -np.inf
    vals_eval = np.maximum(values, floor)
    sig = np.asarray(model.sigma(vals_eval), dtype=float)
    c = sig @ weights
    energy = np.asarray(eval_W(model, vals_eval.ravel()), dtype=float).reshape(sig.shape) @ weights
    diss_rate = (sig ** 2) @ weights

    traj = Trajectory(
        times=t_grid,
        values=values,
        weights=weights,
        stress_mean=c,
        energy=energy,
        dissipation=diss_rate,
        dissipation_cum=np.zeros_like(t_grid),
        metadata={"kind": "mixed", "model": model.spec},
        converged=bool(np.max(np.abs(sig[-1])) < EQUILIBRIUM_TOL),
    )
    limit = np.array(
        [s.limit_root if s.limit_root is not None else s.final for s in solutions]
    )
    return traj, limit


def reconstruct_y(p_values) -> np.ndarray:
    """Deformation from a strain field sampled on a uniform grid over [0, 1]:
    cumulative trapezoid with y(0) = 0."""
    p = np.asarray(p_values, dtype=float)
    if p.ndim != 1 or len(p) < 2:
        raise ValueError("need at least two samples on the unit interval")
    dx = 1.0 / (len(p) - 1)
    y = np.empty_like(p)
    y[0] = 0.0
    np.cumsum(0.5 * dx * (p[1:] + p[:-1]), out=y[1:])
    return y
