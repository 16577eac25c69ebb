"""Long-time diagnostics: equilibrium sets, decay monitors, conserved-limit
functionals, phase fractions, and the nondegeneracy checks that decide
whether the mean stress can keep oscillating forever.

Limits at infinite time are estimated by a trailing-window statistic: the
mean over the last tenth of the recorded times, with the window's spread
reported as the uncertainty.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .errors import (
    DegenerateDataError,
    HypothesisError,
    NotConvergedError,
)
from .numerics import _GL_NODES, _GL_WEIGHTS, trailing_stats
from .state import Trajectory
from .stress_models import POSITIVE, StressModel, critical_points, find_branches, roots_at

TRAILING_FRAC = 0.1
RHS_SETTLED = 1e-8


# -- equilibrium enumeration ---------------------------------------------------


@dataclass(frozen=True)
class EquilibriumDescription:
    stress_level: float
    branch_values: tuple[float, ...]
    fractions: tuple[float, ...]
    mean: float


def equilibria_enumerate(model: StressModel, mu: float, n_levels: int = 201):
    """Decide whether the constant state is the only equilibrium with mean mu.

    Scans stress levels over the window's stress range; at every level whose
    root hull straddles mu there is a two-point equilibrium family, and a
    sample member (outermost roots, lever-rule fractions) is returned.
    """
    grid = model.grid(1001)
    sig = np.asarray(model.sigma(grid), dtype=float)
    c_lo, c_hi = float(np.min(sig)), float(np.max(sig))
    _, crit_vals = critical_points(model)
    levels = np.linspace(c_lo, c_hi, n_levels)
    found: list[EquilibriumDescription] = []
    for c in levels:
        if len(crit_vals) and np.min(np.abs(crit_vals - c)) < 1e-9 * max(1.0, abs(c)):
            continue
        roots = roots_at(model, float(c))
        if len(roots) < 2:
            continue
        lo, hi = float(roots[0]), float(roots[-1])
        if lo < mu < hi:
            s = (hi - mu) / (hi - lo)
            found.append(
                EquilibriumDescription(
                    stress_level=float(c),
                    branch_values=(lo, hi),
                    fractions=(s, 1.0 - s),
                    mean=s * lo + (1.0 - s) * hi,
                )
            )
    return ("UNIQUE" if not found else "NON-UNIQUE"), found


# -- decay of the velocity ------------------------------------------------------


def convergence_monitor(traj: Trajectory) -> tuple[np.ndarray, bool]:
    """Weighted velocity norm along the records and a settled flag.

    The flag needs the final norm under 1e-8 and the last tenth of the series
    nonincreasing up to 1e-10 noise.
    """
    series = np.sqrt(traj.dissipation)
    t = traj.times
    window = t >= t[-1] - TRAILING_FRAC * (t[-1] - t[0])
    tail = series[window]
    monotone = bool(np.all(np.diff(tail) <= 1e-10)) if len(tail) > 1 else True
    return series, bool(series[-1] < RHS_SETTLED and monotone)


# -- integral functionals of the stress -----------------------------------------


class _CumulativeAntiderivative:
    """Phi(p) = int_1^p F(sigma(z)) dz on a panel table, refined globally by
    doubling until the table stabilizes, then queried in vectorized batches."""

    def __init__(self, model: StressModel, F, lo: float, hi: float, tol: float = 1e-10):
        self.model = model
        self.F = F
        lo = min(lo, 1.0)
        hi = max(hi, 1.0)
        pad = 1e-6 * (hi - lo + 1.0)
        self.lo, self.hi = lo - pad if model.domain != POSITIVE else max(lo * 0.5, lo - pad), hi + pad
        n = 1024
        prev = None
        for _ in range(8):
            nodes, cum = self._build(n)
            if prev is not None:
                shared = cum[::2]
                if np.max(np.abs(shared - prev[1])) <= tol:
                    break
            prev = (nodes, cum)
            n *= 2
        self.nodes, self.cum = nodes, cum
        self.offset = self._raw(np.array([1.0]))[0]

    def _build(self, n: int):
        nodes = np.linspace(self.lo, self.hi, n + 1)
        mid = 0.5 * (nodes[1:] + nodes[:-1])
        half = 0.5 * (nodes[1:] - nodes[:-1])
        z = mid[:, None] + half[:, None] * _GL_NODES[None, :]
        vals = self.F(np.asarray(self.model.sigma(z), dtype=float))
        panels = half * (vals @ _GL_WEIGHTS)
        return nodes, np.concatenate([[0.0], np.cumsum(panels)])

    def _raw(self, p: np.ndarray) -> np.ndarray:
        p = np.clip(p, self.nodes[0], self.nodes[-1])
        j = np.clip(np.searchsorted(self.nodes, p) - 1, 0, len(self.nodes) - 2)
        a = self.nodes[j]
        mid = 0.5 * (a + p)
        half = 0.5 * (p - a)
        z = mid[..., None] + half[..., None] * _GL_NODES
        vals = self.F(np.asarray(self.model.sigma(z), dtype=float))
        return self.cum[j] + half * (vals @ _GL_WEIGHTS)

    def __call__(self, p) -> np.ndarray:
        return self._raw(np.asarray(p, dtype=float)) - self.offset


@dataclass(frozen=True)
class FunctionalSeries:
    times: np.ndarray
    series: np.ndarray
    limit: float
    spread: float
    monotone_expected: bool
    monotone_ok: bool


def F_functional(model: StressModel, traj: Trajectory, F, F_prime=None,
                 tol: float = 1e-10) -> FunctionalSeries:
    """Series t -> sum_i w_i int_1^{p_i(t)} F(sigma(z)) dz and its trailing
    limit. When F is nondecreasing on the attained stress range the series is
    checked for monotone decay (within ten times the quadrature tolerance)."""
    vals = traj.values
    phi = _CumulativeAntiderivative(model, F, float(np.min(vals)), float(np.max(vals)), tol=tol)
    series = phi(vals) @ traj.weights
    limit, spread = trailing_stats(traj.times, series, TRAILING_FRAC)
    monotone_expected = False
    if F_prime is not None:
        sig = np.asarray(model.sigma(vals), dtype=float)
        s_lo, s_hi = float(np.min(sig)), float(np.max(sig))
        probe = np.linspace(s_lo, s_hi, 513)
        monotone_expected = bool(np.min(F_prime(probe)) >= -1e-12)
    monotone_ok = bool(np.all(np.diff(series) <= 10.0 * tol)) if monotone_expected else True
    return FunctionalSeries(
        times=traj.times,
        series=series,
        limit=limit,
        spread=spread,
        monotone_expected=monotone_expected,
        monotone_ok=monotone_ok,
    )


def chi_functional(model: StressModel, traj: Trajectory, a: float, b: float):
    """Series t -> sum_i w_i meas{z in [z_floor, p_i(t)] : sigma(z) in [a, b]}
    via decomposition of sigma^{-1}([a, b]) into intervals, plus its trailing
    limit. The floor is 0 for positive-only models, 1 for full-line ones."""
    if b < a:
        raise ValueError("need a <= b")
    zs, crit_vals = critical_points(model)
    if len(crit_vals) and np.min(np.minimum(np.abs(crit_vals - a), np.abs(crit_vals - b))) < 1e-9:
        warnings.warn(
            "band endpoint sits on a critical value of the stress; "
            "the interval decomposition is ill-conditioned",
            RuntimeWarning,
        )
    z_floor = 0.0 if model.domain == POSITIVE else 1.0
    lo, hi = model.eval_window
    points = sorted(
        set(map(float, roots_at(model, a)))
        | set(map(float, roots_at(model, b)))
        | set(map(float, zs))
        | {max(lo, 1e-12) if model.domain == POSITIVE else lo, hi}
    )
    # classify the gaps between consecutive breakpoints
    in_band: list[tuple[float, float]] = []
    for s, e in zip(points[:-1], points[1:]):
        mid = 0.5 * (s + e)
        val = float(model.sigma(np.array([mid]))[0])
        if a <= val <= b:
            if in_band and abs(in_band[-1][1] - s) < 1e-12 * max(1.0, abs(s)):
                in_band[-1] = (in_band[-1][0], e)
            else:
                in_band.append((s, e))
    if not in_band:
        series = np.zeros_like(traj.times)
        return series, 0.0, 0.0
    starts = np.array([max(s, z_floor) for s, _ in in_band])
    ends = np.array([max(e, z_floor) for _, e in in_band])
    lens = np.maximum(ends - starts, 0.0)
    cum = np.concatenate([[0.0], np.cumsum(lens)])

    def measure(p: np.ndarray) -> np.ndarray:
        p = np.asarray(p, dtype=float)
        j = np.searchsorted(ends, p, side="left")
        j = np.clip(j, 0, len(lens) - 1)
        partial = np.clip(p - starts[j], 0.0, lens[j])
        full = cum[j]
        out = np.where(p <= starts[0], 0.0, full + partial)
        return np.where(p >= ends[-1], cum[-1], out)

    series = measure(traj.values) @ traj.weights
    limit, spread = trailing_stats(traj.times, series, TRAILING_FRAC)
    return series, limit, spread


# -- cubic stabilization identities ---------------------------------------------


@dataclass(frozen=True)
class CubicInvariantsReport:
    K1: float
    K2: float
    K1_spread: float
    K2_spread: float
    measured_sigma_bar: float
    measured_spread: float
    predicted_roots: tuple[float, ...]
    discriminant: float
    residual: float
    identity_value: float


def _require_cubic(model: StressModel) -> None:
    probe = np.linspace(0.25, 2.0, 8)
    if np.max(np.abs(model.sigma(probe) - (probe ** 3 - probe))) > 1e-12:
        raise ValueError("this diagnostic is specific to the stress law p^3 - p")


def cubic_invariants(model: StressModel, traj: Trajectory,
                     c_spread_tol: float = 1e-4) -> CubicInvariantsReport:
    """Internal-consistency check between two independently computed limits.

    Trailing limits K1 of w-mean(p^7/7 - 2 p^5/5 + p^3/3) and K2 of
    w-mean(sigma(p) p - p^2) pin the limiting stress level through

        mu s^2 + (8/3 + 4 K2) s + (8/3) mu - 35 K1 = 0,

    whose roots are compared against the measured stress-mean limit.
    """
    _require_cubic(model)
    mu = float(traj.mass()[0])
    if abs(mu) < 1e-12:
        raise DegenerateDataError(
            "mean strain is zero: the identity loses its leading term"
        )
    c_limit, c_spread = trailing_stats(traj.times, traj.stress_mean, TRAILING_FRAC)
    if c_spread >= c_spread_tol:
        raise NotConvergedError(
            f"stress mean still moves (trailing spread {c_spread:.2e}); "
            "integrate longer before extracting limits"
        )
    p = traj.values
    k1_series = (p ** 7 / 7.0 - 0.4 * p ** 5 + p ** 3 / 3.0) @ traj.weights
    sig = np.asarray(model.sigma(p), dtype=float)
    k2_series = (sig * p - p ** 2) @ traj.weights
    K1, K1_spread = trailing_stats(traj.times, k1_series, TRAILING_FRAC)
    K2, K2_spread = trailing_stats(traj.times, k2_series, TRAILING_FRAC)

    B = 8.0 / 3.0 + 4.0 * K2
    C = 8.0 / 3.0 * mu - 35.0 * K1
    disc = B * B - 4.0 * mu * C
    identity_value = mu * c_limit ** 2 + B * c_limit + C
    if disc >= 0.0:
        r = np.sqrt(disc)
        roots = ((-B - r) / (2.0 * mu), (-B + r) / (2.0 * mu))
        residual = float(min(abs(c_limit - roots[0]), abs(c_limit - roots[1])))
    else:
        roots = ()
        residual = float("inf")
    return CubicInvariantsReport(
        K1=K1, K2=K2, K1_spread=K1_spread, K2_spread=K2_spread,
        measured_sigma_bar=c_limit, measured_spread=c_spread,
        predicted_roots=roots, discriminant=disc, residual=residual,
        identity_value=float(identity_value),
    )


# -- phase fractions -------------------------------------------------------------


@dataclass(frozen=True)
class FractionsHistory:
    times: np.ndarray
    fractions: np.ndarray      # (n_records, n_slots); NaN where c(t) is ambiguous
    residual: np.ndarray       # 1 - sum of fractions
    n_slots: int


def volume_fractions(model: StressModel, traj: Trajectory,
                     eps_band: float | None = None) -> FractionsHistory:
    """Mass fractions near each stress branch at the running stress mean.

    The default band is a quarter of the smallest gap between adjacent branch
    values, so bands never overlap. Records whose stress mean sits within
    tolerance of a critical value get NaN rows (branch identity is ambiguous
    there) and a warning.
    """
    zs, crit_vals = critical_points(model)
    n_slots = len(zs) + 1
    fractions = np.full((traj.n_records, n_slots), np.nan)
    residual = np.full(traj.n_records, np.nan)
    warned = False
    for i in range(traj.n_records):
        c = float(traj.stress_mean[i])
        if len(crit_vals) and np.min(np.abs(crit_vals - c)) < 1e-9 * max(1.0, abs(c)):
            if not warned:
                warnings.warn(
                    "stress mean touches a critical value; branch fractions "
                    "are ambiguous at some records",
                    RuntimeWarning,
                )
                warned = True
            continue
        roots = roots_at(model, c)
        if len(roots) == 0:
            continue
        slots = np.searchsorted(zs, roots) if len(zs) else np.zeros(len(roots), dtype=int)
        if eps_band is not None:
            eps = eps_band
        elif len(roots) > 1:
            eps = 0.25 * float(np.min(np.diff(roots)))
        else:
            eps = np.inf
        row = np.zeros(n_slots)
        for r, slot in zip(roots, slots):
            sel = np.abs(traj.values[i] - r) < eps
            row[slot] = float(np.dot(traj.weights, sel))
        fractions[i] = row
        residual[i] = 1.0 - row.sum()
    return FractionsHistory(times=traj.times, fractions=fractions,
                            residual=residual, n_slots=n_slots)


# -- nondegeneracy checks ---------------------------------------------------------


@dataclass(frozen=True)
class BranchMeanReport:
    nondegenerate: bool
    c_grid: np.ndarray
    branch_mean: np.ndarray
    max_deviation: float


def nc3_check(model: StressModel, mu: float, n_grid: int = 101,
              margin: float = 1e-4) -> BranchMeanReport:
    """For a cubic-like stress (exactly two critical points), tabulate the
    mean of the three branches across the bistable band; the flow cannot
    oscillate forever when this mean misses mu somewhere."""
    zs, crit_vals = critical_points(model)
    if len(zs) != 2 or not (crit_vals[1] < crit_vals[0]):
        raise HypothesisError(
            "branch-mean check needs a cubic-like stress with exactly two "
            "critical points"
        )
    c_minus, c_plus = float(crit_vals[1]), float(crit_vals[0])
    span = c_plus - c_minus
    grid = np.linspace(c_minus + margin * span, c_plus - margin * span, n_grid)
    means = np.empty(n_grid)
    for i, c in enumerate(grid):
        roots = roots_at(model, float(c))
        if len(roots) != 3:
            raise HypothesisError(
                f"expected three branches at stress level {c}, found {len(roots)}"
            )
        means[i] = float(np.mean(roots))
    max_dev = float(np.max(np.abs(means - mu)))
    return BranchMeanReport(
        nondegenerate=bool(max_dev > 1e-8),
        c_grid=grid,
        branch_mean=means,
        max_deviation=max_dev,
    )


@dataclass(frozen=True)
class GramReport:
    independent: bool
    min_eigenvalue: float
    condition: float
    trace: float


def gram_independence(vectors: np.ndarray) -> GramReport:
    """Gram-matrix independence verdict for sampled function vectors."""
    V = np.asarray(vectors, dtype=float)
    gram = V @ V.T / V.shape[1]
    eig = np.linalg.eigvalsh(gram)
    trace = float(np.trace(gram))
    min_eig = float(eig[0])
    cond = float(eig[-1] / eig[0]) if eig[0] > 0 else float("inf")
    return GramReport(
        independent=bool(min_eig > 1e-10 * trace),
        min_eigenvalue=min_eig,
        condition=cond,
        trace=trace,
    )


def nc_linear_independence(model: StressModel, c_interval, n_grid: int = 33) -> GramReport:
    """Sample the branch derivatives 1/sigma'(p_i(c)) on the interval and test
    their linear independence through the Gram spectrum."""
    bs = find_branches(model, c_interval, nc=n_grid)
    derivs = np.empty_like(bs.branches)
    for i in range(bs.count):
        derivs[i] = 1.0 / np.asarray(model.sigma_prime(bs.branches[i]), dtype=float)
    return gram_independence(derivs)


# -- assembled report --------------------------------------------------------------


@dataclass
class AsymptoticsReport:
    c_limit: float
    c_spread: float
    rhs_norm_final: float
    settled: bool
    K1: float | None = None
    K2: float | None = None
    predicted_sigma_bar: tuple[float, ...] | None = None
    measured_sigma_bar: float | None = None
    sigma_bar_residual: float | None = None
    fractions_final: list[float] | None = None
    fractions_residual_final: float | None = None
    nc3_nondegenerate: bool | None = None
    nc_gram_condition: float | None = None
    nc_gram_min_eigenvalue: float | None = None

    def to_dict(self) -> dict:
        return {
            k: (list(v) if isinstance(v, tuple) else v)
            for k, v in self.__dict__.items()
        }


def asymptotics_report(model: StressModel, traj: Trajectory) -> AsymptoticsReport:
    """One-call summary used by the command-line pipeline."""
    c_limit, c_spread = trailing_stats(traj.times, traj.stress_mean, TRAILING_FRAC)
    series, settled = convergence_monitor(traj)
    report = AsymptoticsReport(
        c_limit=c_limit,
        c_spread=c_spread,
        rhs_norm_final=float(series[-1]),
        settled=settled,
    )
    zs, crit_vals = critical_points(model)
    mu = float(traj.mass()[0])
    try:
        cub = cubic_invariants(model, traj)
        report.K1 = cub.K1
        report.K2 = cub.K2
        report.predicted_sigma_bar = cub.predicted_roots
        report.measured_sigma_bar = cub.measured_sigma_bar
        report.sigma_bar_residual = cub.residual
    except (ValueError, DegenerateDataError, NotConvergedError):
        pass
    if len(zs):
        fr = volume_fractions(model, traj)
        last = fr.fractions[-1]
        if np.all(np.isfinite(last)):
            report.fractions_final = [float(x) for x in last]
            report.fractions_residual_final = float(fr.residual[-1])
    if len(zs) == 2:
        try:
            report.nc3_nondegenerate = nc3_check(model, mu).nondegenerate
        except HypothesisError:
            pass
        span = crit_vals[0] - crit_vals[1]
        try:
            gram = nc_linear_independence(
                model,
                (crit_vals[1] + 0.25 * span, crit_vals[0] - 0.25 * span),
                n_grid=17,
            )
            report.nc_gram_condition = gram.condition
            report.nc_gram_min_eigenvalue = gram.min_eigenvalue
        except Exception:
            pass
    elif len(zs) == 0:
        # monotone stress: one branch over any level interval inside the range
        grid = model.grid(257)
        sig = np.asarray(model.sigma(grid), dtype=float)
        lo, hi = float(np.min(sig)), float(np.max(sig))
        try:
            gram = nc_linear_independence(
                model, (lo + 0.4 * (hi - lo), lo + 0.6 * (hi - lo)), n_grid=9
            )
            report.nc_gram_condition = gram.condition
            report.nc_gram_min_eigenvalue = gram.min_eigenvalue
        except Exception:
            pass
    return report
