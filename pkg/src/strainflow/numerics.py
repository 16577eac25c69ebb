"""Low-level numerical kernels.

Bracketed root finding (scalar and vectorized), adaptive quadrature built on
interval halving with interior-node panels (so integrable endpoint
singularities never get sampled), truncated improper integrals with geometric
tail extrapolation, and an embedded Runge-Kutta 5(4) driver with PI step-size
control. Everything here is independent of the stress-model layer, so the
higher modules can cross-check each other through these primitives.
"""

from __future__ import annotations

import heapq
from dataclasses import dataclass

import numpy as np

from .errors import BracketError, IntegrabilityError, StiffnessError

# 5-point Gauss-Legendre rule on (-1, 1). All nodes are interior, which lets
# the adaptive scheme integrate up to an endpoint where the integrand is
# singular-but-integrable (it is never evaluated there).
_GL_NODES = np.array(
    [
        -0.906179845938663993,
        -0.538469310105683091,
        0.0,
        0.538469310105683091,
        0.906179845938663993,
    ]
)
_GL_WEIGHTS = np.array(
    [
        0.236926885056189088,
        0.478628670499366468,
        0.568888888888888889,
        0.478628670499366468,
        0.236926885056189088,
    ]
)


def _panel(f, a: float, b: float) -> float:
    mid = 0.5 * (a + b)
    half = 0.5 * (b - a)
    return half * float(np.dot(_GL_WEIGHTS, f(mid + half * _GL_NODES)))


def quad_adaptive(f, a: float, b: float, tol: float = 1e-10, max_panels: int = 4096) -> float:
    """Integrate ``f`` over (a, b) to absolute tolerance ``tol``.

    Globally adaptive interval halving on 5-point Gauss panels: the panel
    with the largest error estimate is split until the summed estimates meet
    the tolerance. The global budget keeps work bounded even when roundoff
    noise in ``f`` makes local tolerances unreachable. ``f`` must accept
    numpy arrays; endpoints are never evaluated, so integrable endpoint
    singularities are fine.
    """
    if a == b:
        return 0.0
    sign = 1.0
    if b < a:
        a, b = b, a
        sign = -1.0

    def make(a0: float, b0: float, whole: float):
        m = 0.5 * (a0 + b0)
        left = _panel(f, a0, m)
        right = _panel(f, m, b0)
        halves = left + right
        err = abs(halves - whole)
        if not np.isfinite(halves):
            err = float("inf")
        value = halves + (halves - whole) / 1023.0  # Richardson, order-10 rule
        splittable = (b0 - a0) > 1e-15 * max(abs(a0), abs(b0)) + 1e-300
        return err, a0, b0, m, left, right, value, splittable

    counter = 0
    heap = []  # refinable panels, worst first
    err_sum = 0.0
    total = 0.0

    def push(nd):
        nonlocal counter, err_sum, total
        total += nd[6]
        err_sum += nd[0] if np.isfinite(nd[0]) else 0.0
        if nd[7] and np.isfinite(nd[0]):
            heapq.heappush(heap, (-nd[0], counter, nd))
        elif not np.isfinite(nd[6]):
            raise IntegrabilityError(
                f"integrand not finite and not resolvable on ({nd[1]!r}, {nd[2]!r})"
            )
        counter += 1

    push(make(a, b, _panel(f, a, b)))
    n_panels = 1
    while heap and n_panels < max_panels and err_sum > tol:
        neg_err, _, nd = heapq.heappop(heap)
        err, a0, b0, m, left, right, value, _ = nd
        if not np.isfinite(value):
            raise IntegrabilityError(f"integrand not finite on ({a0!r}, {b0!r})")
        total -= value
        err_sum -= err
        push(make(a0, m, left))
        push(make(m, b0, right))
        n_panels += 1
    return sign * total


def quad_to_infinity(
    f,
    a: float,
    tol: float = 1e-9,
    max_segments: int = 64,
    ratio_cap: float = 0.8,
) -> float:
    """Integrate ``f`` over (a, infinity).

    Sums panel integrals over geometrically doubling segments and closes the
    remainder with a geometric-series extrapolation of the last segment. The
    Cauchy test for convergence is that segment sums decay with a stable
    ratio below ``ratio_cap``; when they refuse to decay the integral is
    declared divergent.
    """
    seg_len = max(1.0, abs(a))
    lo = float(a)
    total = 0.0
    seg_values: list[float] = []
    for _ in range(max_segments):
        hi = lo + seg_len
        part = quad_adaptive(f, lo, hi, tol=tol / 16.0)
        seg_values.append(part)
        total += part
        if len(seg_values) >= 2:
            prev, cur = abs(seg_values[-2]), abs(seg_values[-1])
            ratio = cur / prev if prev > 0 else 0.0
            if cur <= tol / 4.0 and ratio <= ratio_cap:
                return total + seg_values[-1] * ratio / (1.0 - ratio)
            if len(seg_values) >= 5:
                recent = [abs(v) for v in seg_values[-4:]]
                ratios = [
                    recent[i + 1] / recent[i] if recent[i] > 0 else 0.0
                    for i in range(3)
                ]
                if min(ratios) > ratio_cap:
                    raise IntegrabilityError(
                        "tail segments of the improper integral do not decay "
                        f"(recent ratios {ratios}); integral treated as divergent"
                    )
        lo = hi
        seg_len *= 2.0
    raise IntegrabilityError(
        "improper integral did not converge within the segment budget"
    )


def bisect_root(f, lo: float, hi: float, xtol: float = 1e-12, max_iter: int = 200) -> float:
    """Root of a scalar function on a sign-changing bracket [lo, hi].

    Signs are compared directly, never through products, which would
    underflow to zero for subnormal function values and corrupt the bracket.
    """
    flo = float(f(lo))
    fhi = float(f(hi))
    if flo == 0.0:
        return lo
    if fhi == 0.0:
        return hi
    if (flo > 0.0) == (fhi > 0.0):
        raise BracketError(f"no sign change on [{lo!r}, {hi!r}]")
    for _ in range(max_iter):
        mid = 0.5 * (lo + hi)
        fm = float(f(mid))
        if fm == 0.0:
            return mid
        if (fm > 0.0) == (flo > 0.0):
            lo, flo = mid, fm
        else:
            hi = mid
        if hi - lo <= xtol * max(1.0, abs(lo), abs(hi)):
            break
    return 0.5 * (lo + hi)


def bisect_vec(f, lo: np.ndarray, hi: np.ndarray, xtol: float = 1e-13, max_iter: int = 120) -> np.ndarray:
    """Componentwise bisection for a vectorized monotone-increasing ``f``.

    Brackets must satisfy f(lo) <= 0 <= f(hi) componentwise.
    """
    lo = np.array(lo, dtype=float)
    hi = np.array(hi, dtype=float)
    flo = np.asarray(f(lo), dtype=float)
    fhi = np.asarray(f(hi), dtype=float)
    if np.any(flo > 0.0) or np.any(fhi < 0.0):
        raise BracketError("vector bisection called with invalid brackets")
    for _ in range(max_iter):
        mid = 0.5 * (lo + hi)
        fm = np.asarray(f(mid), dtype=float)
        take_hi = fm > 0.0
        hi = np.where(take_hi, mid, hi)
        lo = np.where(take_hi, lo, mid)
        if np.all(hi - lo <= xtol * np.maximum(1.0, np.maximum(np.abs(lo), np.abs(hi)))):
            break
    return 0.5 * (lo + hi)


class CumulativeCurve:
    """Monotone cumulative integral x -> ``base`` + int_{x0}^{x} f(z) dz.

    Panel sums are precomputed on a fixed node grid so that point values cost
    one short local quadrature, and inversion costs a table lookup plus a few
    safeguarded Newton steps (the derivative is ``f`` itself).
    Requires f > 0 between the nodes.
    """

    def __init__(self, f, nodes: np.ndarray, tol: float = 1e-10, base: float = 0.0, x0: float | None = None):
        self.f = f
        self.nodes = np.asarray(nodes, dtype=float)
        if np.any(np.diff(self.nodes) <= 0):
            raise ValueError("nodes must be strictly increasing")
        self.tol = tol
        start = self.nodes[0] if x0 is None else x0
        panels = [quad_adaptive(f, start, self.nodes[0], tol=tol)] if x0 is not None else [0.0]
        for a, b in zip(self.nodes[:-1], self.nodes[1:]):
            panels.append(quad_adaptive(f, a, b, tol=tol))
        self.cum = base + np.cumsum(panels)

    def value(self, x: float) -> float:
        j = int(np.clip(np.searchsorted(self.nodes, x) - 1, 0, len(self.nodes) - 1))
        return self.cum[j] + quad_adaptive(self.f, self.nodes[j], x, tol=self.tol)

    @property
    def max_value(self) -> float:
        return float(self.cum[-1])

    def invert(self, target: float, xtol: float = 1e-12) -> float:
        """Solve value(x) = target; clips to the tabulated range."""
        if target <= self.cum[0]:
            return float(self.nodes[0])
        if target >= self.cum[-1]:
            return float(self.nodes[-1])
        j = int(np.searchsorted(self.cum, target) - 1)
        anchor = float(self.nodes[j])      # fixed left anchor of the panel
        g_anchor = float(self.cum[j])
        lo, hi = anchor, float(self.nodes[j + 1])
        x = 0.5 * (lo + hi)
        for _ in range(120):
            gx = g_anchor + quad_adaptive(self.f, anchor, x, tol=self.tol)
            if gx < target:
                lo = x
            else:
                hi = x
            if abs(gx - target) <= 1e-14 * max(1.0, abs(target)):
                return x
            deriv = float(self.f(np.array([x]))[0])
            if np.isfinite(deriv) and deriv > 0:
                x_new = x - (gx - target) / deriv
            else:
                x_new = 0.5 * (lo + hi)
            if not (lo < x_new < hi):
                x_new = 0.5 * (lo + hi)
            if hi - lo <= xtol * max(1.0, abs(hi)):
                return x_new
            x = x_new
        return x


# --- embedded Runge-Kutta 5(4), Dormand-Prince coefficients ---

_DP_C = np.array([0.0, 1 / 5, 3 / 10, 4 / 5, 8 / 9, 1.0, 1.0])
_DP_A = [
    np.array([]),
    np.array([1 / 5]),
    np.array([3 / 40, 9 / 40]),
    np.array([44 / 45, -56 / 15, 32 / 9]),
    np.array([19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729]),
    np.array([9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656]),
    np.array([35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84]),
]
_DP_B5 = np.array([35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84, 0.0])
_DP_ERR = np.array(
    [71 / 57600, 0.0, -71 / 16695, 71 / 1920, -17253 / 339200, 22 / 525, -1 / 40]
)


@dataclass
class StepController:
    """PI step-size controller state for the embedded 5(4) pair."""

    rtol: float = 1e-9
    atol: float = 1e-12
    dt: float = 1e-4
    dt_min: float = 1e-14
    dt_max: float = float("inf")
    safety: float = 0.9
    err_prev: float = 1.0

    def after_accept(self, err: float) -> None:
        err = max(err, 1e-12)
        factor = self.safety * err ** (-0.7 / 5.0) * self.err_prev ** (0.4 / 5.0)
        self.dt = min(self.dt * min(5.0, max(0.2, factor)), self.dt_max)
        self.err_prev = err

    def after_reject(self, err: float) -> None:
        if np.isfinite(err) and err > 0:
            self.dt *= max(0.2, self.safety * err ** (-1.0 / 5.0))
        else:
            self.dt *= 0.25


@dataclass
class RKResult:
    times: np.ndarray
    states: np.ndarray          # (n_records, dim)
    aux_integral: np.ndarray    # cumulative integral of the aux rate at records
    n_steps: int = 0
    n_rejected: int = 0


def rk45(
    f,
    y0: np.ndarray,
    t_record: np.ndarray,
    rtol: float = 1e-9,
    atol: float = 1e-12,
    accept_state=None,
    postprocess=None,
    stage_rate=None,
    dt_min: float = 1e-14,
    dt_max: float = float("inf"),
) -> RKResult:
    """Adaptive Dormand-Prince 5(4) integration recording at ``t_record``.

    ``accept_state(y_old, y_new)`` can veto a step (domain exits, ordering);
    vetoed steps are retried with half the step size. ``postprocess(y)`` runs
    after each accepted step (e.g. mass renormalization). ``stage_rate(k)``
    maps a stage derivative vector to a scalar rate whose time integral is
    accumulated with the same fifth-order weights (used for dissipation).
    """
    t_record = np.asarray(t_record, dtype=float)
    if t_record.ndim != 1 or len(t_record) == 0:
        raise ValueError("t_record must be a non-empty 1-d array")
    if np.any(np.diff(t_record) <= 0):
        raise ValueError("t_record must be strictly increasing")

    y = np.array(y0, dtype=float)
    dim = y.shape[0]
    t = float(t_record[0])
    records = np.empty((len(t_record), dim))
    aux = np.zeros(len(t_record))
    records[0] = y
    aux_total = 0.0

    ctrl = StepController(rtol=rtol, atol=atol, dt_min=dt_min, dt_max=dt_max)
    span = t_record[-1] - t_record[0]
    ctrl.dt = min(1e-4 * max(1.0, span), span)

    k = np.empty((7, dim))
    k[0] = f(y)
    fsal_valid = True
    n_steps = 0
    n_rejected = 0
    idx = 1
    while idx < len(t_record):
        t_next = float(t_record[idx])
        dt = min(ctrl.dt, t_next - t)
        clamped = dt < ctrl.dt
        if not fsal_valid:
            k[0] = f(y)
            fsal_valid = True
        for s in range(1, 7):
            ys = y + dt * (_DP_A[s] @ k[:s])
            k[s] = f(ys)
        y_new = y + dt * (_DP_B5 @ k)
        err_vec = dt * (_DP_ERR @ k)
        scale = atol + rtol * np.maximum(np.abs(y), np.abs(y_new))
        err = float(np.sqrt(np.mean((err_vec / scale) ** 2)))

        bad = (not np.isfinite(err)) or (not np.all(np.isfinite(y_new))) or err > 1.0
        if not bad and accept_state is not None and not accept_state(y, y_new):
            bad = True
            err = float("nan")
        if bad:
            n_rejected += 1
            ctrl.after_reject(err)
            # k[0] still holds f at the unchanged y, so FSAL stays valid
            if ctrl.dt < dt_min:
                raise StiffnessError(
                    f"step size underflow at t={t!r} (dt={ctrl.dt!r})"
                )
            continue

        if stage_rate is not None:
            rates = np.array([stage_rate(k[s]) for s in range(7)])
            aux_total += dt * float(_DP_B5 @ rates)
        t += dt
        n_steps += 1
        k[0] = k[6]  # FSAL
        y = y_new
        if postprocess is not None:
            y2 = postprocess(y)
            if y2 is not y and not np.array_equal(y2, y):
                y = y2
                fsal_valid = False
            else:
                y = y2
        if not clamped:
            ctrl.after_accept(err)
        while idx < len(t_record) and t >= t_record[idx] - 1e-14 * max(1.0, abs(t)):
            records[idx] = y
            aux[idx] = aux_total
            idx += 1
    return RKResult(times=t_record, states=records, aux_integral=aux, n_steps=n_steps, n_rejected=n_rejected)


def trailing_stats(times: np.ndarray, series: np.ndarray, frac: float = 0.1) -> tuple[float, float]:
    """Mean and spread (max - min) of a series over the last ``frac`` of time."""
    times = np.asarray(times, dtype=float)
    series = np.asarray(series, dtype=float)
    t_cut = times[-1] - frac * (times[-1] - times[0])
    window = series[times >= t_cut]
    if len(window) == 0:
        window = series[-1:]
    return float(np.mean(window)), float(np.max(window) - np.min(window))
