"""The mean-constrained nonlocal flow dp_i/dt = -sigma(p_i) + sum_j w_j sigma(p_j).

Two steppers with independent mechanics cross-validate each other:

* an explicit embedded Runge-Kutta 5(4) pair with PI step control, step
  rejection on domain exit or ordering violation, and a scalar mass
  renormalization after every accepted step;
* a proximal (implicit Euler) step that solves the stationarity system
  sigma(v_i) + (v_i - p_i)/tau = c under the mass constraint, with a
  per-component bisection inside a bisection on the multiplier c.

The flow conserves the mean strain exactly and dissipates the stored energy;
both facts are enforced (renormalization) or measured (diagnostics) here.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import BracketError, DomainError, StiffnessError, StrainflowError
from .numerics import StepController, _DP_A, _DP_B5, _DP_ERR, bisect_vec, rk45
from .state import SimpleState, Trajectory, state_distance
from .stress_models import POSITIVE, StressModel, eval_W

CONVERGENCE_TOL = 1e-8   # weighted rhs norm below which a state counts as settled
ORDER_SLACK = 1e-12      # roundoff allowance in the ordering guard


def _require_strict_domain(model: StressModel, values: np.ndarray) -> None:
    if model.domain == POSITIVE and np.any(values <= 0.0):
        raise DomainError("the mean-constrained flow needs strictly positive strains")


def rhs(model: StressModel, state: SimpleState) -> np.ndarray:
    """Velocity of the flow; a single vectorized stress evaluation."""
    _require_strict_domain(model, state.values)
    sig = np.asarray(model.sigma(state.values), dtype=float)
    return -sig + float(np.dot(state.weights, sig))


def rhs_norm(model: StressModel, state: SimpleState) -> float:
    v = rhs(model, state)
    return float(np.sqrt(np.dot(state.weights, v * v)))


# -- explicit stepper ---------------------------------------------------------


def _order_permutation(values: np.ndarray) -> np.ndarray:
    return np.argsort(values, kind="stable")


def _ordering_ok(perm: np.ndarray, values: np.ndarray) -> bool:
    v = values[perm]
    scale = max(1.0, float(np.max(np.abs(v))))
    return bool(np.all(np.diff(v) >= -ORDER_SLACK * scale))


def step_explicit(
    model: StressModel,
    state: SimpleState,
    ctrl: StepController,
) -> tuple[SimpleState, float]:
    """One accepted embedded 5(4) step; returns the new state and the step
    actually taken. Steps are rejected (and halved) on error-control failure,
    domain exit, or ordering violation; the accepted state is shifted by a
    scalar to cancel mass drift at roundoff scale."""
    y = state.values.copy()
    w = state.weights
    mu = state.mu
    perm = _order_permutation(y)

    def f(v):
        sig = np.asarray(model.sigma(v), dtype=float)
        return -sig + float(np.dot(w, sig))

    k = np.empty((7, len(y)))
    k[0] = f(y)
    while True:
        dt = ctrl.dt
        for s in range(1, 7):
            k[s] = f(y + dt * (_DP_A[s] @ k[:s]))
        y_new = y + dt * (_DP_B5 @ k)
        err_vec = dt * (_DP_ERR @ k)
        scale = ctrl.atol + ctrl.rtol * np.maximum(np.abs(y), np.abs(y_new))
        err = float(np.sqrt(np.mean((err_vec / scale) ** 2)))
        domain_ok = model.domain != POSITIVE or np.all(y_new > 0.0)
        ok = np.all(np.isfinite(y_new)) and err <= 1.0 and domain_ok
        ok = ok and _ordering_ok(perm, y_new)
        if ok:
            y_new = y_new + (mu - float(np.dot(w, y_new)))  # mass renormalization
            ctrl.after_accept(err)
            return state.with_values(y_new), dt
        ctrl.after_reject(err if np.isfinite(err) else float("nan"))
        if ctrl.dt < ctrl.dt_min:
            raise StiffnessError(
                "explicit step size underflow; the proximal stepper handles "
                "stiff regimes"
            )


# -- proximal (implicit Euler) stepper ----------------------------------------


def prox_step(model: StressModel, state: SimpleState, tau: float) -> SimpleState:
    """Implicit Euler with a mass multiplier.

    Solves sigma(v_i) + (v_i - p_i)/tau = c componentwise with the multiplier
    c fixed by sum_i w_i v_i = mu. Needs tau < 1/lambda so that
    h(v) = sigma(v) + v/tau is strictly increasing on the domain.
    """
    if tau <= 0.0:
        raise ValueError("tau must be positive")
    lam = model.lambda_
    if lam > 0.0 and tau >= 1.0 / lam:
        raise StrainflowError(
            f"tau = {tau} >= 1/lambda = {1.0 / lam}; the proximal map loses "
            "monotonicity"
        )
    p = state.values
    w = state.weights
    mu = state.mu
    _require_strict_domain(model, p)

    def h(v):
        return np.asarray(model.sigma(v), dtype=float) + v / tau

    def h_inverse(targets: np.ndarray) -> np.ndarray:
        lo = p.copy()
        hi = p.copy()
        span = np.maximum(1.0, np.abs(p))
        # expand brackets geometrically; h -> -inf toward the domain floor
        # for blow-up models and h grows at least linearly upward
        for _ in range(200):
            need = h(lo) > targets
            if not np.any(need):
                break
            if model.domain == POSITIVE:
                lo = np.where(need, 0.5 * lo, lo)
            else:
                lo = np.where(need, lo - span, lo)
                span = np.where(need, 2.0 * span, span)
        else:
            raise BracketError("no lower bracket for the proximal inner solve")
        span = np.maximum(1.0, np.abs(p))
        for _ in range(200):
            need = h(hi) < targets
            if not np.any(need):
                break
            hi = np.where(need, hi + span, hi)
            span = np.where(need, 2.0 * span, span)
        else:
            raise BracketError("no upper bracket for the proximal inner solve")
        # bisect to a tight bracket, then finish with bracket-safeguarded
        # Newton (the residual must reach roundoff, and h' is available)
        v = bisect_vec(lambda x: h(x) - targets, lo, hi, xtol=1e-4, max_iter=60)
        scale = np.maximum(1.0, np.abs(v))
        lo = np.maximum(lo, v - 2e-4 * scale)
        hi = np.minimum(hi, v + 2e-4 * scale)
        for _ in range(40):
            res = h(v) - targets
            above = res > 0.0
            hi = np.where(above, v, hi)
            lo = np.where(above, lo, v)
            hp = np.asarray(model.sigma_prime(v), dtype=float) + 1.0 / tau
            v_new = v - res / hp
            inside = (v_new > lo) & (v_new < hi)
            v_new = np.where(inside, v_new, 0.5 * (lo + hi))
            done = np.max(np.abs(v_new - v) / np.maximum(1.0, np.abs(v_new)))
            v = v_new
            if done < 1e-15:
                break
        return v

    sig = np.asarray(model.sigma(p), dtype=float)
    spread0 = max(1.0, float(np.max(sig) - np.min(sig)))
    c_lo = float(np.min(sig)) - spread0
    c_hi = float(np.max(sig)) + spread0
    spread = spread0
    for _ in range(80):
        if float(np.dot(w, h_inverse(c_lo + p / tau))) <= mu:
            break
        c_lo -= spread
        spread *= 2.0
    else:
        raise BracketError("no lower bracket for the mass multiplier")
    spread = spread0
    for _ in range(80):
        if float(np.dot(w, h_inverse(c_hi + p / tau))) >= mu:
            break
        c_hi += spread
        spread *= 2.0
    else:
        raise BracketError("no upper bracket for the mass multiplier")

    # bisection on the multiplier, accelerated by Newton steps kept inside
    # the shrinking bracket (the mass map is strictly increasing in c)
    c = 0.5 * (c_lo + c_hi)
    v = h_inverse(c + p / tau)
    for _ in range(200):
        m = float(np.dot(w, v))
        if abs(m - mu) <= 1e-12 * max(1.0, abs(mu)):
            break
        if m < mu:
            c_lo = c
        else:
            c_hi = c
        hp = np.asarray(model.sigma_prime(v), dtype=float) + 1.0 / tau
        eta_prime = float(np.dot(w, 1.0 / hp))
        c_new = c + (mu - m) / eta_prime if eta_prime > 0 else 0.5 * (c_lo + c_hi)
        if not (c_lo < c_new < c_hi):
            c_new = 0.5 * (c_lo + c_hi)
        if c_hi - c_lo <= 1e-15 * max(1.0, abs(c_hi)):
            c = c_new
            v = h_inverse(c + p / tau)
            break
        c = c_new
        v = h_inverse(c + p / tau)
    v = v + (mu - float(np.dot(w, v)))  # exact mass
    return state.with_values(v)


# -- trajectory driver --------------------------------------------------------


def _record_grid(t_final: float, record_every: float | None, n_records: int | None):
    if record_every is not None:
        grid = np.arange(0.0, t_final + 0.5 * record_every, record_every)
        if grid[-1] < t_final:
            grid = np.append(grid, t_final)
        grid[-1] = t_final
        return grid
    n = n_records or 201
    return np.linspace(0.0, t_final, n)


def _diagnostics(model: StressModel, times, values, weights, diss_cum, metadata,
                 n_steps=None) -> Trajectory:
    sig = np.asarray(model.sigma(values), dtype=float)
    c = sig @ weights
    vel = -sig + c[:, None]
    diss_rate = (vel ** 2) @ weights
    energy = np.asarray(eval_W(model, values.ravel()), dtype=float).reshape(sig.shape) @ weights
    if n_steps is not None:
        metadata = dict(metadata, n_steps=n_steps)
    return Trajectory(
        times=np.asarray(times, dtype=float),
        values=values,
        weights=weights,
        stress_mean=c,
        energy=energy,
        dissipation=diss_rate,
        dissipation_cum=np.asarray(diss_cum, dtype=float),
        metadata=metadata,
        converged=bool(np.sqrt(diss_rate[-1]) < CONVERGENCE_TOL),
    )


def integrate(
    model: StressModel,
    state0: SimpleState,
    t_final: float,
    stepper: str = "rk45",
    record_every: float | None = None,
    n_records: int | None = None,
    rtol: float = 1e-9,
    atol: float = 1e-12,
    tau: float = 1e-2,
) -> Trajectory:
    """Advance the nonlocal flow to ``t_final`` recording on a uniform grid.

    Stepper failures mid-run do not raise: the partial trajectory is returned
    with the failure recorded under ``metadata["error"]``.
    """
    if t_final <= 0.0:
        raise ValueError("t_final must be positive")
    _require_strict_domain(model, state0.values)
    w = state0.weights
    mu = state0.mu
    grid = _record_grid(t_final, record_every, n_records)
    meta = {
        "kind": "displacement",
        "model": model.spec,
        "stepper": stepper,
        "mu": mu,
        "t_final": t_final,
        "rtol": rtol,
        "atol": atol,
        "tau": tau if stepper == "prox" else None,
    }

    if stepper == "rk45":
        perm = _order_permutation(state0.values)

        def f(v):
            sig = np.asarray(model.sigma(v), dtype=float)
            return -sig + float(np.dot(w, sig))

        def accept(y_old, y_new):
            if model.domain == POSITIVE and not np.all(y_new > 0.0):
                return False
            return _ordering_ok(perm, y_new)

        def renorm(y):
            return y + (mu - float(np.dot(w, y)))

        try:
            res = rk45(
                f, state0.values, grid, rtol=rtol, atol=atol,
                accept_state=accept, postprocess=renorm,
                stage_rate=lambda k: float(np.dot(w, k * k)),
            )
            values, diss_cum, n_done = res.states, res.aux_integral, len(grid)
            n_steps = res.n_steps
        except StrainflowError as exc:
            # salvage whatever was recorded before the failure
            partial = _partial_rk(model, state0, grid, rtol, atol, w, mu, perm)
            values, diss_cum, n_done = partial
            meta["error"] = str(exc)
            n_steps = None
        traj_values = values[:n_done]
        return _diagnostics(model, grid[:n_done], traj_values, w,
                            diss_cum[:n_done], meta, n_steps)

    if stepper == "prox":
        values = np.empty((len(grid), state0.n))
        diss_cum = np.zeros(len(grid))
        values[0] = state0.values
        state = state0
        total = 0.0
        t = 0.0
        idx = 1
        try:
            while idx < len(grid):
                dt = min(tau, grid[idx] - t)
                new_state = prox_step(model, state, dt)
                total += float(np.dot(w, (new_state.values - state.values) ** 2)) / dt
                state = new_state
                t += dt
                while idx < len(grid) and t >= grid[idx] - 1e-12 * max(1.0, t):
                    values[idx] = state.values
                    diss_cum[idx] = total
                    idx += 1
        except StrainflowError as exc:
            meta["error"] = str(exc)
        return _diagnostics(model, grid[:idx], values[:idx], w, diss_cum[:idx], meta)

    raise ValueError(f"unknown stepper {stepper!r}")


def _partial_rk(model, state0, grid, rtol, atol, w, mu, perm):
    """Re-run record by record to salvage the prefix before a failure."""
    values = np.empty((len(grid), state0.n))
    diss_cum = np.zeros(len(grid))
    values[0] = state0.values
    y = state0.values
    n_done = 1

    def f(v):
        sig = np.asarray(model.sigma(v), dtype=float)
        return -sig + float(np.dot(w, sig))

    for i in range(1, len(grid)):
        try:
            res = rk45(
                f, y, np.array([grid[i - 1], grid[i]]), rtol=rtol, atol=atol,
                accept_state=lambda a, b: (model.domain != POSITIVE or np.all(b > 0.0))
                and _ordering_ok(perm, b),
                postprocess=lambda v: v + (mu - float(np.dot(w, v))),
                stage_rate=lambda k: float(np.dot(w, k * k)),
            )
        except StrainflowError:
            break
        y = res.states[-1]
        values[i] = y
        diss_cum[i] = diss_cum[i - 1] + res.aux_integral[-1]
        n_done = i + 1
    return values, diss_cum, n_done


# -- initial data -------------------------------------------------------------


def approximate_initial_data(p0_samples, n_values: int) -> tuple[SimpleState, np.ndarray]:
    """Strictly positive simple approximation of sampled nonnegative data.

    Level-quantizes the sorted samples into ``n_values`` blocks (each block
    keeps its minimum, so the quantization is a nondecreasing minorant), then
    rescales (q + 1/N) to carry exactly the sample mean. Returns the state and
    the block assignment of every original sample, for reconstructing fields.
    """
    from .errors import DegenerateDataError

    samples = np.asarray(p0_samples, dtype=float)
    if samples.ndim != 1 or len(samples) == 0:
        raise ValueError("p0_samples must be a non-empty 1-d array")
    if np.any(samples < 0.0):
        raise DomainError("samples must be nonnegative")
    mu = float(np.mean(samples))
    if mu <= 0.0:
        raise DegenerateDataError("data carries no mass (zero mean)")
    m = len(samples)
    n = int(min(n_values, m))
    if n < 1:
        raise ValueError("need at least one level")

    order = np.argsort(samples, kind="stable")
    sorted_vals = samples[order]
    edges = np.round(np.linspace(0, m, n + 1)).astype(int)
    edges = np.unique(edges)
    q_levels = np.array([sorted_vals[a] for a in edges[:-1]])  # block minima
    counts = np.diff(edges)

    # merge duplicate levels (a constant field quantizes to one value)
    levels: list[float] = []
    weights: list[float] = []
    block_of = np.empty(len(q_levels), dtype=int)
    for i, (q, cnt) in enumerate(zip(q_levels, counts)):
        if levels and q == levels[-1]:
            weights[-1] += cnt / m
        else:
            levels.append(float(q))
            weights.append(cnt / m)
        block_of[i] = len(levels) - 1

    q = np.array(levels)
    wts = np.array(weights)
    qbar = float(np.dot(wts, q))
    nn = float(n)
    vals = mu * (q + 1.0 / nn) / (qbar + 1.0 / nn)
    vals = vals + (mu - float(np.dot(wts, vals)))  # exact mass

    # assignment of each original sample to its merged block
    raw_block = np.searchsorted(edges, np.arange(m), side="right") - 1
    assignment = np.empty(m, dtype=int)
    assignment[order] = block_of[raw_block]
    return SimpleState(values=vals, weights=wts), assignment


def seeded_state(model: StressModel, n: int, mu: float, seed: int,
                 lo: float | None = None, hi: float | None = None) -> SimpleState:
    """Reproducible random equal-weight state with mean exactly ``mu``."""
    rng = np.random.default_rng(seed)
    if model.domain == POSITIVE:
        lo = 0.05 if lo is None else lo
        hi = 2.5 if hi is None else hi
        raw = rng.uniform(lo, hi, n)
        raw = raw * (mu * n / raw.sum())  # multiplicative: keeps positivity
    else:
        lo = -1.5 if lo is None else lo
        hi = 2.5 if hi is None else hi
        raw = rng.uniform(lo, hi, n)
        raw = raw + (mu - raw.mean())
    state = SimpleState.uniform(raw)
    return state.with_values(raw + (mu - state.mu))


# -- rearrangement and contraction --------------------------------------------


def rearrange(state: SimpleState) -> tuple[SimpleState, np.ndarray]:
    """Nondecreasing rearrangement; the permutation is the discrete
    measure-preserving map back to the original labelling (stable on ties)."""
    perm = np.argsort(state.values, kind="stable")
    return SimpleState(values=state.values[perm], weights=state.weights[perm]), perm


@dataclass(frozen=True)
class GronwallReport:
    ratio_max: float
    lam: float
    passed: bool
    times: np.ndarray
    ratios: np.ndarray


def gronwall_check(
    model: StressModel,
    state_a: SimpleState,
    state_b: SimpleState,
    t_final: float,
    rtol: float = 1e-10,
    atol: float = 1e-13,
    n_records: int = 41,
) -> GronwallReport:
    """Ratio of squared distances ||A(t)-B(t)||^2 / (e^{2 lambda t} ||A0-B0||^2)
    along two runs; PASS when it never exceeds 1 + 1e-6."""
    if not np.allclose(state_a.weights, state_b.weights, rtol=0, atol=1e-15):
        raise ValueError("both states must carry the same weights")
    lam = model.lambda_
    d0 = state_distance(state_a, state_b)
    ta = integrate(model, state_a, t_final, n_records=n_records, rtol=rtol, atol=atol)
    tb = integrate(model, state_b, t_final, n_records=n_records, rtol=rtol, atol=atol)
    for tr in (ta, tb):
        if "error" in tr.metadata:
            raise StiffnessError(f"member run failed: {tr.metadata['error']}")
    w = state_a.weights
    d2 = ((ta.values - tb.values) ** 2) @ w
    if d0 == 0.0:
        ratios = np.zeros_like(d2)  # identical data: uniqueness, guarded ratio
    else:
        ratios = d2 / (np.exp(2.0 * lam * ta.times) * d0 * d0)
    ratio_max = float(np.max(ratios))
    return GronwallReport(
        ratio_max=ratio_max,
        lam=lam,
        passed=bool(ratio_max <= 1.0 + 1e-6),
        times=ta.times,
        ratios=ratios,
    )
