import numpy as np
import pytest
from scipy.integrate import quad

from strainflow.bounds import mixed_lower, mixed_upper
from strainflow.errors import DomainError
from strainflow.mixed import reconstruct_y, solve_field, solve_pointwise
from strainflow.stress_models import eval_W, make_model


@pytest.fixture(scope="module")
def linear():
    return make_model("linear")


@pytest.fixture(scope="module")
def quadratic_singular():
    return make_model("poly", coeffs=[1.0, 0.0, 0.0], kappa=1.0)  # p^2 - 1/p


class TestPointwise:
    @pytest.mark.parametrize("p0", [0.1, 3.0, 10.0])
    def test_linear_exact_solution(self, linear, p0):
        t = np.linspace(0.0, 20.0, 81)
        sol = solve_pointwise(linear, p0, t, rtol=1e-11, atol=1e-13)
        exact = 1.0 + (p0 - 1.0) * np.exp(-t)
        assert np.max(np.abs(sol.values - exact)) < 1e-8

    def test_limit_classification_on_long_horizon(self, linear):
        t = np.linspace(0.0, 40.0, 81)
        sol = solve_pointwise(linear, 10.0, t)
        assert sol.limit_root == pytest.approx(1.0, abs=1e-9)

    def test_root_is_rest_point(self):
        cubic = make_model("cubic")
        t = np.linspace(0.0, 5.0, 11)
        for root in (-1.0, 0.0, 1.0):
            sol = solve_pointwise(cubic, root, t) if root >= 0 else None
            if sol is not None:
                assert np.allclose(sol.values, root, atol=1e-12)

    def test_zero_start_log_model_bootstrap(self):
        model = make_model("log")
        t = np.concatenate([[0.0], np.geomspace(1e-3, 2.0, 25)])
        sol = solve_pointwise(model, 0.0, t)
        assert sol.method == "quadrature-inversion"
        assert sol.values[0] == 0.0
        assert np.all(sol.values[1:] > 0.0)
        # oracle: the travel-time relation, checked by independent quadrature
        for ti, pi in zip(t[1:6], sol.values[1:6]):
            val, _ = quad(lambda z: -1.0 / np.log(z), 0.0, pi)
            assert val == pytest.approx(ti, rel=1e-5, abs=1e-9)

    def test_negative_start_rejected(self, linear):
        with pytest.raises(DomainError):
            solve_pointwise(linear, -0.5, np.linspace(0, 1, 5))

    def test_monotone_dependence_on_initial_value(self, quadratic_singular):
        t = np.linspace(0.0, 3.0, 13)
        p0s = np.linspace(0.2, 4.0, 9)
        finals = [
            solve_pointwise(quadratic_singular, p0, t).values
            for p0 in p0s
        ]
        finals = np.array(finals)
        for j in range(len(t)):
            assert np.all(np.diff(finals[:, j]) >= -1e-9)

    def test_invariant_interval(self, quadratic_singular):
        # sigma(eps) < 0 < sigma(C) keeps the flow inside [eps, C]
        eps, big = 0.5, 3.0
        assert quadratic_singular.sigma(np.array([eps]))[0] < 0
        assert quadratic_singular.sigma(np.array([big]))[0] > 0
        t = np.linspace(0.0, 10.0, 41)
        for p0 in (eps, 1.7, big):
            vals = solve_pointwise(quadratic_singular, p0, t).values
            assert np.all(vals >= eps - 1e-9)
            assert np.all(vals <= big + 1e-9)


class TestFieldSolve:
    def test_rest_field_stays_put(self):
        cubic = make_model("cubic")
        t = np.linspace(0.0, 4.0, 9)
        traj, limit = solve_field(cubic, [1.0, 1.0, 0.0], t)
        assert np.allclose(traj.values, traj.values[0], atol=1e-12)
        assert np.allclose(traj.energy, traj.energy[0], atol=1e-12)

    def test_limits_are_roots_within_universal_bounds(self, quadratic_singular):
        rng = np.random.default_rng(7)
        t1 = 1.0
        lower, _ = mixed_lower(quadratic_singular, np.array([t1]))
        upper, _ = mixed_upper(quadratic_singular, np.array([t1]))
        p0 = rng.uniform(lower[0], upper[0], 12)
        t = np.concatenate([[0.0], np.geomspace(1e-3, 60.0, 40)])
        traj, limit = solve_field(quadratic_singular, p0, t)
        sig_res = np.abs(quadratic_singular.sigma(limit))
        assert np.all(sig_res < 1e-6)

    def test_energy_trace_nonincreasing(self, quadratic_singular):
        rng = np.random.default_rng(3)
        p0 = rng.uniform(0.3, 3.0, 8)
        t = np.linspace(0.0, 10.0, 101)
        traj, _ = solve_field(quadratic_singular, p0, t)
        assert np.all(np.diff(traj.energy) <= 1e-10)

    def test_enclosure_between_universal_bounds(self, quadratic_singular):
        rng = np.random.default_rng(11)
        p0 = np.concatenate([[0.0], rng.uniform(0.05, 6.0, 10)])
        t = np.concatenate([[0.0], np.geomspace(1e-3, 20.0, 30)])
        traj, _ = solve_field(quadratic_singular, p0, t)
        lower, _ = mixed_lower(quadratic_singular, t[1:])
        upper, _ = mixed_upper(quadratic_singular, t[1:])
        assert np.all(traj.values[1:].min(axis=1) >= lower - 1e-12)
        assert np.all(traj.values[1:].max(axis=1) <= upper + 1e-12)

    def test_energy_limit_toward_zero_time(self):
        # int W(p(t)) -> int W(p0) as t -> 0+, tested by refinement
        model = make_model("log")
        p0 = np.array([0.0, 0.5, 2.0, 3.0])
        w0 = np.mean([eval_W(model, max(p, 1e-12)) for p in p0])
        t = np.concatenate([[0.0], np.geomspace(1e-6, 1.0, 25)])
        traj, _ = solve_field(model, p0, t)
        gaps = np.abs(traj.energy[1:] - w0)
        # errors shrink as the record times shrink toward zero
        assert gaps[0] < 1e-4
        assert gaps[0] < gaps[-1]


class TestReconstructY:
    def test_constant_field(self):
        mu = 0.7
        p = np.full(11, mu)
        y = reconstruct_y(p)
        assert np.allclose(y, mu * np.linspace(0, 1, 11), atol=1e-15)

    def test_zero_field(self):
        assert np.allclose(reconstruct_y(np.zeros(5)), 0.0)

    def test_step_field_matches_trapezoid_oracle(self):
        p = np.where(np.linspace(0, 1, 21) < 0.5, 0.4, 1.6)
        y = reconstruct_y(p)
        dx = 1.0 / 20
        oracle = np.concatenate([[0.0], np.cumsum(0.5 * dx * (p[1:] + p[:-1]))])
        assert np.allclose(y, oracle, atol=1e-15)
        # away from the jump cell the slopes equal the two field values
        slopes = np.diff(y) / dx
        assert np.allclose(slopes[:9], 0.4, atol=1e-12)
        assert np.allclose(slopes[-9:], 1.6, atol=1e-12)
