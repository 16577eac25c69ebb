import numpy as np
import pytest
from scipy.integrate import quad

from strainflow.bounds import (
    bounds_profile,
    certify_lower_constants,
    certify_upper_threshold,
    displacement_lower,
    displacement_upper,
    mixed_lower,
    mixed_upper,
)
from strainflow.errors import CertificationError, HypothesisError, IntegrabilityError
from strainflow.stress_models import make_model


@pytest.fixture(scope="module")
def hyperbolic():
    return make_model("hyperbolic")


@pytest.fixture(scope="module")
def singular():
    return make_model("singular-cubic", kappa=0.5)


@pytest.fixture(scope="module")
def cubic():
    return make_model("cubic")


class TestMixedLower:
    def test_hyperbolic_closed_form(self, hyperbolic):
        # sigma = p - 1/p: g(p) = -0.5 ln(1 - p^2), inverse sqrt(1 - e^{-2t})
        t = np.geomspace(1e-4, 50.0, 60)
        curve, consts = mixed_lower(hyperbolic, t)
        exact = np.minimum(1.0, np.sqrt(1.0 - np.exp(-2.0 * t)))
        assert consts["p_minus"] == pytest.approx(1.0, abs=1e-10)
        assert np.max(np.abs(curve - exact)) < 2e-6

    def test_saturates_at_smallest_root(self, hyperbolic):
        t = np.array([50.0, 200.0, 1000.0])
        curve, consts = mixed_lower(hyperbolic, t)
        assert np.allclose(curve, consts["p_minus"], atol=1e-5)

    def test_log_model_against_quadrature_oracle(self):
        model = make_model("log")
        t = np.array([0.01, 0.1, 0.5])
        curve, _ = mixed_lower(model, t)
        for ti, pi in zip(t, curve):
            # independent oracle: scipy quadrature of the defining relation
            val, _ = quad(lambda z: -1.0 / np.log(z), 0.0, pi)
            assert val == pytest.approx(ti, abs=1e-6)

    def test_positive_and_nondecreasing(self, singular):
        t = np.geomspace(1e-6, 1e3, 200)
        curve, _ = mixed_lower(singular, t)
        assert np.all(curve > 0.0)
        assert np.all(np.diff(curve) >= -1e-12)

    def test_rejects_model_without_blowup(self, cubic):
        with pytest.raises(HypothesisError):
            mixed_lower(cubic, np.array([1.0]))


class TestMixedUpper:
    def test_saturates_at_largest_root_plus_one(self):
        model = make_model("poly", coeffs=[1.0, 0.0, 0.0], kappa=1.0)  # p^2 - 1/p
        t = np.array([10.0, 100.0])
        curve, consts = mixed_upper(model, t)
        assert consts["p_plus"] == pytest.approx(1.0, abs=1e-9)
        assert np.allclose(curve, consts["p_plus"] + 1.0)

    def test_inverse_escape_time_against_oracle(self):
        model = make_model("poly", coeffs=[1.0, 0.0, 0.0], kappa=1.0)
        t = np.array([0.01, 0.05, 0.2])
        curve, consts = mixed_upper(model, t)
        for ti, pi in zip(t, curve):
            if ti < consts["t_saturate_upper"]:
                val, _ = quad(lambda z: 1.0 / (z ** 2 - 1.0 / z), pi, np.inf)
                assert val == pytest.approx(ti, rel=1e-5)

    def test_small_time_tail_comparison(self):
        # for p^2 - 1/p the escape integral behaves like 1/p at large p,
        # so the curve grows like 1/t as t -> 0
        model = make_model("poly", coeffs=[1.0, 0.0, 0.0], kappa=1.0)
        t = np.array([1e-4, 1e-3])
        curve, _ = mixed_upper(model, t)
        assert curve[0] == pytest.approx(1.0 / t[0], rel=0.05)
        assert curve[1] == pytest.approx(1.0 / t[1], rel=0.05)

    def test_log_model_tail_divergence(self):
        with pytest.raises(IntegrabilityError):
            mixed_upper(make_model("log"), np.array([1.0]))

    def test_nonincreasing(self, singular):
        t = np.geomspace(1e-6, 1e3, 200)
        curve, _ = mixed_upper(singular, t)
        assert np.all(np.diff(curve) <= 1e-12)


class TestDisplacementLower:
    def test_certified_constants_match_grid_oracle(self, singular):
        mu = 1.0
        C, eps0, t0 = certify_lower_constants(singular, mu)
        assert C > 0 and 0 < eps0 < mu
        # oracle: dense independent grid infimum of the difference quotient
        p = np.geomspace(1e-8, 10.0, 900)
        d = np.geomspace(1e-8, eps0, 200)
        with np.errstate(divide="ignore", invalid="ignore"):
            quot = (singular.sigma(p)[:, None] - singular.sigma(d)[None, :]) / (
                p[:, None] - d[None, :]
            )
        mask = np.abs(p[:, None] - d[None, :]) > 1e-12
        oracle_inf = np.min(quot[mask])
        assert C <= oracle_inf  # the certified constant keeps a safety margin
        assert C >= oracle_inf / 1.2

    def test_curve_shape(self, singular):
        mu = 1.0
        t = np.linspace(0.0, 2.0, 400)[1:]
        curve, consts = displacement_lower(singular, mu, t)
        eps0, t0 = consts["eps0"], consts["t0_lower"]
        # continuity splice: the exponential hits eps0 exactly at t0
        assert mu * (1.0 - np.exp(-consts["C"] * t0)) == pytest.approx(eps0, abs=1e-12)
        rising = t <= t0
        assert np.all(np.diff(curve[rising]) > 0)
        assert np.allclose(curve[~rising], eps0)
        assert np.all(curve < mu)
        assert np.all(curve > 0)

    def test_lower_curve_starts_at_zero(self, singular):
        t = np.array([1e-12])
        curve, _ = displacement_lower(singular, 1.0, t)
        assert curve[0] == pytest.approx(0.0, abs=1e-10)

    def test_rejects_nonpositive_mu(self, singular):
        with pytest.raises(CertificationError):
            displacement_lower(singular, 0.0, np.array([1.0]))


class TestDisplacementUpper:
    def test_cubic_constants_and_plateau(self, cubic):
        mu = 0.5
        t = np.geomspace(1e-5, 100.0, 300)
        curve, consts = displacement_upper(cubic, mu, t)
        M, t0 = consts["M"], consts["t0_upper"]
        assert M > 2.0 * mu
        assert np.isfinite(t0) and t0 > 0
        assert np.all(curve[t >= t0] == M)
        assert np.all(np.diff(curve) <= 1e-9)
        assert np.all(curve > mu)

    def test_escape_time_against_oracle(self, cubic):
        mu = 0.5
        M = certify_upper_threshold(cubic, mu)
        ref, _ = quad(lambda z: 2.0 * z / ((z ** 3 - z) * (z - 1.0)), M, np.inf)
        t = np.geomspace(1e-4, 10.0, 50)
        _, consts = displacement_upper(cubic, mu, t)
        assert consts["t0_upper"] == pytest.approx(ref, rel=1e-6)

    def test_curve_inverts_the_escape_integral(self, cubic):
        mu = 0.5
        t = np.array([0.01, 0.05, 0.1])
        curve, consts = displacement_upper(cubic, mu, t)
        M, t0 = consts["M"], consts["t0_upper"]
        for ti, Ei in zip(t, curve):
            val, _ = quad(lambda z: 2.0 * z / ((z ** 3 - z) * (z - 2 * mu)), M, Ei)
            assert val == pytest.approx(t0 - ti, abs=1e-6)

    def test_blows_up_toward_zero_time(self, cubic):
        t = np.array([1e-6, 1e-5])
        curve, _ = displacement_upper(cubic, 0.5, t)
        assert curve[0] > curve[1] > 10.0

    def test_singular_model_certifies(self, singular):
        t = np.geomspace(1e-4, 50.0, 100)
        curve, consts = displacement_upper(singular, 1.0, t)
        assert consts["M"] > 2.0
        assert np.all(np.diff(curve) <= 1e-9)

    def test_full_line_plateau_dominates_negative_strain_stress(self, cubic):
        # the plateau must top every branch value of every reachable stress
        # level; for the cubic the negative strains carry stress up to the
        # fold value sigma(-1/sqrt(3)), so M must exceed the outer branch
        # value there, 2/sqrt(3)
        M = certify_upper_threshold(cubic, 0.5)
        assert M > 2.0 / np.sqrt(3.0)

    def test_full_line_enclosure_over_random_runs(self, cubic):
        from strainflow.displacement import integrate, seeded_state

        t_records = np.linspace(0.0, 40.0, 81)
        upper, consts = displacement_upper(cubic, 0.5, t_records[1:])
        worst = np.inf
        for seed in (11, 23, 35):
            state = seeded_state(cubic, 16, 0.5, seed=seed)
            traj = integrate(cubic, state, 40.0, n_records=81)
            worst = min(worst, float(np.min(upper - traj.values[1:].max(axis=1))))
        assert worst >= 0.0


class TestProfiles:
    def test_displacement_profile_orders_curves(self, singular):
        mu = 1.0
        prof = bounds_profile(singular, "displacement", mu=mu)
        sel = prof.t_grid > 0
        assert np.all(prof.lower[sel] < mu)
        assert np.all(prof.upper[sel] > mu)
        assert np.all(np.diff(prof.lower) >= -1e-12)
        assert np.all(np.diff(prof.upper) <= 1e-12)

    def test_mixed_profile_for_quadratic_singular(self):
        model = make_model("poly", coeffs=[1.0, 0.0, 0.0], kappa=1.0)
        prof = bounds_profile(model, "mixed", t_grid=np.geomspace(1e-3, 10, 50))
        assert np.all(prof.lower <= prof.upper)

    def test_profile_interpolation(self, singular):
        prof = bounds_profile(singular, "displacement", mu=1.0,
                              t_grid=np.geomspace(1e-4, 10, 100))
        mid = prof.lower_at(0.5)
        assert prof.lower[0] <= mid <= prof.lower[-1]

    def test_data_independence_is_structural(self):
        # the constructors accept no initial data by signature
        import inspect

        for fn in (mixed_lower, mixed_upper):
            assert list(inspect.signature(fn).parameters) == ["model", "t_grid"]
        for fn in (displacement_lower, displacement_upper):
            assert list(inspect.signature(fn).parameters) == ["model", "mu", "t_grid"]
