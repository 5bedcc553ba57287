import math
import time

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import optimize

from ppgd.core import invariant_set_thresholds
from ppgd.exceptions import ConfigurationError, DomainError
from ppgd.theory import (
    DenseInstance,
    PerturbationInjector,
    check_convergence_bound,
    check_dual_lower_trap,
    check_dual_trap,
    check_error_free_rate,
    check_invariant_set,
    check_pgd_geometric,
    convergence_bound,
    newton_minimizer,
    ppgd_setup,
    run_all_checks,
)

from frozen import DENSE_MINIMIZER_SEED0


@pytest.fixture(scope="module")
def quartic():
    return DenseInstance.random(8, 1.0, 0)


@pytest.fixture(scope="module")
def identity_quadratic():
    return DenseInstance.random(8, 0.0, 2, a_equals_l=True)


class TestInstance:
    def test_normalized_to_unit_convexity(self, quartic):
        assert quartic.mu == pytest.approx(1.0, rel=1e-12)

    def test_validation(self):
        eye = np.eye(3)
        with pytest.raises(DomainError):
            DenseInstance(-eye, np.zeros(3), 0.0, eye)
        with pytest.raises(DomainError):
            DenseInstance(eye, np.zeros(3), -1.0, eye)
        with pytest.raises(ConfigurationError):
            DenseInstance(eye, np.zeros(4), 0.0, eye)

    @settings(max_examples=30, deadline=None)
    @given(seed=st.integers(0, 200), point=st.integers(0, 2**31 - 1))
    def test_gradient_matches_central_differences(self, seed, point):
        inst = DenseInstance.random(8, 1.0, seed)
        rng = np.random.default_rng(point)
        v, w = rng.standard_normal((2, 8))
        h = 1e-5
        fd = (inst.energy(v + h * w) - inst.energy(v - h * w)) / (2 * h)
        exact = inst.gradient(v) @ w
        assert abs(fd - exact) <= 1e-7 * max(abs(exact), 1.0)

    def test_batched_matches_single(self, quartic):
        V = np.random.default_rng(0).standard_normal((5, 8))
        assert np.allclose(quartic.energies(V), [quartic.energy(v) for v in V], rtol=1e-13)
        assert np.allclose(quartic.gradients(V), [quartic.gradient(v) for v in V], rtol=1e-13)

    def test_ball_samples(self, quartic):
        rng = np.random.default_rng(1)
        center = np.ones(8)
        X = quartic.sample_ball(rng, center, 2.0, 400)
        norms = np.sqrt(quartic.l_norms_sq(X - center))
        assert norms.max() <= 2.0 * (1 + 1e-12)
        assert np.sum(np.isclose(norms, 2.0, rtol=1e-12)) >= 100


class TestNewtonOracle:
    def test_matches_frozen_bfgs_minimizer(self, quartic):
        assert np.abs(newton_minimizer(quartic) - np.array(DENSE_MINIMIZER_SEED0)).max() <= 1e-8

    @pytest.mark.parametrize("seed", range(5))
    def test_matches_scipy(self, seed):
        inst = DenseInstance.random(8, 1.0, seed)
        ref = optimize.minimize(inst.energy, np.zeros(8), jac=inst.gradient, method="BFGS",
                                options={"gtol": 1e-12}).x
        u = newton_minimizer(inst)
        assert np.linalg.norm(inst.gradient(u)) <= 1e-12
        assert np.abs(u - ref).max() <= 1e-7


class TestInjector:
    @pytest.mark.parametrize("mode", ["bounded", "adversarial"])
    def test_norm_exact(self, quartic, mode):
        inj = PerturbationInjector(quartic, np.zeros(8), mode, 0.3, seed=4)
        for k in range(5):
            inj(k, np.random.default_rng(k).standard_normal(8))
        assert np.allclose(inj.norms_sq, 0.3, rtol=1e-12)

    def test_zero_and_decaying(self, quartic):
        assert not np.any(PerturbationInjector(quartic, np.zeros(8))(0, np.ones(8)))
        inj = PerturbationInjector(quartic, np.zeros(8), "decaying", 1.0, rate=0.01)
        inj(0, 1e-3 * np.ones(8))
        assert inj.norms_sq[0] == pytest.approx(0.01 * quartic.l_norms_sq(1e-3 * np.ones((1, 8)))[0], rel=1e-12)

    def test_adversarial_points_away(self, quartic):
        u = np.zeros(8)
        v = np.random.default_rng(0).standard_normal(8)
        eta = PerturbationInjector(quartic, u, "adversarial", 0.1)(0, v)
        # the update -sigma L^{-1} eta moves along +(v - u)
        assert eta @ (v - u) < 0

    def test_validation(self, quartic):
        with pytest.raises(ConfigurationError):
            PerturbationInjector(quartic, np.zeros(8), "gaussian")
        with pytest.raises(ConfigurationError):
            PerturbationInjector(quartic, np.zeros(8), "bounded", -1.0)


class TestTraps:
    def test_lower_trap_tight_for_identity_quadratic(self, identity_quadratic):
        rep = check_dual_lower_trap(identity_quadratic, samples=2000)
        assert rep.passed and rep.details["lhat"] == pytest.approx(1.0, rel=1e-12)
        assert abs(rep.details["max_slack_used"]) <= 1e-10

    def test_lower_trap_at_coincident_points(self, quartic):
        u = np.random.default_rng(0).standard_normal(8)
        g = quartic.gradient(u)
        assert quartic.energy(u) + g @ (u - u) == quartic.energy(u)

    def test_dual_trap_identity_quadratic(self, identity_quadratic):
        rep = check_dual_trap(identity_quadratic, samples=2000)
        assert rep.passed
        assert (rep.details["c_flat"], rep.details["c_sharp"]) == pytest.approx((3 / 8, 1 / 2), rel=1e-12)
        # lhs = ||v-u||^2 against rhs = 7/8 ||v-u||^2
        assert rep.details["min_ratio"] == pytest.approx(8 / 7, rel=1e-9)

    @pytest.mark.parametrize("seed", range(5))
    def test_sharp_constant_below_inverse_lipschitz(self, seed):
        # the quadratic case, where the true Lipschitz constant is an eigenvalue
        inst = DenseInstance.random(8, 0.0, seed)
        rep = check_dual_trap(inst, samples=500, seed=seed)
        assert rep.passed and rep.details["c_sharp"] < 1 / inst.lipschitz_quadratic

    def test_quartic_traps(self, quartic):
        assert check_dual_lower_trap(quartic, 2.0, 10_000, 0).violations == 0
        assert check_dual_trap(quartic, 2.0, 10_000, 0).violations == 0


class TestPpgdChecks:
    @pytest.fixture(scope="class")
    @staticmethod
    def setup():
        return ppgd_setup(DenseInstance.random(8, 1.0, 0), d0=4.0, seed=0)

    def test_thresholds_follow_constants(self, setup):
        assert (setup.sigma0, setup.eps0) == invariant_set_thresholds(setup.c_flat, setup.c_sharp, setup.d0)
        assert setup.instance.l_norms_sq((setup.v0 - setup.minimizer)[None])[0] == pytest.approx(16.0, rel=1e-12)

    def test_zero_injector_decreases_distance(self, setup):
        inj = PerturbationInjector(setup.instance, setup.minimizer)
        rep = check_invariant_set(setup, injector=inj, iters=100)
        assert rep.passed and rep.details["max_d_over_d0"] == pytest.approx(1.0, rel=1e-12)

    def test_start_at_minimizer_stays(self):
        s = ppgd_setup(DenseInstance.random(8, 1.0, 0), d0=0.0, seed=0)
        assert s.eps0 == 0.0
        rep = check_invariant_set(s, injector=PerturbationInjector(s.instance, s.minimizer), iters=20)
        assert rep.passed

    def test_adversarial_invariant_set(self, setup):
        assert check_invariant_set(setup, iters=500).violations == 0

    def test_bound_at_zero(self, setup):
        assert setup.d0**2 <= convergence_bound(setup, setup.sigma0, 0)

    def test_convergence_bound_bounded_injector(self, setup):
        inj = PerturbationInjector(setup.instance, setup.minimizer, "bounded", setup.eps0, seed=1)
        assert check_convergence_bound(setup, injector=inj, iters=500).violations == 0

    def test_convergence_bound_identity_quadratic_one_step(self, identity_quadratic):
        s = ppgd_setup(identity_quadratic, d0=1.0, seed=0, samples=2000)
        inj = PerturbationInjector(identity_quadratic, s.minimizer)
        rep = check_convergence_bound(s, sigma=0.999999, injector=inj, iters=5)
        assert rep.passed

    def test_error_free_rate(self, setup):
        assert check_error_free_rate(setup, iters=500).violations == 0

    def test_step_rate_domain(self, setup):
        with pytest.raises(DomainError):
            check_convergence_bound(setup, sigma=2.0 / setup.mu, iters=5)

    def test_large_step_escapes(self, setup):
        assert not check_invariant_set(setup, sigma=20 * setup.sigma0, iters=500).passed


class TestPgdGeometric:
    def test_random_quadratic(self):
        inst = DenseInstance.random(8, 0.0, 3)
        rep = check_pgd_geometric(inst, seed=3)
        assert rep.passed
        assert rep.details["fitted_factor"] <= 1 - inst.mu / inst.lipschitz_quadratic + 1e-6

    def test_identity_quadratic_one_step(self, identity_quadratic):
        rep = check_pgd_geometric(identity_quadratic, sigma=1.0, iters=5)
        assert rep.passed and rep.details["rho"] == pytest.approx(0.0, abs=1e-12)

    def test_quartic(self, quartic):
        assert check_pgd_geometric(quartic).passed


class TestSuite:
    def test_all_pass(self):
        start = time.perf_counter()
        reports = run_all_checks(seed=0)
        assert time.perf_counter() - start < 30
        assert [r.passed for r in reports] == [True] * 6
        assert all(r.violations == 0 for r in reports)
        assert all(r.samples >= 500 for r in reports[2:5])
        # PGD converges to round-off well before 500 iterations
        assert reports[5].samples >= 2
        assert reports[0].samples >= 10_000 and reports[1].samples >= 10_000

    @pytest.mark.parametrize("seed", [1, 7])
    def test_other_seeds(self, seed):
        assert all(r.passed for r in run_all_checks(seed=seed, samples=2000, iters=200))

    def test_deterministic(self):
        a = [r.row() for r in run_all_checks(seed=3, samples=2000, iters=100)]
        b = [r.row() for r in run_all_checks(seed=3, samples=2000, iters=100)]
        assert a == b

    def test_forced_failure(self):
        reports = run_all_checks(seed=0, samples=2000, iters=200, force_failure=True)
        assert not reports[2].passed and reports[2].first_violation is not None

    def test_report_row(self):
        rep = run_all_checks(seed=0, samples=1000, iters=50)[0]
        row = rep.row()
        assert row.startswith("PASS") and "violations=0/1000" in row and "seed=0" in row
        assert not math.isnan(rep.details["lhat"])
