import numpy as np
import pytest

from hjlab import (
    ConfigurationError,
    K_ou,
    LevyControlProblem,
    MCConfig,
    S_levy,
    S_levy_many,
    S_ou,
    affine_combine,
    bellman_step_levy,
    bellman_step_ou,
    brownian_triplet,
    build_plan,
    clipped_abs_1d,
    constant,
    hopf_cole_oracle,
    hopf_cole_values,
    hopf_lax_oracle,
    lattice_join,
    lin_combine,
    negate,
    ou_many,
    quadratic_cost,
    random_smooth_function,
    right_continuity_probe,
    sup_gap,
    zero_triplet,
)


def _bumps(seed, dim=1, bound=1.0):
    return random_smooth_function(seed, dim, bound=bound).as_lattice()


class TestMCConfig:
    def test_validation(self):
        with pytest.raises(ValueError):
            MCConfig(n_paths=10)
        with pytest.raises(ValueError):
            MCConfig(steps=0)


class TestLevyProblem:
    def test_action_grid_contains_zero_and_respects_bound(self, levy_zero_noise):
        grid = levy_zero_noise.action_grid
        assert np.any(np.all(grid == 0.0, axis=1))
        assert np.max(np.abs(grid)) <= levy_zero_noise.control_bound + 1e-9

    def test_empty_action_grid_rejected(self):
        with pytest.raises(ConfigurationError):
            LevyControlProblem(
                triplet=zero_triplet(1), cost=quadratic_cost(1),
                action_grid=np.zeros((0, 1)), control_bound=1.0,
            )


class TestBellmanStepLevy:
    def test_constant_is_fixed_point(self, levy_brownian, small_mc, plan1):
        u = constant(1, 0.4)
        out = bellman_step_levy(u, 0.25, levy_brownian, small_mc)
        assert np.max(np.abs(out(plan1.points) - 0.4)) < 1e-9

    def test_tiny_step_is_near_identity(self, levy_brownian, small_mc, plan1):
        u = _bumps(41)
        out = bellman_step_levy(u, 1e-6, levy_brownian, small_mc)
        assert sup_gap(out, u, plan1) < 1e-3

    def test_one_step_zero_noise_matches_direct_maximisation(self, levy_zero_noise, small_mc):
        u0 = clipped_abs_1d()
        out = bellman_step_levy(u0, 1.0, levy_zero_noise, small_mc)
        # max_a ( u0(a) - c(a) ) at x = 0; u0's quadratic cap makes a = 0 optimal
        acts = levy_zero_noise.action_grid[:, 0]
        direct = np.max(u0(acts.reshape(-1, 1)) - 0.5 * acts**2)
        assert out(np.zeros(1)) == pytest.approx(direct, abs=2e-3)
        assert abs(direct) < 6e-3  # the exact kinkless value would be 0


class TestSLevy:
    def test_time_zero_is_identity_object(self, levy_brownian, small_mc):
        u = _bumps(5)
        assert S_levy(0.0, u, levy_brownian, small_mc) is u

    def test_constant_invariance(self, levy_brownian, small_mc, plan1):
        u = constant(1, -0.3)
        for t in (0.25, 1.0):
            st = S_levy(t, u, levy_brownian, small_mc)
            assert np.max(np.abs(st(plan1.points) + 0.3)) < 1e-9

    def test_hopf_lax_spot_values(self, levy_zero_noise):
        mc = MCConfig(n_paths=500, seed=1, steps=64)
        u0 = clipped_abs_1d()
        s1 = S_levy(1.0, u0, levy_zero_noise, mc)
        assert s1(np.array([0.0])) == pytest.approx(0.0, abs=1e-2)
        assert s1(np.array([2.0])) == pytest.approx(-1.5, abs=1e-2)

    def test_hopf_lax_sup_error_on_plan(self, levy_zero_noise, plan1):
        mc = MCConfig(n_paths=500, seed=1, steps=64)
        u0 = clipped_abs_1d()
        s1 = S_levy(1.0, u0, levy_zero_noise, mc)
        oracle = np.array([
            hopf_lax_oracle(u0, levy_zero_noise.cost, 1.0, x) for x in plan1.points
        ])
        assert np.max(np.abs(s1(plan1.points) - oracle)) < 1e-2

    def test_monotone_under_crn_100_pairs(self, levy_brownian, plan1):
        mc = MCConfig(n_paths=1000, seed=9, steps=4)
        worst = -np.inf
        for k in range(50):
            u = _bumps(100 + 2 * k)
            v = lattice_join(u, _bumps(101 + 2 * k))
            su, sv = S_levy_many(0.5, [u, v], levy_brownian, mc)
            worst = max(worst, float(np.max(su(plan1.points) - sv(plan1.points))))
        assert worst <= 1e-9

    def test_s_zero_nonnegative(self, levy_brownian, small_mc, plan1):
        s0 = S_levy(0.5, constant(1, 0.0), levy_brownian, small_mc)
        assert np.min(s0(plan1.points)) >= -1e-9

    def test_k_convexity_under_crn(self, levy_brownian, plan1):
        mc = MCConfig(n_paths=1000, seed=9, steps=4)
        u, v = _bumps(31), _bumps(32)
        for lam in (0.25, 0.5, 0.75):
            comb = affine_combine(lam, u, v)
            sc, su, sv = S_levy_many(0.5, [comb, u, v], levy_brownian, mc)
            gap = sc(plan1.points) - lam * su(plan1.points) - (1 - lam) * sv(plan1.points)
            assert np.max(gap) <= 1e-9

    def test_crn_off_breaks_estimator_identity(self, levy_brownian, plan1):
        mc = MCConfig(n_paths=1000, seed=9, steps=4, crn=False)
        u = _bumps(33)
        a = S_levy(0.5, u, levy_brownian, mc)
        b = S_levy(0.5, u, levy_brownian, mc)
        assert sup_gap(a, b, plan1) > 0.0  # fresh noise per application


class TestHopfColeOracle:
    def test_constant_and_degenerate_time(self):
        u = constant(1, 0.25)
        est = hopf_cole_oracle(u, 0.5, [0.0], n_paths=4000, seed=3)
        assert est.value == pytest.approx(0.25, abs=1e-12)
        u2 = _bumps(7)
        est2 = hopf_cole_oracle(u2, 0.0, [0.3])
        assert est2.value == pytest.approx(float(u2(np.array([0.3]))), abs=1e-12)
        est3 = hopf_cole_oracle(u2, 1e-8, [0.3], n_paths=4000, seed=3)
        assert est3.value == pytest.approx(float(u2(np.array([0.3]))), abs=1e-3)

    def test_matches_s_levy_within_ci(self, levy_brownian):
        from hjlab import clipped_neg_square_1d

        u0 = clipped_neg_square_1d()
        mc = MCConfig(n_paths=50_000, seed=2, steps=32)
        s = S_levy(0.25, u0, levy_brownian, mc)
        est = hopf_cole_oracle(u0, 0.25, [0.0], n_paths=1_000_000, seed=10)
        assert abs(float(s(np.zeros(1))) - est.value) < max(5 * est.stderr, 2e-2)


class TestOUEngine:
    def test_time_zero_identity(self, ou_1d, small_mc):
        u = _bumps(3)
        assert S_ou(0.0, u, ou_1d, small_mc) is u
        assert K_ou(0.0, u, ou_1d, small_mc) is u

    def test_constants_fixed_in_both_modes(self, ou_1d, small_mc, plan1):
        u = constant(1, 0.8)
        for op in (S_ou, K_ou):
            out = op(0.5, u, ou_1d, small_mc)
            assert np.max(np.abs(out(plan1.points) - 0.8)) < 1e-9

    def test_singleton_sigma_modes_coincide(self, small_mc, plan1):
        from conftest import make_ou_1d
        from hjlab import OUModel, RobustOUProblem

        model = OUModel(
            dim=1, A_mat=[[-0.5]], b=lambda pts, a: np.full_like(pts, a),
            action_set=(-1.0, 1.0), lip_C=1.0, Sigma=([[0.7]],), Q=[[1.0]],
        )
        prob = RobustOUProblem(model)
        u = _bumps(12)
        sv, ku = ou_many(0.5, [(u, "value"), (u, "upper")], prob, small_mc)
        assert sup_gap(sv, ku, plan1) == 0.0

    def test_value_below_upper(self, ou_1d, small_mc, plan1):
        u = _bumps(13)
        sv, ku = ou_many(0.5, [(u, "value"), (u, "upper")], ou_1d, small_mc)
        assert np.max(sv(plan1.points) - ku(plan1.points)) <= 1e-9

    def test_monotone_under_crn(self, ou_1d, small_mc, plan1):
        u = _bumps(14)
        v = lattice_join(u, _bumps(15))
        su, sv = ou_many(0.5, [(u, "value"), (v, "value")], ou_1d, small_mc)
        assert np.max(su(plan1.points) - sv(plan1.points)) <= 1e-9

    def test_k_convexity_mixed_families(self, ou_1d, small_mc, plan1):
        u, v = _bumps(16), _bumps(17)
        lam = 0.5
        comb = affine_combine(lam, u, v)
        sc, su, kv = ou_many(
            0.5, [(comb, "value"), (u, "value"), (v, "upper")], ou_1d, small_mc
        )
        gap = sc(plan1.points) - lam * su(plan1.points) - (1 - lam) * kv(plan1.points)
        assert np.max(gap) <= 1e-9

    def test_reflection_bound(self, ou_1d, small_mc, plan1):
        u = _bumps(18)
        s0, su, knu = ou_many(
            0.5, [(constant(1, 0.0), "value"), (u, "value"), (negate(u), "upper")],
            ou_1d, small_mc,
        )
        pts = plan1.points
        gap = 2 * s0(pts) - su(pts) - knu(pts)
        assert np.max(gap) <= 1e-9

    def test_difference_quotient_bound(self, ou_1d, small_mc, plan1):
        u, v = _bumps(19), _bumps(20)
        for h in (0.5, 0.25, 0.1):
            w = lin_combine(1.0 / h, u, 1.0 - 1.0 / h, v)
            su, sv, kw = ou_many(
                0.5, [(u, "value"), (v, "value"), (w, "upper")], ou_1d, small_mc
            )
            pts = plan1.points
            gap = (su(pts) - sv(pts)) / h - (kw(pts) - sv(pts))
            assert np.max(gap) <= 1e-9

    def test_one_step_exponential_euler_vs_exact_quadrature(self, ou_1d):
        # one game step with singleton controls reduces to a Gaussian average
        from hjlab import OUModel, RobustOUProblem, from_callable

        model = OUModel(
            dim=1, A_mat=[[-1.0]], b=lambda pts, a: np.zeros_like(pts),
            action_set=(0.0,), lip_C=0.0, Sigma=([[1.0]],), Q=[[1.0]],
        )
        prob = RobustOUProblem(model)
        u = from_callable(1, lambda p: np.exp(-p[:, 0] ** 2), bound=1.0, lipschitz=1.0)
        h = 0.25
        mc = MCConfig(n_paths=100_000, seed=21, steps=1, mesh_dx=0.005)
        out = bellman_step_ou(u, h, prob, mc)
        # X_h = e^{-h}(x + sqrt(h) Z): E exp(-X_h^2) in closed form
        x = np.array([0.4])
        m = np.exp(-h) * x[0]
        s2 = np.exp(-2 * h) * h
        exact = np.exp(-m * m / (1 + 2 * s2)) / np.sqrt(1 + 2 * s2)
        assert out(x) == pytest.approx(exact, abs=3e-3)


class TestRightContinuityProbe:
    def test_argument_validation(self, ou_1d, small_mc, plan1):
        u = _bumps(22)
        fam = lambda t, w: S_ou(t, w, ou_1d, small_mc)
        with pytest.raises(ValueError):
            right_continuity_probe(fam, [0.1, 0.2], [u, u], u, plan1)  # not decreasing
        with pytest.raises(ValueError):
            right_continuity_probe(fam, [0.2, 0.1], [u], u, plan1)  # length mismatch

    def test_constant_sequence_errors_fall_to_floor(self, levy_brownian, plan1):
        u = _bumps(23)
        mc = MCConfig(n_paths=4000, seed=4, steps=8)
        fam = lambda t, w: S_levy(t, w, levy_brownian, mc)
        t_seq = [2.0 ** (-n) for n in range(1, 7)]
        diag = right_continuity_probe(fam, t_seq, [u] * 6, u, plan1, tolerance=5e-2)
        assert diag.passed
        assert diag.errors[-1] < diag.errors[0]

    def test_perturbed_sequence(self, levy_brownian, plan1):
        u = _bumps(24)
        pert = _bumps(25)
        mc = MCConfig(n_paths=4000, seed=4, steps=8)
        fam = lambda t, w: S_levy(t, w, levy_brownian, mc)
        t_seq = [2.0 ** (-n) for n in range(1, 7)]
        u_seq = [lin_combine(1.0, u, tn, pert) for tn in t_seq]
        diag = right_continuity_probe(fam, t_seq, u_seq, u, plan1, tolerance=6e-2)
        assert diag.passed


class TestSemigroupLaw:
    def test_nested_matches_direct_within_tolerance(self, levy_brownian, plan1):
        u = _bumps(26)
        mc = MCConfig(n_paths=20_000, seed=6, steps=32)
        direct = S_levy(1.0, u, levy_brownian, mc, stream_id=3)
        inner = S_levy(0.5, u, levy_brownian, mc, stream_id=1)
        outer = S_levy(0.5, inner, levy_brownian, mc, stream_id=2)
        rel = sup_gap(direct, outer, plan1) / max(
            np.max(np.abs(direct(plan1.points))), 1e-6
        )
        assert rel < 0.05
