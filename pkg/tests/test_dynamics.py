import numpy as np
import pytest

from hjlab import (
    LevyTriplet,
    ModelError,
    OUModel,
    PolicyError,
    brownian_triplet,
    constant_jump,
    from_callable,
    gaussian_jump_1d,
    simulate_levy_increments,
    simulate_ou_mild,
    transition_expectation,
    uniform_ball_jump,
    zero_triplet,
)
from hjlab.dynamics import levy_terminal_draws


def test_zero_triplet_increments_vanish():
    batch = simulate_levy_increments(zero_triplet(2), [0.0, 0.5, 1.0], 50, seed=1)
    assert np.all(batch.states == 0.0)


def test_pure_drift_increments():
    trip = LevyTriplet(1, gamma=[1.0], cov=[[0.0]])
    batch = simulate_levy_increments(trip, [0.0, 0.5, 1.0], 10, seed=1)
    inc = batch.step_increments()
    assert np.allclose(inc, 0.5)


def test_brownian_second_moment():
    # E ||B_1||^2 = tr(cov) = d, within 3 standard errors over 1e5 paths
    d, n = 2, 100_000
    draws = levy_terminal_draws(brownian_triplet(d), 1.0, n, seed=7)
    sq = np.sum(draws**2, axis=1)
    se = np.std(sq, ddof=1) / np.sqrt(n)
    assert abs(np.mean(sq) - d) <= 3 * se


def test_compound_poisson_mean_count():
    trip = LevyTriplet(1, gamma=[0.0], cov=[[0.0]], jump_rate=2.0,
                       jump_sampler=constant_jump(1, [2.0]))
    n = 50_000
    draws = levy_terminal_draws(trip, 1.0, n, seed=9)
    # each jump adds exactly 2 (beyond truncation: no compensator drift)
    counts = draws[:, 0] / 2.0
    assert np.allclose(counts, np.round(counts), atol=1e-9)
    se = np.std(counts, ddof=1) / np.sqrt(n)
    assert abs(np.mean(counts) - 2.0) <= 3 * se


def test_small_jump_compensation_keeps_mean_drift():
    # jumps inside the unit ball are compensated: E L_t = gamma * t
    sampler = constant_jump(1, [0.5])
    trip = LevyTriplet(1, gamma=[0.3], cov=[[0.0]], jump_rate=4.0, jump_sampler=sampler)
    n = 200_000
    draws = levy_terminal_draws(trip, 1.0, n, seed=11)
    se = np.std(draws[:, 0], ddof=1) / np.sqrt(n)
    assert abs(np.mean(draws[:, 0]) - 0.3) <= 3.5 * se


def test_gaussian_jump_truncated_mean_formula():
    s = gaussian_jump_1d(0.3, 0.4)
    rng = np.random.default_rng(0)
    draws = s.sample(rng, 2_000_000)[:, 0]
    emp = np.mean(draws * (np.abs(draws) <= 1.0))
    assert abs(emp - s.mean_small[0]) < 2e-3


def test_determinism_and_stream_separation():
    trip = LevyTriplet(1, gamma=[0.1], cov=[[1.0]], jump_rate=1.0,
                       jump_sampler=uniform_ball_jump(1, 0.8))
    a = simulate_levy_increments(trip, [0.0, 0.25, 0.5], 200, seed=5, stream_id=1)
    b = simulate_levy_increments(trip, [0.0, 0.25, 0.5], 200, seed=5, stream_id=1)
    c = simulate_levy_increments(trip, [0.0, 0.25, 0.5], 200, seed=5, stream_id=2)
    assert np.array_equal(a.states, b.states)
    assert not np.array_equal(a.states, c.states)


def test_non_psd_cov_rejected():
    with pytest.raises(ModelError):
        LevyTriplet(2, gamma=[0.0, 0.0], cov=[[1.0, 0.0], [0.0, -0.5]])


def test_ou_constant_path_when_everything_off():
    model = OUModel(
        dim=1, A_mat=[[0.0]], b=lambda pts, a: np.zeros_like(pts),
        action_set=(0.0,), lip_C=0.0, Sigma=([[1.0]],), Q=[[0.0]],
    )
    grid = np.linspace(0.0, 1.0, 9)
    batch = simulate_ou_mild(model, [1.5], lambda k, x: 0, lambda k, x: 0, grid, 20, seed=3)
    assert np.allclose(batch.states, 1.5)


def test_ou_linear_decay():
    model = OUModel(
        dim=1, A_mat=[[-1.0]], b=lambda pts, a: np.zeros_like(pts),
        action_set=(0.0,), lip_C=0.0, Sigma=([[1.0]],), Q=[[0.0]],
    )
    grid = np.linspace(0.0, 1.0, 65)
    batch = simulate_ou_mild(model, [1.0], lambda k, x: 0, lambda k, x: 0, grid, 3, seed=3)
    # exponential-Euler on x' = -x is exact at the nodes: x_t = e^{-t}
    assert batch.states[0, -1, 0] == pytest.approx(np.exp(-1.0), abs=1e-12)


def test_ou_pure_action_drift():
    model = OUModel(
        dim=1, A_mat=[[0.0]], b=lambda pts, a: np.full_like(pts, a),
        action_set=(1.0,), lip_C=1.0, Sigma=([[1.0]],), Q=[[0.0]],
    )
    grid = np.linspace(0.0, 1.0, 33)
    batch = simulate_ou_mild(model, [0.25], lambda k, x: 0, lambda k, x: 0, grid, 2, seed=3)
    assert batch.states[0, -1, 0] == pytest.approx(1.25, abs=1e-12)


def test_ou_euler_maruyama_reduction():
    # A = 0: the exponential-Euler step must equal plain Euler-Maruyama
    model = OUModel(
        dim=1, A_mat=[[0.0]], b=lambda pts, a: np.full_like(pts, a),
        action_set=(0.7,), lip_C=1.0, Sigma=([[0.5]],), Q=[[1.0]],
    )
    grid = np.array([0.0, 0.1, 0.2])
    batch = simulate_ou_mild(model, [0.0], lambda k, x: 0, lambda k, x: 0, grid, 100, seed=13)
    from hjlab.rng import TAG_GAUSS, stream

    x = np.zeros((100, 1))
    for k in range(2):
        z = stream(13, 0, k, TAG_GAUSS).standard_normal((100, 1))
        x = x + 0.1 * 0.7 + 0.5 * np.sqrt(0.1) * z
        assert np.allclose(batch.states[:, k + 1, :], x, atol=1e-12)


def test_policy_validation():
    model = OUModel(
        dim=1, A_mat=[[0.0]], b=lambda pts, a: np.full_like(pts, a),
        action_set=(0.0, 1.0), lip_C=1.0, Sigma=([[1.0]],), Q=[[1.0]],
    )
    grid = np.array([0.0, 0.5])
    with pytest.raises(PolicyError):
        simulate_ou_mild(model, [0.0], lambda k, x: 5, lambda k, x: 0, grid, 4, seed=1)
    with pytest.raises(PolicyError):
        simulate_ou_mild(model, [0.0], lambda k, x: 0, lambda k, x: -1, grid, 4, seed=1)


def test_omega_certificate():
    with pytest.raises(ModelError):
        OUModel(
            dim=1, A_mat=[[1.0]], b=lambda pts, a: np.zeros_like(pts),
            action_set=(0.0,), lip_C=0.0, Sigma=([[1.0]],), Q=[[1.0]],
            omega=0.0,  # growth exp(t) exceeds exp(0 t)
        )
    m = OUModel(
        dim=1, A_mat=[[1.0]], b=lambda pts, a: np.zeros_like(pts),
        action_set=(0.0,), lip_C=0.0, Sigma=([[1.0]],), Q=[[1.0]],
    )
    assert m.omega == pytest.approx(1.0, abs=1e-9)


def test_pathbatch_invariants_and_csv(tmp_path):
    trip = brownian_triplet(1)
    batch = simulate_levy_increments(trip, [0.0, 0.5], 5, seed=2)
    out = tmp_path / "paths.csv"
    batch.to_csv(str(out))
    lines = out.read_text().strip().splitlines()
    assert lines[0] == "path,t,x1"
    assert len(lines) == 1 + 5 * 2


def test_transition_expectation_identity_and_constant(plan1):
    trip = brownian_triplet(1)
    u = from_callable(1, lambda p: np.exp(-p[:, 0] ** 2), bound=1.0, lipschitz=1.0)
    assert transition_expectation(u, trip, 0.0, 100, seed=1) is u
    const = from_callable(1, lambda p: np.full(p.shape[0], 0.7), bound=0.7)
    te = transition_expectation(const, trip, 0.5, 500, seed=1)
    assert np.allclose(te(plan1.points), 0.7, atol=1e-12)


def test_transition_expectation_gaussian_oracle():
    # E exp(-(x+B_t)^2) at x=0 equals 1/sqrt(1+2t)
    trip = brownian_triplet(1)
    u = from_callable(1, lambda p: np.exp(-p[:, 0] ** 2), bound=1.0, lipschitz=1.0)
    t, n = 0.5, 100_000
    te = transition_expectation(u, trip, t, n, seed=21)
    draws = levy_terminal_draws(trip, t, n, seed=21)
    vals = np.exp(-draws[:, 0] ** 2)
    se = np.std(vals, ddof=1) / np.sqrt(n)
    assert abs(te(np.zeros(1)) - 1.0 / np.sqrt(1 + 2 * t)) <= 3 * se


def test_transition_expectation_crn_monotone(plan1):
    trip = brownian_triplet(1)
    u = from_callable(1, lambda p: np.tanh(p[:, 0]), bound=1.0, lipschitz=1.0)
    v = from_callable(1, lambda p: np.tanh(p[:, 0]) + 0.05, bound=1.05, lipschitz=1.0)
    tu = transition_expectation(u, trip, 0.3, 2000, seed=4)
    tv = transition_expectation(v, trip, 0.3, 2000, seed=4)
    gap = tu(plan1.points) - tv(plan1.points)
    assert np.max(gap) <= 1e-12  # shared draws: order is exact
