import numpy as np
import pytest

from hjlab import (
    ConfigurationError,
    cbar,
    cbarbar,
    conjugate_cstar,
    custom_grid_cost,
    quadratic_cost,
    quartic_cost,
    t_optimal_control_bound,
)
from hjlab.rng import stream


def test_certificate_rejects_degenerate_cost():
    with pytest.raises(ValueError):
        custom_grid_cost(1, lambda pts: np.zeros(pts.shape[0]))


def test_certificate_rejects_nonzero_at_origin():
    with pytest.raises(ValueError):
        custom_grid_cost(1, lambda pts: np.sum(pts**2, axis=1) + 1.0)


def test_cstar_at_zero_slope():
    cost = quartic_cost(1)
    assert conjugate_cstar(cost, [0.0], grid_step=1e-2) == pytest.approx(0.0, abs=1e-12)


def test_cstar_quadratic_identity():
    cost = quadratic_cost(2)
    for b in ([0.3, -1.2], [2.0, 0.0], [-0.7, -0.7]):
        b = np.asarray(b)
        assert conjugate_cstar(cost, b) == pytest.approx(0.5 * b @ b, abs=1e-12)


def test_cstar_quartic_fine_grid_oracle():
    cost = quartic_cost(1)
    # sup_a (a - a^4): stationary point a* = (1/4)^(1/3)
    a_grid = np.arange(-8.0, 8.0 + 1e-9, 1e-4).reshape(-1, 1)
    oracle = float(np.max(a_grid[:, 0] - a_grid[:, 0] ** 4))
    got = conjugate_cstar(cost, [1.0], grid_step=1e-3)
    assert got == pytest.approx(oracle, abs=1e-5)


def test_cstar_monotone_in_refinement():
    cost = quartic_cost(1)
    coarse = conjugate_cstar(cost, [0.8], grid_step=4e-2)
    fine = conjugate_cstar(cost, [0.8], grid_step=2e-2)
    finer = conjugate_cstar(cost, [0.8], grid_step=1e-2)
    assert coarse <= fine + 1e-15 and fine <= finer + 1e-15


def test_cstar_nonnegative_and_convex():
    cost = quartic_cost(1)
    rng = stream(17, 1)
    bs = rng.uniform(-2, 2, size=100)
    for b in bs:
        assert conjugate_cstar(cost, [b], grid_step=1e-2) >= -1e-15
    # midpoint convexity on 100 random triples
    for _ in range(100):
        b1, b2 = rng.uniform(-2, 2, size=2)
        mid = conjugate_cstar(cost, [(b1 + b2) / 2], grid_step=1e-2)
        avg = 0.5 * conjugate_cstar(cost, [b1], grid_step=1e-2) + 0.5 * conjugate_cstar(
            cost, [b2], grid_step=1e-2
        )
        assert mid <= avg + 1e-9


def test_fenchel_young_on_samples():
    cost = quartic_cost(1)
    rng = stream(18, 1)
    for _ in range(50):
        a = rng.uniform(-2, 2)
        b = rng.uniform(-2, 2)
        lhs = a * b
        rhs = cost(np.array([[a]]))[0] + conjugate_cstar(cost, [b], grid_step=1e-3)
        assert lhs <= rhs + 1e-3  # grid tolerance


def test_cbar_zero_and_quadratic():
    cost = quadratic_cost(1)
    assert cbar(cost, 0.0) == 0.0
    assert cbar(cost, 3.0) == pytest.approx(4.5, abs=1e-12)
    # grid route agrees with the analytic value
    assert cbar(cost, 3.0, grid_step=1e-3) == pytest.approx(4.5, abs=1e-3)


def test_cbar_quartic_grid_cross_check():
    cost = quartic_cost(1)
    w = np.arange(0.0, 8.0, 1e-4)
    oracle = float(np.max(1.0 * w - w**4))
    assert cbar(cost, 1.0, grid_step=1e-3) == pytest.approx(oracle, abs=1e-5)


def test_cbar_monotone_and_convex_in_m():
    cost = quartic_cost(1)
    ms = np.linspace(0.0, 3.0, 13)
    vals = np.array([cbar(cost, m, grid_step=1e-2) for m in ms])
    assert np.all(np.diff(vals) >= -1e-12)
    mid = vals[1:-1]
    assert np.all(mid <= 0.5 * (vals[:-2] + vals[2:]) + 1e-9)


def test_cbarbar_zero_and_quadratic_fixed_point():
    cost = quadratic_cost(1)
    assert cbarbar(cost, 0.0) == 0.0
    assert cbarbar(cost, 1.3) == pytest.approx(0.5 * 1.3**2, abs=1e-12)


def test_cbarbar_below_cost_on_samples():
    cost = custom_grid_cost(
        1, lambda pts: np.abs(pts[:, 0]) ** 3 + 0.5 * pts[:, 0] ** 2, radial=True
    )
    rng = stream(19, 1)
    for a in rng.uniform(-4, 4, size=100):
        v = cbarbar(cost, abs(a), w_step=1e-3, grid_step=1e-3)
        if np.isfinite(v):
            # grid maxima undershoot cbar, so cbarbar can overshoot by O(step^2)
            assert v <= cost(np.array([[a]]))[0] + 1e-5


def test_cbarbar_convex_on_grid():
    cost = quartic_cost(1)
    vs = np.linspace(0.0, 2.0, 21)
    vals = np.array([cbarbar(cost, v, w_step=1e-3) for v in vs])
    assert np.all(np.isfinite(vals))
    assert np.all(vals[1:-1] <= 0.5 * (vals[:-2] + vals[2:]) + 1e-9)


def test_cbarbar_window_flag():
    cost = quadratic_cost(1)
    # force the grid route with a huge slope: maximiser hits the window edge
    assert cbarbar(cost, 50.0, w_max=4.0, grid_step=1e-2) == np.inf


def test_t_optimal_bound_quadratic_values():
    cost = quadratic_cost(1)
    assert t_optimal_control_bound(cost, 0.0) == pytest.approx(np.sqrt(2.0), abs=2e-3)
    assert t_optimal_control_bound(cost, 1.0) == pytest.approx(1.0 + np.sqrt(3.0), abs=2e-3)


def test_t_optimal_bound_grid_route():
    cost = quartic_cost(1)
    m1 = t_optimal_control_bound(cost, 0.5)
    # independent vectorised scan of cbarbar(v) > 1 + 0.5 v
    w = np.arange(0.0, 8.0 + 5e-3, 1e-2)
    r = np.arange(0.0, 8.0 + 5e-3, 1e-2)
    cbar_tbl = np.max(w[:, None] * r[None, :] - r[None, :] ** 4, axis=1)
    vs = np.arange(0.0, 8.0, 1e-3)
    vals = np.max(vs[:, None] * w[None, :] - cbar_tbl[None, :], axis=1)
    first = vs[np.argmax(vals > 1 + 0.5 * vs)]
    assert m1 == pytest.approx(first, abs=5e-3)


def test_t_optimal_bound_window_exhausted():
    cost = quadratic_cost(1)
    with pytest.raises(ConfigurationError):
        t_optimal_control_bound(cost, lip_u=0.0, v_max=1.0)  # sqrt(2) > 1
