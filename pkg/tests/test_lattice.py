import numpy as np
import pytest

from hjlab import (
    BoundViolationError,
    SamplePlan,
    affine_combine,
    build_plan,
    constant,
    from_callable,
    lattice_abs,
    lattice_join,
    lattice_meet,
    mixed_convergence_probe,
    random_smooth_function,
    sup_seminorm,
)
from hjlab.rng import stream


def _sine():
    return from_callable(1, lambda p: np.sin(p[:, 0]), bound=1.0, lipschitz=1.0, name="sin")


def test_join_of_constants():
    u, v = constant(1, -3.0), constant(1, 3.0)
    j = lattice_join(u, v)
    xs = np.linspace(-2, 2, 11).reshape(-1, 1)
    assert np.all(j(xs) == 3.0)
    assert j.bound == 3.0


def test_join_identity_and_abs_definition():
    u = from_callable(1, lambda p: p[:, 0], bound=2.5, lipschitz=1.0)
    v = from_callable(1, lambda p: -p[:, 0], bound=2.5, lipschitz=1.0)
    j = lattice_join(u, v)
    xs = np.linspace(-2, 2, 41).reshape(-1, 1)
    assert np.allclose(j(xs), np.abs(xs[:, 0]))


def test_join_matches_pointwise_max_on_random_bumps():
    u = random_smooth_function(10, 1).as_lattice()
    v = random_smooth_function(11, 1).as_lattice()
    xs = stream(0, 1).uniform(-2, 2, size=(1000, 1))
    j = lattice_join(u, v)
    assert np.array_equal(j(xs), np.maximum(u(xs), v(xs)))
    m = lattice_meet(u, v)
    assert np.array_equal(m(xs), np.minimum(u(xs), v(xs)))


def test_join_dimension_mismatch():
    with pytest.raises(ValueError):
        lattice_join(constant(1, 0.0), constant(2, 0.0))


def test_abs_of_sine():
    a = lattice_abs(_sine())
    xs = np.linspace(-3, 3, 101).reshape(-1, 1)
    assert np.allclose(a(xs), np.abs(np.sin(xs[:, 0])))


@pytest.mark.parametrize("lam", [0.0, 0.25, 0.5, 1.0])
def test_affine_combine_endpoints_and_identity(lam):
    u = random_smooth_function(1, 1).as_lattice()
    v = random_smooth_function(2, 1).as_lattice()
    xs = np.linspace(-2, 2, 31).reshape(-1, 1)
    c = affine_combine(lam, u, v)
    assert np.allclose(c(xs), lam * u(xs) + (1 - lam) * v(xs))
    same = affine_combine(lam, u, u)
    assert np.allclose(same(xs), u(xs), atol=1e-15)


def test_affine_combine_rejects_bad_lambda():
    u = constant(1, 1.0)
    with pytest.raises(ValueError):
        affine_combine(1.5, u, u)
    with pytest.raises(ValueError):
        affine_combine(-0.1, u, u)


def test_bound_certificate_is_enforced():
    lying = from_callable(1, lambda p: 2.0 * np.ones(p.shape[0]), bound=1.0)
    with pytest.raises(BoundViolationError):
        lying(np.zeros((1, 1)))


def test_lipschitz_spot_check():
    u = _sine()
    rng = stream(5, 9)
    a, b = rng.uniform(-2, 2, (64, 1)), rng.uniform(-2, 2, (64, 1))
    worst = u.check_lipschitz(a, b)
    assert worst <= 1.0 + 1e-9
    liar = from_callable(1, lambda p: 3.0 * p[:, 0], bound=10.0, lipschitz=1.0)
    with pytest.raises(BoundViolationError):
        liar.check_lipschitz(a, b)


def test_default_plans():
    p1 = build_plan(1)
    assert p1.radius == 2.0 and p1.dim == 1
    assert p1.n_points >= 41 + 200  # grid plus most of the Sobol fill
    p3 = build_plan(3)
    assert p3.radius == 1.5
    assert np.all(np.linalg.norm(p3.points, axis=1) <= 1.5 + 1e-12)


def test_plan_determinism():
    a = build_plan(2, seed=7)
    b = build_plan(2, seed=7)
    assert np.array_equal(a.points, b.points)
    c = build_plan(2, seed=8)
    assert a.n_points != c.n_points or not np.array_equal(a.points, c.points)


def test_plan_invariants_rejected():
    with pytest.raises(ValueError):
        SamplePlan(dim=1, points=np.array([[3.0]]), radius=2.0)  # outside ball
    with pytest.raises(ValueError):
        SamplePlan(dim=1, points=np.array([[1.0], [1.0]]), radius=2.0)  # duplicate


def test_sup_seminorm_basics(plan1):
    assert sup_seminorm(constant(1, 0.0), plan1) == 0.0
    assert sup_seminorm(constant(1, -2.5), plan1) == 2.5


def test_sup_seminorm_gaussian_fine_grid():
    plan = build_plan(1, radius=2.0, grid_per_axis=401, qmc_points=0)
    u = from_callable(1, lambda p: np.exp(-p[:, 0] ** 2), bound=1.0)
    assert abs(sup_seminorm(u, plan) - 1.0) <= 1e-12  # grid contains 0


def test_sup_seminorm_lattice_property(plan1):
    # |u| <= |v| pointwise on the plan implies p(u) <= p(v): 100 random pairs
    for k in range(100):
        u = random_smooth_function(2 * k, 1).as_lattice()
        dom = lattice_join(lattice_abs(u), random_smooth_function(2 * k + 1, 1, bound=0.5).as_lattice())
        assert sup_seminorm(u, plan1) <= sup_seminorm(dom, plan1) + 1e-12


def test_sup_seminorm_triangle_and_homogeneity(plan1):
    from hjlab import lin_combine

    u = random_smooth_function(21, 1).as_lattice()
    v = random_smooth_function(22, 1).as_lattice()
    s = lin_combine(1.0, u, 1.0, v)
    assert sup_seminorm(s, plan1) <= sup_seminorm(u, plan1) + sup_seminorm(v, plan1) + 1e-12
    scaled = lin_combine(-2.5, u, 0.0, v)
    assert abs(sup_seminorm(scaled, plan1) - 2.5 * sup_seminorm(u, plan1)) <= 1e-12


def test_mixed_convergence_constant_sequence(plan1):
    u = random_smooth_function(31, 1).as_lattice()
    plans = [build_plan(1, radius=r, qmc_points=0) for r in (1.0, 2.0)]
    diag = mixed_convergence_probe([u] * 5, u, plans, tolerance=1e-9)
    assert diag.convergent
    assert max(diag.tail_errors) == 0.0


def test_mixed_convergence_explicit_rate(plan1):
    from hjlab import shift

    u = random_smooth_function(32, 1).as_lattice()
    seq = [shift(u, 1.0 / n) for n in range(1, 40)]
    plans = [build_plan(1, radius=r, qmc_points=0) for r in (1.0, 2.0)]
    diag = mixed_convergence_probe(seq, u, plans, tolerance=0.05)
    assert diag.convergent
    assert np.allclose(diag.tail_errors, 1.0 / 39)


def test_mixed_convergence_sin_nx_over_n():
    fns = [
        from_callable(1, lambda p, n=n: np.sin(n * p[:, 0]) / n, bound=1.0 / n)
        for n in range(1, 60)
    ]
    limit = constant(1, 0.0)
    plans = [build_plan(1, radius=r, qmc_points=0) for r in (1.0, 2.0)]
    diag = mixed_convergence_probe(fns, limit, plans, tolerance=0.02)
    assert diag.convergent
    assert diag.sup_bound == 1.0


def test_mixed_convergence_empty_sequence(plan1):
    with pytest.raises(ValueError):
        mixed_convergence_probe([], constant(1, 0.0), [plan1])
