import numpy as np
import pytest

from hjlab import (
    LevyControlProblem,
    MCConfig,
    OUModel,
    RobustOUProblem,
    brownian_triplet,
    build_plan,
    quadratic_cost,
    zero_triplet,
)


@pytest.fixture(scope="session")
def plan1():
    return build_plan(1)


@pytest.fixture(scope="session")
def plan2():
    return build_plan(2)


@pytest.fixture(scope="session")
def small_mc():
    return MCConfig(n_paths=2000, seed=3, steps=8)


@pytest.fixture(scope="session")
def levy_zero_noise():
    """Deterministic drift control with quadratic cost (Hopf-Lax instance)."""
    return LevyControlProblem.build(zero_triplet(1), quadratic_cost(1), lip_u=1.0)


@pytest.fixture(scope="session")
def levy_brownian():
    """Standard Brownian noise with quadratic cost (Hopf-Cole instance)."""
    return LevyControlProblem.build(brownian_triplet(1), quadratic_cost(1), lip_u=4.0)


def make_ou_1d():
    model = OUModel(
        dim=1,
        A_mat=[[-1.0]],
        b=lambda pts, a: np.full_like(pts, a),
        action_set=(-1.0, 0.0, 1.0),
        lip_C=1.0,
        Sigma=([[0.5]], [[1.0]]),
        Q=[[1.0]],
    )
    return RobustOUProblem(model)


@pytest.fixture(scope="session")
def ou_1d():
    return make_ou_1d()
