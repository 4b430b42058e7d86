"""Monte Carlo value-function semigroups with order-property verification.

Two desk-scale control problems — drift-controlled Levy dynamics and a
robust Ornstein-Uhlenbeck game — are discretised by common-random-number
dynamic programming. The package verifies, against independent oracles,
every definitional property of the resulting semigroup S and its bounding
family K: order preservation, relaxed convexity, seminorm and difference-
quotient estimates, strong right-continuity, generator formulas, and the
viscosity-solution inequalities at Dirac test points.
"""

from .campaign import CHECK_IDS, CampaignSpec, CheckResult, VerificationReport, run_campaign
from .costs import (
    RunningCost,
    cbar,
    cbarbar,
    conjugate_cstar,
    custom_grid_cost,
    quadratic_cost,
    quartic_cost,
    t_optimal_control_bound,
)
from .dynamics import (
    JumpSampler,
    LevyTriplet,
    OUModel,
    PathBatch,
    brownian_triplet,
    constant_jump,
    gaussian_jump_1d,
    simulate_levy_increments,
    simulate_ou_mild,
    transition_expectation,
    uniform_ball_jump,
    zero_triplet,
)
from .engine import (
    HopfColeEstimate,
    K_levy,
    K_ou,
    LevyControlProblem,
    MCConfig,
    RobustOUProblem,
    S_levy,
    S_levy_many,
    S_ou,
    bellman_step_levy,
    bellman_step_ou,
    hopf_cole_oracle,
    hopf_cole_values,
    hopf_lax_oracle,
    ou_many,
    right_continuity_probe,
)
from .errors import (
    BoundViolationError,
    CertificationError,
    ConfigurationError,
    HJLabError,
    ModelError,
    PolicyError,
)
from .fields import (
    SmoothTestField,
    bump_mixture,
    clipped_abs_1d,
    clipped_neg_square_1d,
    constant_field,
    random_smooth_function,
)
from .generator import (
    GeneratorEstimate,
    estimate_generator,
    hjb_generator_levy,
    isaacs_generator_ou,
    levy_generator_analytic,
    rel_sup_error,
)
from .lattice import (
    LatticeFunction,
    SamplePlan,
    affine_combine,
    build_plan,
    constant,
    from_callable,
    lattice_abs,
    lattice_join,
    lattice_meet,
    lin_combine,
    mixed_convergence_probe,
    negate,
    shift,
    sup_gap,
    sup_seminorm,
)
from .pde import GridSolverSpec, GridSolution, solve_hjb_levy_1d, solve_isaacs_ou_1d
from .viscosity import (
    DiracFunctional,
    SemigroupPath,
    SpaceTimeCloud,
    TestFunctionPath,
    TouchingCertificate,
    ViscosityReport,
    certify_touching,
    check_subsolution,
    check_supersolution,
    levy_semigroup_path,
    ou_semigroup_path,
    quadratic_test_path,
    verify_theorem,
)

__version__ = "0.1.0"
