"""Dynamic-programming construction of the value-function semigroups.

Both control problems are discretised by one-step Bellman recursion on a
time grid. Each step is realised as a positive linear read pipeline on a
uniform mesh (empirical-kernel convolution for the noise, clamped linear
interpolation for drift warps) followed by max / min reductions over the
finite control sets. Because every ingredient is monotone and linear in
the value table, the order and convexity relations between S and K hold at
the estimator level exactly (floating-point slack only) whenever the same
noise streams are shared, which is the common-random-numbers contract.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, replace
from typing import Callable, Optional, Sequence

import numpy as np
from scipy.linalg import expm

from .costs import RunningCost, t_optimal_control_bound
from .dynamics import LevyTriplet, OUModel, gaussian_draws
from .errors import ConfigurationError
from .lattice import LatticeFunction, SamplePlan, sup_gap
from .mesh import BoxMesh
from .rng import TAG_GAUSS, TAG_ORACLE, stream

_BASE_RADIUS = {1: 2.0, 2: 2.0, 3: 1.5}
_DEFAULT_DX = {1: 0.01, 2: 0.05, 3: 0.12}

# fresh-noise token sequence used only when crn is disabled
_APP_SEQ = itertools.count(1)


@dataclass(frozen=True)
class MCConfig:
    """Monte Carlo / discretisation configuration for the engines.

    ``steps`` is the Bellman time-grid resolution; ``crn`` keeps noise
    streams keyed purely by (seed, stream, step) so separate operator
    applications share draws. ``mesh_dx`` / ``mesh_radius`` override the
    automatic evaluation-mesh sizing (radius is the region of interest
    before dynamic reach is added).
    """

    n_paths: int = 100_000
    seed: int = 0
    crn: bool = True
    steps: int = 64
    mesh_dx: Optional[float] = None
    mesh_radius: Optional[float] = None
    stratified: bool = False

    def __post_init__(self):
        if self.n_paths < 100:
            raise ValueError("n_paths must be at least 100")
        if self.steps < 1:
            raise ValueError("steps must be at least 1")

    def with_steps(self, steps: int) -> "MCConfig":
        return replace(self, steps=steps)


@dataclass(frozen=True)
class LevyControlProblem:
    """Drift-controlled Levy dynamics with a running cost.

    The action grid always contains 0 (so S(t)0 >= 0 and S(t)u dominates the
    plain transition expectation) and is clamped to the ball given by the
    near-optimal-control bound computed from the cost and a Lipschitz cap.
    """

    triplet: LevyTriplet
    cost: RunningCost
    action_grid: np.ndarray
    control_bound: float

    def __post_init__(self):
        grid = np.asarray(self.action_grid, dtype=float).reshape(-1, self.triplet.dim)
        if grid.shape[0] == 0:
            raise ConfigurationError("action grid must be nonempty")
        if not np.any(np.all(grid == 0.0, axis=1)):
            raise ConfigurationError("action grid must contain 0")
        if np.max(np.linalg.norm(grid, axis=1)) > self.control_bound + 1e-9:
            raise ConfigurationError("action grid exceeds the control bound ball")
        if self.cost.dim != self.triplet.dim:
            raise ConfigurationError("cost dimension mismatch")
        object.__setattr__(self, "action_grid", grid)

    @classmethod
    def build(
        cls,
        triplet: LevyTriplet,
        cost: RunningCost,
        lip_u: float = 1.0,
        points_per_dim: int = 33,
    ) -> "LevyControlProblem":
        m1 = t_optimal_control_bound(cost, lip_u)
        axis = np.linspace(-m1, m1, points_per_dim)
        if points_per_dim % 2 == 0:
            axis = np.sort(np.append(axis, 0.0))
        dim = triplet.dim
        grid = np.stack(np.meshgrid(*([axis] * dim), indexing="ij"), axis=-1).reshape(-1, dim)
        grid = grid[np.linalg.norm(grid, axis=1) <= m1 + 1e-12]
        return cls(triplet=triplet, cost=cost, action_grid=grid, control_bound=m1)

    @property
    def dim(self) -> int:
        return self.triplet.dim


@dataclass(frozen=True)
class RobustOUProblem:
    """Robust OU control: sup over drift actions, inf (or sup) over volatilities."""

    model: OUModel

    @property
    def dim(self) -> int:
        return self.model.dim


def _mesh_for(dim: int, base: Optional[float], reach: float, dx: Optional[float]) -> BoxMesh:
    base_r = base if base is not None else _BASE_RADIUS[dim]
    return BoxMesh(dim, base_r + reach + 0.5, dx if dx is not None else _DEFAULT_DX[dim])


def _levy_mesh(prob: LevyControlProblem, t: float, mc: MCConfig) -> BoxMesh:
    amax = float(np.max(np.linalg.norm(prob.action_grid, axis=1)))
    reach = amax * t + prob.triplet.noise_spread(t)
    return _mesh_for(prob.dim, mc.mesh_radius, reach, mc.mesh_dx)


def _ou_mesh(prob: RobustOUProblem, t: float, mc: MCConfig) -> BoxMesh:
    # 4.5 sigma noise buffer keeps the edge-clamp bias below the stepping
    # bias, so nested-vs-direct comparisons measure discretisation error
    m = prob.model
    growth = float(np.exp(max(m.omega, 0.0) * t))
    sig_max = max(np.linalg.norm(s, 2) for s in m.Sigma)
    noise = 4.5 * sig_max * np.sqrt(max(np.trace(m.Q), 0.0) * t)
    base = mc.mesh_radius if mc.mesh_radius is not None else _BASE_RADIUS[m.dim]
    reach = (base + m.lip_C * t + noise) * growth - base
    return _mesh_for(m.dim, mc.mesh_radius, max(reach, 0.0), mc.mesh_dx)


def _shift_axis(table: np.ndarray, s: float, axis: int) -> np.ndarray:
    """Clamped linear read of a table at all nodes shifted by s (in dx units)."""
    k = int(np.floor(s))
    theta = s - k
    n = table.shape[axis]
    idx0 = np.clip(np.arange(n) + k, 0, n - 1)
    t0 = np.take(table, idx0, axis=axis)
    if theta == 0.0:
        return t0
    idx1 = np.clip(np.arange(n) + k + 1, 0, n - 1)
    t1 = np.take(table, idx1, axis=axis)
    return (1.0 - theta) * t0 + theta * t1


def _shift_read(mesh: BoxMesh, table: np.ndarray, delta: np.ndarray) -> np.ndarray:
    out = table
    for axis in range(mesh.dim):
        out = _shift_axis(out, float(delta[axis]) / mesh.dx, axis)
    return out


def _shift_read_batch(mesh: BoxMesh, tables: np.ndarray, delta: np.ndarray) -> np.ndarray:
    out = tables
    for axis in range(mesh.dim):
        out = _shift_axis(out, float(delta[axis]) / mesh.dx, axis + 1)
    return out


def _table_function(mesh: BoxMesh, table: np.ndarray, bound: float, name: str) -> LatticeFunction:
    tbl = table  # captured; never mutated after construction

    def _eval(pts: np.ndarray) -> np.ndarray:
        return mesh.interp(tbl, pts)

    return LatticeFunction(mesh.dim, _eval, bound=bound, name=name)


def _noise_token(mc: MCConfig) -> int:
    return 0 if mc.crn else next(_APP_SEQ)


def _levy_tables_batch(
    us: Sequence[LatticeFunction],
    t: float,
    prob: LevyControlProblem,
    mc: MCConfig,
    stream_id: int,
    n_steps: Optional[int] = None,
    keep_every: Optional[int] = None,
):
    """Run the Bellman chain on a batch of operands sharing all noise draws.

    Batched and one-at-a-time runs give bit-identical tables because the
    per-step streams are keyed only by (seed, stream_id, step).
    """
    m = n_steps if n_steps is not None else mc.steps
    h = t / m
    mesh = _levy_mesh(prob, t, mc)
    tbls = np.stack([mesh.tabulate(u) for u in us])
    acts = prob.action_grid
    step_cost = h * prob.cost(acts)
    token = _noise_token(mc)
    kept = [(0.0, tbls[0])]
    for k in range(m):
        rng = stream(mc.seed, stream_id, k, TAG_GAUSS, token)
        draws = prob.triplet.sample_increments(h, mc.n_paths, rng, stratified=mc.stratified)
        kernel, lo = mesh.bin_draws(draws)
        conv = mesh.convolve_clamped_batch(tbls, kernel, lo)
        best = None
        for i in range(acts.shape[0]):
            cand = _shift_read_batch(mesh, conv, acts[i] * h)
            if step_cost[i] != 0.0:
                cand = cand - step_cost[i]
            best = cand if best is None else np.maximum(best, cand, out=best)
        tbls = best
        if keep_every and (k + 1) % keep_every == 0:
            kept.append(((k + 1) * h, tbls[0].copy()))
    return mesh, tbls, kept


def _levy_tables(
    u: LatticeFunction,
    t: float,
    prob: LevyControlProblem,
    mc: MCConfig,
    stream_id: int,
    n_steps: Optional[int] = None,
    keep_every: Optional[int] = None,
):
    mesh, tbls, kept = _levy_tables_batch([u], t, prob, mc, stream_id, n_steps, keep_every)
    return mesh, tbls[0], kept


def bellman_step_levy(
    u: LatticeFunction,
    h: float,
    prob: LevyControlProblem,
    mc: MCConfig,
    stream_id: int = 0,
) -> LatticeFunction:
    """One Bellman step: x -> max_a ( E[u(x + a h + dL_h)] - h c(a) ),
    with the increment draws shared across every (x, a) under CRN."""
    if h <= 0:
        raise ValueError("h must be positive")
    mesh, tbl, _ = _levy_tables(u, h, prob, mc, stream_id, n_steps=1)
    return _table_function(mesh, tbl, u.bound, f"T_{h:g}[{u.name}]")


def S_levy(
    t: float,
    u: LatticeFunction,
    prob: LevyControlProblem,
    mc: MCConfig,
    stream_id: int = 0,
) -> LatticeFunction:
    """Value function of the drift-control problem at horizon t.

    Composes mc.steps Bellman steps of size t/steps; S_levy(0, u) is u
    itself. Under CRN the operator is monotone in u exactly.
    """
    if t < 0:
        raise ValueError("t must be nonnegative")
    if t == 0:
        return u
    mesh, tbl, _ = _levy_tables(u, t, prob, mc, stream_id)
    return _table_function(mesh, tbl, u.bound, f"S({t:g})[{u.name}]")


def K_levy(
    t: float,
    u: LatticeFunction,
    prob: LevyControlProblem,
    mc: MCConfig,
    stream_id: int = 0,
) -> LatticeFunction:
    """Convexity bound for the Levy problem: the semigroup bounds itself."""
    return S_levy(t, u, prob, mc, stream_id)


def S_levy_many(
    t: float,
    us: Sequence[LatticeFunction],
    prob: LevyControlProblem,
    mc: MCConfig,
    stream_id: int = 0,
) -> list:
    """Apply S(t) to several operands in one chain (identical draws; results
    are bit-identical to one-at-a-time applications under CRN)."""
    if t < 0:
        raise ValueError("t must be nonnegative")
    if t == 0:
        return list(us)
    mesh, tbls, _ = _levy_tables_batch(us, t, prob, mc, stream_id)
    return [
        _table_function(mesh, tbls[i], us[i].bound, f"S({t:g})[{us[i].name}]")
        for i in range(len(us))
    ]


def _ou_step_data(prob: RobustOUProblem, h: float, mesh: BoxMesh):
    model = prob.model
    E = model.step_matrix(h)
    nodes = mesh.nodes()
    warped = []
    for a in model.action_set:
        pts = (nodes + h * model.b(nodes, a)) @ E.T
        warped.append(mesh.interp_weights(pts))
    factors = [E @ np.asarray(s) @ model._qchol for s in model.Sigma]
    return warped, factors


def _ou_tables_batch(
    specs: Sequence[tuple],
    t: float,
    prob: RobustOUProblem,
    mc: MCConfig,
    stream_id: int,
    n_steps: Optional[int] = None,
    keep_every: Optional[int] = None,
):
    """Run the game chain on (operand, mode) pairs sharing all noise draws."""
    for _, mode in specs:
        if mode not in ("value", "upper"):
            raise ValueError("mode must be 'value' or 'upper'")
    model = prob.model
    m = n_steps if n_steps is not None else mc.steps
    h = t / m
    mesh = _ou_mesh(prob, t, mc)
    warped, factors = _ou_step_data(prob, h, mesh)
    shape_b = (len(specs),) + mesh.shape
    flat = np.stack([mesh.tabulate(u) for u, _ in specs]).reshape(len(specs), -1)
    is_value = np.array([mode == "value" for _, mode in specs])[:, None]
    token = _noise_token(mc)
    kept = [(0.0, flat[0].reshape(mesh.shape))]
    sqrt_h = np.sqrt(h)
    for k in range(m):
        z = gaussian_draws(
            stream(mc.seed, stream_id, k, TAG_GAUSS, token), mc.n_paths, model.dim,
            mc.stratified,
        )
        outer = None
        for f in factors:
            conv = mesh.convolve_clamped_batch(
                flat.reshape(shape_b), *mesh.bin_draws(sqrt_h * z @ f.T)
            ).reshape(len(specs), -1)
            inner = None
            for idx, wts in warped:
                cand = wts[0] * conv[:, idx[0]]
                for c in range(1, idx.shape[0]):
                    cand += wts[c] * conv[:, idx[c]]
                inner = cand if inner is None else np.maximum(inner, cand, out=inner)
            if outer is None:
                outer = inner
            else:
                outer = np.where(
                    is_value, np.minimum(outer, inner), np.maximum(outer, inner)
                )
        flat = outer
        if keep_every and (k + 1) % keep_every == 0:
            kept.append(((k + 1) * h, flat[0].reshape(mesh.shape).copy()))
    return mesh, flat.reshape(shape_b), kept


def _ou_tables(
    u: LatticeFunction,
    t: float,
    prob: RobustOUProblem,
    mc: MCConfig,
    stream_id: int,
    mode: str,
    n_steps: Optional[int] = None,
    keep_every: Optional[int] = None,
):
    mesh, tbls, kept = _ou_tables_batch(
        [(u, mode)], t, prob, mc, stream_id, n_steps, keep_every
    )
    return mesh, tbls[0], kept


def bellman_step_ou(
    u: LatticeFunction,
    h: float,
    prob: RobustOUProblem,
    mc: MCConfig,
    mode: str = "value",
    stream_id: int = 0,
) -> LatticeFunction:
    """One exponential-Euler game step.

    mode='value' takes min over volatilities of max over actions (the
    inf-sup value); mode='upper' takes max over both (the bounding family).
    Noise draws are shared across every (x, action, volatility).
    """
    if h <= 0:
        raise ValueError("h must be positive")
    mesh, tbl, _ = _ou_tables(u, h, prob, mc, stream_id, mode, n_steps=1)
    return _table_function(mesh, tbl, u.bound, f"T^{mode}_{h:g}[{u.name}]")


def S_ou(
    t: float,
    u: LatticeFunction,
    prob: RobustOUProblem,
    mc: MCConfig,
    stream_id: int = 0,
) -> LatticeFunction:
    """Inf-sup value function of the robust OU problem at horizon t."""
    if t < 0:
        raise ValueError("t must be nonnegative")
    if t == 0:
        return u
    mesh, tbl, _ = _ou_tables(u, t, prob, mc, stream_id, "value")
    return _table_function(mesh, tbl, u.bound, f"S({t:g})[{u.name}]")


def K_ou(
    t: float,
    u: LatticeFunction,
    prob: RobustOUProblem,
    mc: MCConfig,
    stream_id: int = 0,
) -> LatticeFunction:
    """Sup-sup bounding family; dominates S_ou pointwise under CRN."""
    if t < 0:
        raise ValueError("t must be nonnegative")
    if t == 0:
        return u
    mesh, tbl, _ = _ou_tables(u, t, prob, mc, stream_id, "upper")
    return _table_function(mesh, tbl, u.bound, f"K({t:g})[{u.name}]")


def ou_many(
    t: float,
    specs: Sequence[tuple],
    prob: RobustOUProblem,
    mc: MCConfig,
    stream_id: int = 0,
) -> list:
    """Apply S (mode 'value') / K (mode 'upper') to several operands in one
    chain with shared draws. ``specs`` is a sequence of (function, mode)."""
    if t < 0:
        raise ValueError("t must be nonnegative")
    if t == 0:
        return [u for u, _ in specs]
    mesh, tbls, _ = _ou_tables_batch(specs, t, prob, mc, stream_id)
    out = []
    for i, (u, mode) in enumerate(specs):
        label = "S" if mode == "value" else "K"
        out.append(_table_function(mesh, tbls[i], u.bound, f"{label}({t:g})[{u.name}]"))
    return out


def hopf_lax_oracle(
    u0: LatticeFunction,
    cost: RunningCost,
    t: float,
    x,
    y_grid: Optional[np.ndarray] = None,
) -> float:
    """Zero-noise oracle: sup over y of u0(y) - t c((y - x)/t), by grid search."""
    if t <= 0:
        raise ValueError("t must be positive")
    x = np.asarray(x, dtype=float).reshape(-1)
    if y_grid is None:
        y_grid = default_y_grid(u0.dim, radius=float(np.linalg.norm(x)) + cost.domain_radius * t)
    y = np.atleast_2d(y_grid)
    vals = u0(y) - t * cost((y - x[None, :]) / t)
    return float(np.max(vals))


def default_y_grid(dim: int, radius: float, step: float = 5e-3) -> np.ndarray:
    if dim != 1:
        step = 5e-2 if dim == 2 else 1e-1
    n = int(np.ceil(radius / step))
    axis = np.arange(-n, n + 1) * step
    return np.stack(np.meshgrid(*([axis] * dim), indexing="ij"), axis=-1).reshape(-1, dim)


@dataclass(frozen=True)
class HopfColeEstimate:
    value: float
    stderr: float


def hopf_cole_oracle(
    u0: LatticeFunction,
    t: float,
    x,
    n_paths: int = 1_000_000,
    seed: int = 0,
    stream_id: int = 0,
) -> HopfColeEstimate:
    """Closed-form oracle for quadratic cost and standard Brownian noise:
    S(t)u0(x) = log E exp(u0(x + B_t)), estimated by log-mean-exp Monte Carlo."""
    x = np.asarray(x, dtype=float).reshape(-1)
    if t == 0:
        return HopfColeEstimate(float(u0(x)), 0.0)
    z = stream(seed, stream_id, TAG_ORACLE).standard_normal((n_paths, u0.dim))
    e = np.exp(u0(x[None, :] + np.sqrt(t) * z))
    mean = float(np.mean(e))
    se = float(np.std(e, ddof=1) / np.sqrt(n_paths))
    return HopfColeEstimate(float(np.log(mean)), se / mean)


def hopf_cole_values(
    u0: LatticeFunction,
    t: float,
    points: np.ndarray,
    n_paths: int = 200_000,
    seed: int = 0,
    stream_id: int = 0,
    chunk: int = 1 << 13,
) -> np.ndarray:
    """Vectorised log-mean-exp oracle over many points with shared draws."""
    pts = np.atleast_2d(points)
    if t == 0:
        return u0(pts)
    z = np.sqrt(t) * stream(seed, stream_id, TAG_ORACLE).standard_normal((n_paths, u0.dim))
    out = np.empty(pts.shape[0])
    for i in range(pts.shape[0]):
        acc = 0.0
        for j in range(0, n_paths, chunk):
            acc += float(np.sum(np.exp(u0(pts[i] + z[j : j + chunk]))))
        out[i] = np.log(acc / n_paths)
    return out


@dataclass
class RightContinuityDiagnostic:
    """Sup-plan errors of family(t_n, u_n) against the limit as t_n drops to 0."""

    t_seq: np.ndarray
    errors: np.ndarray
    tolerance: float
    passed: bool
    nonincreasing: bool

    def __str__(self):
        errs = ", ".join(f"{e:.3g}" for e in self.errors)
        return f"right-continuity passed={self.passed} errors=[{errs}] tol={self.tolerance:g}"


def right_continuity_probe(
    family: Callable[[float, LatticeFunction], LatticeFunction],
    t_seq: Sequence[float],
    u_seq: Sequence[LatticeFunction],
    u_limit: LatticeFunction,
    plan: SamplePlan,
    tolerance: float = 1e-2,
    floor_slack: float = 0.25,
) -> RightContinuityDiagnostic:
    """Probe strong right-continuity: sup-plan |family(t_n)u_n - u_limit| should
    fall below tolerance as t_n decreases (allowing a Monte Carlo floor)."""
    ts = np.asarray(list(t_seq), dtype=float)
    if ts.ndim != 1 or len(u_seq) != ts.shape[0]:
        raise ValueError("t_seq and u_seq must have matching lengths")
    if np.any(ts <= 0) or np.any(np.diff(ts) >= 0):
        raise ValueError("t_seq must be strictly decreasing and positive")
    errors = np.array(
        [sup_gap(family(float(tn), un), u_limit, plan) for tn, un in zip(ts, u_seq)]
    )
    floor = tolerance * floor_slack
    nonincreasing = bool(np.all(np.diff(errors) <= np.maximum(floor, 0.1 * errors[:-1])))
    passed = bool(errors[-1] <= tolerance)
    return RightContinuityDiagnostic(
        t_seq=ts, errors=errors, tolerance=tolerance, passed=passed, nonincreasing=nonincreasing
    )
