"""Bounded functions on R^d with lattice operations and sampled seminorms.

Functions are evaluator objects (closures), not grids. Order, seminorms and
convergence are always probed on explicit, reproducible sample plans: a
deterministic grid plus a seeded low-discrepancy fill inside a ball.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np
from scipy.stats import qmc

from .errors import BoundViolationError
from .rng import TAG_PLAN_FILL, stream


class LatticeFunction:
    """A bounded real function on R^dim with a certified sup-norm bound.

    The evaluator must be pure and vectorised: it maps an (n, dim) array to
    an (n,) array and keeps no mutable state, so instances are safe to call
    concurrently. ``bound`` is a conservative certificate; every evaluation
    is checked against it. ``lipschitz``, when present, can be spot-checked
    on sampled pairs with :meth:`check_lipschitz`.
    """

    __slots__ = ("dim", "bound", "lipschitz", "name", "_eval")

    def __init__(
        self,
        dim: int,
        eval_fn: Callable[[np.ndarray], np.ndarray],
        bound: float,
        lipschitz: Optional[float] = None,
        name: str = "",
    ):
        if dim < 1:
            raise ValueError(f"dim must be a positive integer, got {dim}")
        if not np.isfinite(bound) or bound < 0:
            raise ValueError(f"bound must be a finite nonnegative real, got {bound}")
        if lipschitz is not None and (not np.isfinite(lipschitz) or lipschitz < 0):
            raise ValueError(f"lipschitz must be nonnegative, got {lipschitz}")
        self.dim = int(dim)
        self.bound = float(bound)
        self.lipschitz = None if lipschitz is None else float(lipschitz)
        self.name = name
        self._eval = eval_fn

    def _coerce(self, points) -> tuple[np.ndarray, bool]:
        pts = np.asarray(points, dtype=float)
        if pts.ndim == 0:
            if self.dim != 1:
                raise ValueError("scalar input only valid for dim=1")
            return pts.reshape(1, 1), True
        if pts.ndim == 1:
            if pts.shape[0] == self.dim:
                return pts.reshape(1, self.dim), True
            if self.dim == 1:
                return pts.reshape(-1, 1), False
            raise ValueError(f"point of length {pts.shape[0]} does not match dim={self.dim}")
        if pts.ndim == 2:
            if pts.shape[1] != self.dim:
                raise ValueError(f"points have dim {pts.shape[1]}, expected {self.dim}")
            return pts, False
        raise ValueError("points must be scalar, (dim,) or (n, dim)")

    def __call__(self, points):
        pts, single = self._coerce(points)
        vals = np.asarray(self._eval(pts), dtype=float).reshape(-1)
        if vals.shape[0] != pts.shape[0]:
            raise ValueError("evaluator returned wrong number of values")
        if vals.size:
            worst = float(np.max(np.abs(vals)))
            if worst > self.bound + 1e-9 * max(1.0, self.bound):
                raise BoundViolationError(
                    f"|{self.name or 'u'}| reached {worst:.6g} > certified bound {self.bound:.6g}"
                )
        return float(vals[0]) if single else vals

    def check_lipschitz(self, points_a: np.ndarray, points_b: np.ndarray, slack: float = 1e-9) -> float:
        """Spot-assert the Lipschitz certificate on the given point pairs.

        Returns the worst ratio |u(x)-u(y)| / ||x-y||; raises if it exceeds
        the certificate.
        """
        if self.lipschitz is None:
            raise ValueError("function carries no lipschitz certificate")
        a = np.atleast_2d(points_a)
        b = np.atleast_2d(points_b)
        gaps = np.abs(self(a) - self(b))
        dists = np.linalg.norm(a - b, axis=1)
        keep = dists > 0
        if not np.any(keep):
            return 0.0
        ratios = gaps[keep] / dists[keep]
        worst = float(np.max(ratios))
        if worst > self.lipschitz + slack * max(1.0, self.lipschitz):
            raise BoundViolationError(
                f"Lipschitz ratio {worst:.6g} exceeds certificate {self.lipschitz:.6g}"
            )
        return worst


def constant(dim: int, value: float) -> LatticeFunction:
    """The constant function x -> value."""
    v = float(value)
    return LatticeFunction(
        dim, lambda pts: np.full(pts.shape[0], v), bound=abs(v), lipschitz=0.0,
        name=f"const({v:g})",
    )


def from_callable(
    dim: int,
    fn: Callable[[np.ndarray], np.ndarray],
    bound: float,
    lipschitz: Optional[float] = None,
    name: str = "",
) -> LatticeFunction:
    return LatticeFunction(dim, fn, bound=bound, lipschitz=lipschitz, name=name)


def _check_same_dim(u: LatticeFunction, v: LatticeFunction) -> None:
    if u.dim != v.dim:
        raise ValueError(f"dimension mismatch: {u.dim} vs {v.dim}")


def _merged_lipschitz(u: LatticeFunction, v: LatticeFunction, combine) -> Optional[float]:
    if u.lipschitz is None or v.lipschitz is None:
        return None
    return combine(u.lipschitz, v.lipschitz)


def lattice_join(u: LatticeFunction, v: LatticeFunction) -> LatticeFunction:
    """Pointwise maximum u v v."""
    _check_same_dim(u, v)
    return LatticeFunction(
        u.dim,
        lambda pts: np.maximum(u(pts), v(pts)),
        bound=max(u.bound, v.bound),
        lipschitz=_merged_lipschitz(u, v, max),
        name=f"({u.name})v({v.name})",
    )


def lattice_meet(u: LatticeFunction, v: LatticeFunction) -> LatticeFunction:
    """Pointwise minimum u ^ v."""
    _check_same_dim(u, v)
    return LatticeFunction(
        u.dim,
        lambda pts: np.minimum(u(pts), v(pts)),
        bound=max(u.bound, v.bound),
        lipschitz=_merged_lipschitz(u, v, max),
        name=f"({u.name})^({v.name})",
    )


def lattice_abs(u: LatticeFunction) -> LatticeFunction:
    """Pointwise absolute value, i.e. the join of u and -u."""
    return LatticeFunction(
        u.dim,
        lambda pts: np.abs(u(pts)),
        bound=u.bound,
        lipschitz=u.lipschitz,
        name=f"|{u.name}|",
    )


def affine_combine(lam: float, u: LatticeFunction, v: LatticeFunction) -> LatticeFunction:
    """lam*u + (1-lam)*v for lam in [0, 1]."""
    if not (0.0 <= lam <= 1.0):
        raise ValueError(f"lambda must lie in [0, 1], got {lam}")
    _check_same_dim(u, v)
    lam = float(lam)
    return LatticeFunction(
        u.dim,
        lambda pts: lam * u(pts) + (1.0 - lam) * v(pts),
        bound=lam * u.bound + (1.0 - lam) * v.bound,
        lipschitz=_merged_lipschitz(u, v, lambda a, b: lam * a + (1.0 - lam) * b),
        name=f"{lam:g}*({u.name})+{1 - lam:g}*({v.name})",
    )


def lin_combine(c1: float, u: LatticeFunction, c2: float, v: LatticeFunction) -> LatticeFunction:
    """General linear combination c1*u + c2*v (bounds propagate conservatively)."""
    _check_same_dim(u, v)
    c1, c2 = float(c1), float(c2)
    lip = _merged_lipschitz(u, v, lambda a, b: abs(c1) * a + abs(c2) * b)
    return LatticeFunction(
        u.dim,
        lambda pts: c1 * u(pts) + c2 * v(pts),
        bound=abs(c1) * u.bound + abs(c2) * v.bound,
        lipschitz=lip,
        name=f"{c1:g}*({u.name})+{c2:g}*({v.name})",
    )


def negate(u: LatticeFunction) -> LatticeFunction:
    return LatticeFunction(
        u.dim, lambda pts: -u(pts), bound=u.bound, lipschitz=u.lipschitz, name=f"-({u.name})"
    )


def shift(u: LatticeFunction, offset: float) -> LatticeFunction:
    """u + offset."""
    off = float(offset)
    return LatticeFunction(
        u.dim,
        lambda pts: u(pts) + off,
        bound=u.bound + abs(off),
        lipschitz=u.lipschitz,
        name=f"({u.name})+{off:g}",
    )


@dataclass(frozen=True)
class SamplePlan:
    """Finite, deterministic evaluation plan inside a closed ball.

    Combines a regular grid (restricted to the ball) with a seeded Sobol
    fill, so every seminorm and order comparison in the package is taken
    over the same reproducible point set.
    """

    dim: int
    points: np.ndarray
    radius: float

    def __post_init__(self):
        if self.dim < 1:
            raise ValueError("dim must be positive")
        if self.radius <= 0:
            raise ValueError("radius must be positive")
        pts = np.asarray(self.points, dtype=float)
        if pts.ndim != 2 or pts.shape[1] != self.dim or pts.shape[0] == 0:
            raise ValueError("points must be a nonempty (n, dim) array")
        norms = np.linalg.norm(pts, axis=1)
        if np.any(norms > self.radius + 1e-12):
            raise ValueError("all plan points must lie in the closed ball")
        if np.unique(pts, axis=0).shape[0] != pts.shape[0]:
            raise ValueError("plan points must be duplicate-free")
        object.__setattr__(self, "points", pts)

    @property
    def n_points(self) -> int:
        return self.points.shape[0]


def build_plan(
    dim: int,
    radius: Optional[float] = None,
    grid_per_axis: Optional[int] = None,
    qmc_points: Optional[int] = None,
    seed: int = 0,
) -> SamplePlan:
    """Default plan: 41^d grid + 256 Sobol points in the radius-2 ball for
    d <= 2; 21^3 grid in the radius-1.5 ball for d = 3."""
    if dim <= 2:
        radius = 2.0 if radius is None else radius
        grid_per_axis = 41 if grid_per_axis is None else grid_per_axis
        qmc_points = 256 if qmc_points is None else qmc_points
    elif dim == 3:
        radius = 1.5 if radius is None else radius
        grid_per_axis = 21 if grid_per_axis is None else grid_per_axis
        qmc_points = 0 if qmc_points is None else qmc_points
    else:
        raise ValueError("plans support dim <= 3")

    axes = [np.linspace(-radius, radius, grid_per_axis) for _ in range(dim)]
    grid = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, dim)
    grid = grid[np.linalg.norm(grid, axis=1) <= radius + 1e-12]

    pieces = [grid]
    if qmc_points > 0:
        sob = qmc.Sobol(d=dim, scramble=True, seed=stream(seed, TAG_PLAN_FILL))
        fill = []
        need = qmc_points
        while need > 0:
            cand = radius * (2.0 * sob.random(2 * need) - 1.0)
            cand = cand[np.linalg.norm(cand, axis=1) <= radius]
            fill.append(cand[:need])
            need -= min(need, cand.shape[0])
        pieces.append(np.concatenate(fill, axis=0))
    pts = np.concatenate(pieces, axis=0)
    pts = np.unique(pts, axis=0)
    return SamplePlan(dim=dim, points=pts, radius=float(radius))


def sup_seminorm(u: LatticeFunction, plan: SamplePlan) -> float:
    """max over plan points of |u(x)| — a lattice seminorm on the sampled proxy."""
    if u.dim != plan.dim:
        raise ValueError(f"dimension mismatch: function {u.dim}, plan {plan.dim}")
    return float(np.max(np.abs(u(plan.points))))


def sup_gap(u: LatticeFunction, v: LatticeFunction, plan: SamplePlan) -> float:
    """max over plan points of |u(x) - v(x)|."""
    _check_same_dim(u, v)
    if u.dim != plan.dim:
        raise ValueError("dimension mismatch with plan")
    return float(np.max(np.abs(u(plan.points) - v(plan.points))))


@dataclass
class MixedConvergenceDiagnostic:
    """Result of probing uniform-boundedness + sup-convergence on growing balls."""

    sup_bound: float
    per_plan_errors: list  # one error sequence (over n) per plan
    tail_errors: list  # last error per plan
    tolerance: float
    convergent: bool

    def __str__(self):
        tails = ", ".join(f"{e:.3g}" for e in self.tail_errors)
        return (
            f"mixed-convergent={self.convergent} sup_bound={self.sup_bound:.6g} "
            f"tail_errors=[{tails}] tol={self.tolerance:g}"
        )


def mixed_convergence_probe(
    seq: Sequence[LatticeFunction],
    limit: LatticeFunction,
    plans: Sequence[SamplePlan],
    tolerance: float = 1e-3,
    bound_cap: Optional[float] = None,
) -> MixedConvergenceDiagnostic:
    """Probe sequential convergence in the bounded-uniform-on-compacts sense.

    Flags the sequence convergent iff sup-norm bounds stay uniformly bounded
    (below ``bound_cap`` when given) and, on every plan, the tail sup-error
    against the limit falls below ``tolerance``.
    """
    if len(seq) == 0:
        raise ValueError("sequence must be nonempty")
    if any(u.dim != limit.dim for u in seq):
        raise ValueError("dimension mismatch inside sequence")
    radii = [p.radius for p in plans]
    if any(r2 < r1 for r1, r2 in zip(radii, radii[1:])):
        raise ValueError("plans must have nondecreasing radii")

    sup_bound = max(u.bound for u in seq)
    per_plan = []
    tails = []
    for plan in plans:
        errs = [sup_gap(u, limit, plan) for u in seq]
        per_plan.append(errs)
        tails.append(errs[-1])
    bounded = sup_bound <= (np.inf if bound_cap is None else bound_cap)
    convergent = bool(bounded and all(t <= tolerance for t in tails))
    return MixedConvergenceDiagnostic(
        sup_bound=sup_bound,
        per_plan_errors=per_plan,
        tail_errors=tails,
        tolerance=tolerance,
        convergent=convergent,
    )
