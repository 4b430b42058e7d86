"""Running costs and their numerical Legendre-Fenchel transforms.

A running cost c >= 0 with c(0) = 0 and superlinear growth determines three
transforms used throughout the control problems:

    cstar(b)   = sup_a ( <b, a> - c(a) )          (the Hamiltonian)
    cbar(M)    = sup_a ( M ||a|| - c(a) )
    cbarbar(v) = sup_{w >= 0} ( v w - cbar(w) )

All suprema are taken over a compact effective domain (a ball of
``domain_radius``) by nested-grid search; quadratic costs take exact
analytic fast paths.
"""

from __future__ import annotations

from typing import Callable, Optional, Sequence

import numpy as np

from .errors import ConfigurationError
from .rng import TAG_FIELD, stream

_DEFAULT_GRID_STEP = {1: 1e-2, 2: 5e-2, 3: 1e-1}
_CERT_RADII = (2.0, 4.0, 8.0, 16.0)


class RunningCost:
    """Nonnegative running cost on R^dim with a certified superlinear growth.

    ``fn`` maps an (n, dim) array to an (n,) array of costs. Construction
    asserts c(0) = 0, nonnegativity on sampled points, and that c(a)/||a||
    increases along every probed direction at radii {2, 4, 8, 16}; a cost
    failing the growth certificate (e.g. c == 0) is rejected.
    """

    def __init__(
        self,
        dim: int,
        fn: Callable[[np.ndarray], np.ndarray],
        domain_radius: float = 8.0,
        radial: bool = False,
        name: str = "custom",
        analytic_cstar: Optional[Callable[[np.ndarray], float]] = None,
        analytic_cbar: Optional[Callable[[float], float]] = None,
        analytic_cbarbar: Optional[Callable[[float], float]] = None,
    ):
        if dim < 1:
            raise ValueError("dim must be positive")
        if domain_radius <= 0:
            raise ValueError("domain_radius must be positive")
        self.dim = int(dim)
        self._fn = fn
        self.domain_radius = float(domain_radius)
        self.radial = bool(radial)
        self.name = name
        self.analytic_cstar = analytic_cstar
        self.analytic_cbar = analytic_cbar
        self.analytic_cbarbar = analytic_cbarbar
        self._grid_cache: dict = {}
        self.superlinearity_certificate = self._certify()

    def __call__(self, a) -> np.ndarray:
        pts = np.asarray(a, dtype=float)
        if pts.ndim == 1:
            if pts.shape[0] != self.dim:
                raise ValueError(f"action of length {pts.shape[0]}, expected dim {self.dim}")
            return float(np.asarray(self._fn(pts.reshape(1, -1)))[0])
        if pts.ndim != 2 or pts.shape[1] != self.dim:
            raise ValueError("actions must be (n, dim)")
        return np.asarray(self._fn(pts), dtype=float)

    def _certify(self) -> np.ndarray:
        at_zero = self(np.zeros(self.dim))
        if abs(at_zero) > 1e-12:
            raise ValueError(f"cost must vanish at 0, got c(0)={at_zero:g}")
        rng = stream(0, TAG_FIELD, self.dim)
        dirs = [np.eye(self.dim)[k] for k in range(self.dim)]
        extra = rng.standard_normal((8, self.dim))
        dirs += [d / np.linalg.norm(d) for d in extra]
        probes = rng.uniform(-self.domain_radius, self.domain_radius, size=(64, self.dim))
        if np.any(self(probes) < -1e-12):
            raise ValueError("cost must be nonnegative")
        cert = []
        for d in dirs:
            ratios = np.array([self(r * d) / r for r in _CERT_RADII])
            if np.any(np.diff(ratios) <= 1e-9):
                raise ValueError(
                    f"superlinearity certificate failed along direction {d}: "
                    f"c(a)/||a|| ratios {ratios} are not increasing"
                )
            cert.append(ratios)
        return np.asarray(cert)

    def _ball_grid(self, step: float) -> tuple[np.ndarray, np.ndarray]:
        """Nested symmetric grid on the effective-domain ball, with cached costs."""
        key = round(step, 12)
        if key not in self._grid_cache:
            n = int(np.ceil(self.domain_radius / step))
            axis = np.arange(-n, n + 1) * step
            pts = np.stack(
                np.meshgrid(*([axis] * self.dim), indexing="ij"), axis=-1
            ).reshape(-1, self.dim)
            pts = pts[np.linalg.norm(pts, axis=1) <= self.domain_radius + 1e-12]
            self._grid_cache[key] = (pts, self(pts))
        return self._grid_cache[key]

    def _radial_grid(self, step: float) -> tuple[np.ndarray, np.ndarray]:
        key = ("radial", round(step, 12))
        if key not in self._grid_cache:
            radii = np.arange(0.0, self.domain_radius + step / 2, step)
            pts = np.zeros((radii.shape[0], self.dim))
            pts[:, 0] = radii
            self._grid_cache[key] = (radii, self(pts))
        return self._grid_cache[key]


def quadratic_cost(dim: int, weight: float = 0.5, domain_radius: float = 8.0) -> RunningCost:
    """c(a) = weight * ||a||^2, with exact conjugates."""
    if weight <= 0:
        raise ValueError("weight must be positive")
    w = float(weight)
    return RunningCost(
        dim,
        lambda pts: w * np.sum(pts * pts, axis=1),
        domain_radius=domain_radius,
        radial=True,
        name=f"quadratic({w:g})",
        analytic_cstar=lambda b: float(np.dot(b, b)) / (4.0 * w),
        analytic_cbar=lambda M: M * M / (4.0 * w),
        analytic_cbarbar=lambda v: w * v * v,
    )


def quartic_cost(dim: int, weight: float = 1.0, domain_radius: float = 8.0) -> RunningCost:
    """c(a) = weight * ||a||^4 (conjugates by grid search)."""
    if weight <= 0:
        raise ValueError("weight must be positive")
    w = float(weight)
    return RunningCost(
        dim,
        lambda pts: w * np.sum(pts * pts, axis=1) ** 2,
        domain_radius=domain_radius,
        radial=True,
        name=f"quartic({w:g})",
    )


def custom_grid_cost(
    dim: int,
    fn: Callable[[np.ndarray], np.ndarray],
    domain_radius: float = 8.0,
    radial: bool = False,
    name: str = "custom-grid",
) -> RunningCost:
    return RunningCost(dim, fn, domain_radius=domain_radius, radial=radial, name=name)


def conjugate_cstar(cost: RunningCost, b, grid_step: Optional[float] = None) -> float:
    """cstar(b) = sup over the effective domain of <b, a> - c(a); always >= 0.

    Uses the exact analytic conjugate when the cost provides one and no
    explicit grid step is requested. Grid results are monotone under
    refinement because the symmetric grids are nested.
    """
    b = np.asarray(b, dtype=float).reshape(-1)
    if b.shape[0] != cost.dim:
        raise ValueError(f"slope of length {b.shape[0]}, expected dim {cost.dim}")
    if grid_step is None and cost.analytic_cstar is not None:
        return float(cost.analytic_cstar(b))
    step = grid_step if grid_step is not None else _DEFAULT_GRID_STEP[cost.dim]
    pts, cvals = cost._ball_grid(step)
    return float(np.max(pts @ b - cvals))


def cbar(cost: RunningCost, M: float, grid_step: Optional[float] = None) -> float:
    """cbar(M) = sup over the effective domain of M ||a|| - c(a), for M >= 0."""
    if M < 0:
        raise ValueError("M must be nonnegative")
    if grid_step is None and cost.analytic_cbar is not None:
        return float(cost.analytic_cbar(float(M)))
    step = grid_step if grid_step is not None else _DEFAULT_GRID_STEP[cost.dim]
    if cost.radial:
        radii, cvals = cost._radial_grid(step)
        return float(np.max(M * radii - cvals))
    pts, cvals = cost._ball_grid(step)
    return float(np.max(M * np.linalg.norm(pts, axis=1) - cvals))


def _cbar_table(cost: RunningCost, w_grid: np.ndarray, grid_step: Optional[float]) -> np.ndarray:
    if grid_step is None and cost.analytic_cbar is not None:
        return np.array([cost.analytic_cbar(float(w)) for w in w_grid])
    step = grid_step if grid_step is not None else _DEFAULT_GRID_STEP[cost.dim]
    if cost.radial:
        radii, cvals = cost._radial_grid(step)
    else:
        pts, cvals = cost._ball_grid(step)
        radii = np.linalg.norm(pts, axis=1)
    # max over the domain of w*r - c, vectorised over the w grid in chunks
    out = np.empty(w_grid.shape[0])
    chunk = max(1, int(2e7) // max(1, radii.shape[0]))
    for i in range(0, w_grid.shape[0], chunk):
        ws = w_grid[i : i + chunk]
        out[i : i + chunk] = np.max(ws[:, None] * radii[None, :] - cvals[None, :], axis=1)
    return out


def cbarbar(
    cost: RunningCost,
    v: float,
    w_max: Optional[float] = None,
    w_step: float = 1e-2,
    grid_step: Optional[float] = None,
) -> float:
    """cbarbar(v) = sup_{w in [0, w_max]} (v w - cbar(w)), for v >= 0.

    Returns +inf when the maximiser hits the search window boundary, which
    signals the window was too small to certify a finite value. The default
    window is 4x the domain radius (the maximiser sits at the cost's slope
    c'(v), which outgrows the domain radius for fast-growing costs).
    """
    if v < 0:
        raise ValueError("v must be nonnegative")
    if grid_step is None and cost.analytic_cbarbar is not None:
        return float(cost.analytic_cbarbar(float(v)))
    w_hi = 4.0 * cost.domain_radius if w_max is None else float(w_max)
    key = ("cbarbar", round(w_hi, 12), round(w_step, 12), grid_step)
    if key not in cost._grid_cache:
        w_grid = np.arange(0.0, w_hi + w_step / 2, w_step)
        cost._grid_cache[key] = (w_grid, _cbar_table(cost, w_grid, grid_step))
    w_grid, table = cost._grid_cache[key]
    vals = v * w_grid - table
    k = int(np.argmax(vals))
    if k == w_grid.shape[0] - 1 and w_grid.shape[0] > 1:
        return float("inf")
    return float(vals[k])


def t_optimal_control_bound(
    cost: RunningCost,
    lip_u: float,
    v_step: float = 1e-3,
    v_max: float = 64.0,
) -> float:
    """Smallest v-grid point with cbarbar(v) > 1 + lip_u * v.

    By superlinearity of cbarbar this bounds the average displacement rate
    of any near-optimal control, and is used to clamp action grids.
    """
    if lip_u < 0:
        raise ValueError("lip_u must be nonnegative")
    v_grid = np.arange(0.0, v_max + v_step / 2, v_step)
    if cost.analytic_cbarbar is not None:
        vals = np.array([cost.analytic_cbarbar(float(v)) for v in v_grid])
        hits = vals > 1.0 + lip_u * v_grid
    else:
        # vectorised scan; the w window mirrors the cbarbar default
        w_grid = np.arange(0.0, 4.0 * cost.domain_radius + 1e-2 / 2, 1e-2)
        table = _cbar_table(cost, w_grid, None)
        vals = np.max(v_grid[:, None] * w_grid[None, :] - table[None, :], axis=1)
        argmx = np.argmax(v_grid[:, None] * w_grid[None, :] - table[None, :], axis=1)
        vals = np.where(argmx == w_grid.shape[0] - 1, np.inf, vals)
        hits = vals > 1.0 + lip_u * v_grid
    idx = np.nonzero(hits)[0]
    if idx.size == 0:
        raise ConfigurationError(
            f"no v <= {v_max} satisfies cbarbar(v) > 1 + {lip_u:g} v; widen the window"
        )
    return float(v_grid[idx[0]])
