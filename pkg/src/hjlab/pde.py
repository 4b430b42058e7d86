"""Independent 1-d explicit finite-difference solves of the limiting PDEs.

Used only as acceptance oracles for the Monte Carlo semigroups: a local
Lax-Friedrichs scheme for the drift-control HJB equation

    u_t = 1/2 sigma^2 u_xx + gamma u_x + cstar(u_x)

and an upwind scheme with per-node volatility selection for the inf-sup
equation

    u_t = a x u_x + max_a b(x,a) u_x + min_s 1/2 s^2 Q u_xx.

Both schemes are monotone under their CFL bounds and use edge-clamped
(Neumann) boundaries on an interval well wider than the sample plan.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .costs import RunningCost, conjugate_cstar
from .dynamics import LevyTriplet, OUModel
from .errors import ConfigurationError
from .lattice import SamplePlan


@dataclass(frozen=True)
class GridSolverSpec:
    """Spatial interval, steps and stability policy of the explicit solver."""

    x_lo: float
    x_hi: float
    dx: float
    dt: Optional[float] = None  # None: auto from the stability bound
    stability_factor: float = 0.9

    def __post_init__(self):
        if self.x_hi <= self.x_lo:
            raise ConfigurationError("empty spatial interval")
        if self.dx <= 0:
            raise ConfigurationError("dx must be positive")
        if not (0 < self.stability_factor <= 1):
            raise ConfigurationError("stability factor must lie in (0, 1]")

    @classmethod
    def for_plan(cls, plan: SamplePlan, dx: float = 0.01, buffer_factor: float = 2.0):
        if plan.dim != 1:
            raise ConfigurationError("grid solver is 1-d only")
        r = plan.radius * (1.0 + buffer_factor)
        return cls(x_lo=-r, x_hi=r, dx=dx)

    def grid(self) -> np.ndarray:
        n = int(np.round((self.x_hi - self.x_lo) / self.dx))
        return self.x_lo + np.arange(n + 1) * self.dx

    def contains_plan(self, plan: SamplePlan) -> bool:
        return self.x_lo <= -plan.radius and self.x_hi >= plan.radius

    def resolve_dt(self, diffusion_max: float, speed_max: float) -> float:
        denom = 2.0 * diffusion_max / self.dx**2 + speed_max / self.dx
        if denom <= 0:
            return self.stability_factor * self.dx  # pure transport-free case
        stable = self.stability_factor / denom
        if self.dt is None:
            return stable
        if self.dt > stable * (1.0 + 1e-12):
            raise ConfigurationError(
                f"dt={self.dt:g} violates the stability bound {stable:g}"
            )
        return self.dt


@dataclass
class GridSolution:
    """Time-indexed grid values of an explicit solve."""

    xs: np.ndarray
    times: np.ndarray
    tables: np.ndarray  # (n_times, n_nodes)

    def value(self, t: float, x) -> np.ndarray:
        k = int(np.argmin(np.abs(self.times - t)))
        return np.interp(np.asarray(x, dtype=float), self.xs, self.tables[k])

    def final(self) -> np.ndarray:
        return self.tables[-1]

    def to_csv(self, path: str) -> None:
        import csv

        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["t", "x", "u"])
            for k, t in enumerate(self.times):
                for j, x in enumerate(self.xs):
                    w.writerow([f"{t:.12g}", f"{x:.12g}", f"{self.tables[k, j]:.12g}"])


def _second_diff(u: np.ndarray, dx: float) -> np.ndarray:
    up = np.empty_like(u)
    um = np.empty_like(u)
    up[:-1], up[-1] = u[1:], u[-1]     # clamped ghost nodes
    um[1:], um[0] = u[:-1], u[0]
    return (up - 2 * u + um) / dx**2, (up - u) / dx, (u - um) / dx


def solve_hjb_levy_1d(
    u0_samples: np.ndarray,
    cost: RunningCost,
    triplet: LevyTriplet,
    spec: GridSolverSpec,
    t_final: float,
    lip_u0: float,
    n_stored: int = 9,
) -> GridSolution:
    """Explicit local Lax-Friedrichs solve of u_t = 1/2 s^2 u_xx + H(u_x),
    H(p) = gamma p + cstar(p). Gaussian-only noise (jumps are excluded).
    """
    if triplet.dim != 1 or cost.dim != 1:
        raise ConfigurationError("oracle is 1-d only")
    if triplet.jump_rate > 0:
        raise ConfigurationError("jump components are excluded from the PDE oracle")
    xs = spec.grid()
    u = np.asarray(u0_samples, dtype=float).copy()
    if u.shape != xs.shape:
        raise ConfigurationError("u0 samples must match the solver grid")
    sigma2 = float(triplet.cov[0, 0])
    gamma = float(triplet.gamma[0])

    # Hamiltonian table on a slope window the scheme cannot leave (the
    # monotone scheme is nonexpansive, so slopes stay within the initial
    # Lipschitz bound).
    p_max = lip_u0 * 1.5 + 1.0
    p_grid = np.linspace(-p_max, p_max, 801)
    h_table = gamma * p_grid + np.array([conjugate_cstar(cost, [p]) for p in p_grid])
    alpha = float(np.max(np.abs(np.diff(h_table) / np.diff(p_grid))))

    diffusion = 0.5 * sigma2 + 0.5 * alpha * spec.dx
    dt = spec.resolve_dt(diffusion_max=diffusion, speed_max=0.0)
    n_steps = max(1, int(np.ceil(t_final / dt)))
    dt = t_final / n_steps

    store_at = np.unique(np.linspace(0, n_steps, n_stored).astype(int))
    times, tables = [0.0], [u.copy()]
    for k in range(n_steps):
        d2, dp, dm = _second_diff(u, spec.dx)
        p_mid = 0.5 * (dp + dm)
        # local Lax-Friedrichs for u_t = H(u_x): dissipation +alpha/2 (p+ - p-)
        ham = np.interp(p_mid, p_grid, h_table) + 0.5 * alpha * (dp - dm)
        u = u + dt * (0.5 * sigma2 * d2 + ham)
        if (k + 1) in store_at:
            times.append((k + 1) * dt)
            tables.append(u.copy())
    return GridSolution(xs=xs, times=np.asarray(times), tables=np.stack(tables))


def isaacs_diffusion_audit(u_samples: np.ndarray, model: OUModel, spec: GridSolverSpec) -> np.ndarray:
    """Per-node diffusion coefficient the inf-sup scheme selects for a table."""
    d2, _, _ = _second_diff(np.asarray(u_samples, dtype=float), spec.dx)
    q = float(model.Q[0, 0])
    coeffs = np.array([0.5 * float(s[0, 0]) ** 2 * q for s in model.Sigma])
    return np.where(d2 >= 0, coeffs.min(), coeffs.max())


def solve_isaacs_ou_1d(
    u0_samples: np.ndarray,
    model: OUModel,
    spec: GridSolverSpec,
    t_final: float,
    n_stored: int = 9,
) -> GridSolution:
    """Explicit monotone solve of the 1-d inf-sup equation with upwinded
    drift terms and per-node selection of the minimising volatility."""
    if model.dim != 1:
        raise ConfigurationError("oracle is 1-d only")
    xs = spec.grid()
    u = np.asarray(u0_samples, dtype=float).copy()
    if u.shape != xs.shape:
        raise ConfigurationError("u0 samples must match the solver grid")
    a_lin = float(model.A_mat[0, 0])
    q = float(model.Q[0, 0])
    coeffs = np.array([0.5 * float(s[0, 0]) ** 2 * q for s in model.Sigma])
    d_min, d_max = float(coeffs.min()), float(coeffs.max())

    pts = xs.reshape(-1, 1)
    b_vals = np.stack([model.b(pts, a)[:, 0] for a in model.action_set])  # (n_a, n)
    drift_lin = a_lin * xs
    speed = float(np.max(np.abs(drift_lin)) + np.max(np.abs(b_vals)))
    dt = spec.resolve_dt(diffusion_max=d_max, speed_max=speed)
    n_steps = max(1, int(np.ceil(t_final / dt)))
    dt = t_final / n_steps

    store_at = np.unique(np.linspace(0, n_steps, n_stored).astype(int))
    times, tables = [0.0], [u.copy()]
    lin_p, lin_m = np.maximum(drift_lin, 0.0), np.minimum(drift_lin, 0.0)
    b_p, b_m = np.maximum(b_vals, 0.0), np.minimum(b_vals, 0.0)
    for k in range(n_steps):
        d2, dp, dm = _second_diff(u, spec.dx)
        diff_term = np.where(d2 >= 0, d_min, d_max) * d2
        ou_term = lin_p * dp + lin_m * dm
        ctrl_term = np.max(b_p * dp[None, :] + b_m * dm[None, :], axis=0)
        u = u + dt * (diff_term + ou_term + ctrl_term)
        if (k + 1) in store_at:
            times.append((k + 1) * dt)
            tables.append(u.copy())
    return GridSolution(xs=xs, times=np.asarray(times), tables=np.stack(tables))
