"""Smooth bounded test fields with closed-form derivatives.

Gaussian-bump mixtures are the working class of twice-differentiable
functions: bounded, with certified gradient / Hessian bounds and nontrivial
curvature sign changes, so both branches of inf-sup reductions get hit.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .lattice import LatticeFunction
from .rng import TAG_FIELD, stream


@dataclass(frozen=True)
class SmoothTestField:
    """Twice-differentiable function with supplied gradient and Hessian.

    ``value`` maps (n, dim) -> (n,); ``grad`` maps (n, dim) -> (n, dim);
    ``hess`` maps (n, dim) -> (n, dim, dim), symmetric. Construction can be
    spot-validated against finite differences with :meth:`validate`.
    """

    dim: int
    value: Callable[[np.ndarray], np.ndarray]
    grad: Callable[[np.ndarray], np.ndarray]
    hess: Callable[[np.ndarray], np.ndarray]
    value_bound: float
    grad_bound: float
    hess_bound: float
    name: str = "field"

    def as_lattice(self) -> LatticeFunction:
        return LatticeFunction(
            self.dim, self.value, bound=self.value_bound, lipschitz=self.grad_bound,
            name=self.name,
        )

    def validate(self, points: np.ndarray, grad_rtol: float = 1e-4, hess_rtol: float = 1e-3):
        """Check grad/hess against central differences on the given points."""
        pts = np.atleast_2d(points)
        fd_step = 1e-4
        g = self.grad(pts)
        scale = max(self.grad_bound, 1e-8)
        for axis in range(self.dim):
            e = np.zeros(self.dim)
            e[axis] = fd_step
            fd = (self.value(pts + e) - self.value(pts - e)) / (2 * fd_step)
            if np.max(np.abs(fd - g[:, axis])) > grad_rtol * scale:
                raise ValueError(f"gradient mismatch along axis {axis}")
        H = self.hess(pts)
        if np.max(np.abs(H - np.swapaxes(H, 1, 2))) > 1e-12 * max(1.0, self.hess_bound):
            raise ValueError("hessian must be symmetric")
        hstep = 1e-3
        hscale = max(self.hess_bound, 1e-8)
        for i in range(self.dim):
            for j in range(i, self.dim):
                ei, ej = np.zeros(self.dim), np.zeros(self.dim)
                ei[i] = hstep
                ej[j] = hstep
                if i == j:
                    fd = (
                        self.value(pts + ei) - 2 * self.value(pts) + self.value(pts - ei)
                    ) / hstep**2
                else:
                    fd = (
                        self.value(pts + ei + ej)
                        - self.value(pts + ei - ej)
                        - self.value(pts - ei + ej)
                        + self.value(pts - ei - ej)
                    ) / (4 * hstep**2)
                if np.max(np.abs(fd - H[:, i, j])) > hess_rtol * hscale:
                    raise ValueError(f"hessian mismatch at ({i},{j})")
        return self


def bump_mixture(
    dim: int,
    centers: np.ndarray,
    widths: np.ndarray,
    weights: np.ndarray,
    name: str = "bumps",
) -> SmoothTestField:
    """sum_k w_k exp(-||x - c_k||^2 / (2 s_k^2)) with closed-form derivatives."""
    C = np.asarray(centers, dtype=float).reshape(-1, dim)
    S = np.asarray(widths, dtype=float).reshape(-1)
    W = np.asarray(weights, dtype=float).reshape(-1)
    if not (C.shape[0] == S.shape[0] == W.shape[0]):
        raise ValueError("centers, widths, weights must have matching lengths")
    if np.any(S <= 0):
        raise ValueError("widths must be positive")

    def _parts(pts: np.ndarray):
        diff = pts[:, None, :] - C[None, :, :]          # (n, k, d)
        q = np.sum(diff * diff, axis=2) / (2 * S**2)    # (n, k)
        return diff, np.exp(-q)

    def value(pts):
        _, e = _parts(np.atleast_2d(pts))
        return e @ W

    def grad(pts):
        diff, e = _parts(np.atleast_2d(pts))
        return np.einsum("nk,nkd->nd", e * (W / S**2), -diff)

    def hess(pts):
        pts = np.atleast_2d(pts)
        diff, e = _parts(pts)
        scaled = diff / S[None, :, None] ** 2           # (n, k, d)
        outer = np.einsum("nkd,nke->nkde", scaled, scaled)
        eye = np.eye(dim)[None, None, :, :] / (S**2)[None, :, None, None]
        return np.einsum("nk,nkde->nde", e * W, outer - eye)

    vb = float(np.sum(np.abs(W)))
    gb = float(np.sum(np.abs(W) * np.exp(-0.5) / S))
    hb = float(np.sum(np.abs(W) / S**2))
    return SmoothTestField(
        dim, value, grad, hess,
        value_bound=vb, grad_bound=gb, hess_bound=hb, name=name,
    )


def random_smooth_function(
    seed: int,
    dim: int,
    n_bumps: int = 3,
    bound: float = 1.0,
    center_radius: float = 1.5,
    width_range: tuple = (0.3, 1.5),
) -> SmoothTestField:
    """Seeded Gaussian-bump mixture with sup-norm at most ``bound``.

    Deterministic given the seed; weights are rescaled so the sum of their
    absolute values equals ``bound`` (a certified sup bound).
    """
    if n_bumps < 1:
        raise ValueError("n_bumps must be >= 1")
    rng = stream(seed, TAG_FIELD, dim, n_bumps)
    centers = rng.uniform(-center_radius, center_radius, size=(n_bumps, dim))
    widths = rng.uniform(width_range[0], width_range[1], size=n_bumps)
    weights = rng.uniform(-1.0, 1.0, size=n_bumps)
    total = np.sum(np.abs(weights))
    if total > 0 and bound > 0:
        weights = weights * (bound / total)
    elif bound == 0:
        weights = np.zeros(n_bumps)
    return bump_mixture(dim, centers, widths, weights, name=f"bumps(seed={seed})")


def constant_field(dim: int, value: float) -> SmoothTestField:
    v = float(value)
    return SmoothTestField(
        dim,
        lambda pts: np.full(np.atleast_2d(pts).shape[0], v),
        lambda pts: np.zeros_like(np.atleast_2d(pts)),
        lambda pts: np.zeros((np.atleast_2d(pts).shape[0], dim, dim)),
        value_bound=abs(v), grad_bound=0.0, hess_bound=0.0, name=f"const({v:g})",
    )


def clipped_abs_1d(clip: float = 4.0, smooth_eps: float = 0.01) -> LatticeFunction:
    """-|x| with a quadratic cap at the kink and a hard clip at -clip.

    Lipschitz-1, bounded by ``clip``; the kink at 0 is replaced on
    [-eps, eps] by the parabola -(x^2/(2 eps) + eps/2) so mesh interpolation
    stays accurate.
    """
    eps = float(smooth_eps)

    def _eval(pts: np.ndarray) -> np.ndarray:
        x = np.abs(pts[:, 0])
        v = np.where(x >= eps, -x, -(x * x / (2 * eps) + eps / 2))
        return np.maximum(v, -clip)

    return LatticeFunction(1, _eval, bound=float(clip), lipschitz=1.0, name="-|x| (clipped)")


def clipped_neg_square_1d(clip: float = 4.0) -> LatticeFunction:
    """max(-x^2, -clip): the standard initial condition for log-transform checks."""

    def _eval(pts: np.ndarray) -> np.ndarray:
        return np.maximum(-pts[:, 0] ** 2, -clip)

    return LatticeFunction(
        1, _eval, bound=float(clip), lipschitz=2.0 * np.sqrt(clip), name="-x^2 (clipped)"
    )
