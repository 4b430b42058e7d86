"""Infinitesimal-generator estimation and the analytic generator formulas.

The generator of a semigroup is probed by difference quotients
(S(h)u - u)/h on a sample plan, extrapolated to h = 0 under a first-order
error model, and compared against the closed-form generators of the two
control problems.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional, Sequence

import numpy as np

from .costs import conjugate_cstar
from .dynamics import LevyTriplet
from .engine import LevyControlProblem, MCConfig, RobustOUProblem
from .fields import SmoothTestField
from .lattice import LatticeFunction, SamplePlan
from .rng import TAG_GENERATOR_JUMPS, stream


@dataclass
class GeneratorEstimate:
    """Difference-quotient tables and their h -> 0 extrapolation on a plan.

    ``raw_quotients[i]`` holds (S(h_i)u - u)/h at every plan point;
    ``extrapolated`` is the per-point intercept of a least-squares fit over
    the h sequence (at least 3 points). ``residuals`` records the per-h
    sup-norm of the fit residual; non-monotone residuals raise the ``noisy``
    flag (Monte Carlo noise dominating) but are not an error.
    """

    h_sequence: np.ndarray
    plan: SamplePlan
    raw_quotients: list
    extrapolated: np.ndarray
    slope: np.ndarray
    residuals: np.ndarray
    noisy: bool
    error_model: str = "h"

    def __post_init__(self):
        if np.any(np.diff(self.h_sequence) >= 0):
            raise ValueError("h sequence must be strictly decreasing")
        if self.h_sequence.shape[0] < 3:
            raise ValueError("extrapolation needs at least 3 quotient points")


def _design_matrix(hs: np.ndarray, error_model: str) -> np.ndarray:
    if error_model == "h":
        return np.stack([np.ones_like(hs), hs], axis=1)
    if error_model == "h+sqrt":
        return np.stack([np.ones_like(hs), hs, np.sqrt(hs)], axis=1)
    raise ValueError(f"unknown error model {error_model!r}")


def estimate_generator(
    s_operator: Callable[[float, LatticeFunction], LatticeFunction],
    u: SmoothTestField,
    h_seq: Sequence[float],
    plan: SamplePlan,
    mc: MCConfig,
    error_model: str = "h",
) -> GeneratorEstimate:
    """Estimate lim_{h->0} (S(h)u - u)/h on the plan by Richardson extrapolation.

    ``s_operator`` maps (h, u) to S(h)u; it is evaluated once per h with the
    caller's MCConfig already bound. The default error model assumes a
    first-order bias in h. Inf-sup operators develop O(sqrt(h)) boundary
    layers where the optimal control switches (the smoothed max behaves like
    E|grad u + noise| near its kink), so for those the mixed model
    ``error_model="h+sqrt"`` fits q(h) = L + C h + B sqrt(h); it needs at
    least 4 quotient points.
    """
    hs = np.asarray(list(h_seq), dtype=float)
    if np.any(hs <= 0) or np.any(hs > 1.0):
        raise ValueError("h sequence must lie in (0, 1]")
    A = _design_matrix(hs, error_model)
    if hs.shape[0] < A.shape[1] + 1:
        raise ValueError("h sequence too short for the chosen error model")
    u_lat = u.as_lattice()
    base = u_lat(plan.points)
    quotients = []
    for h in hs:
        sh = s_operator(float(h), u_lat)
        quotients.append((sh(plan.points) - base) / h)
    q = np.stack(quotients, axis=0)  # (n_h, n_points)
    coef, *_ = np.linalg.lstsq(A, q, rcond=None)
    intercept, slope = coef[0], coef[1]
    fit = A @ coef
    residuals = np.max(np.abs(q - fit), axis=1)
    noisy = bool(np.any(np.diff(residuals) > 0))
    return GeneratorEstimate(
        h_sequence=hs,
        plan=plan,
        raw_quotients=[q[i] for i in range(hs.shape[0])],
        extrapolated=intercept,
        slope=slope,
        residuals=residuals,
        noisy=noisy,
        error_model=error_model,
    )


def levy_generator_analytic(
    triplet: LevyTriplet,
    u: SmoothTestField,
    x,
    n_jump_mc: int = 200_000,
    seed: int = 0,
) -> float:
    """<gamma, grad u(x)> + 1/2 tr(cov hess u(x)) + jump part.

    The jump part is jump_rate * E[u(x+J) - u(x) - <grad u(x), J> 1{||J||<=1}]
    with the truncation-radius-1 convention, estimated with a fixed seeded
    draw so the result is deterministic.
    """
    x = np.asarray(x, dtype=float).reshape(1, -1)
    g = u.grad(x)[0]
    H = u.hess(x)[0]
    out = float(triplet.gamma @ g + 0.5 * np.trace(triplet.cov @ H))
    if triplet.jump_rate > 0:
        draws = triplet.jump_sampler.sample(
            stream(seed, TAG_GENERATOR_JUMPS), n_jump_mc
        )
        small = np.linalg.norm(draws, axis=1) <= 1.0
        vals = u.value(x + draws) - u.value(x) - (draws @ g) * small
        out += triplet.jump_rate * float(np.mean(vals))
    return out


def hjb_generator_levy(
    prob: LevyControlProblem,
    u: SmoothTestField,
    x,
    n_jump_mc: int = 200_000,
    seed: int = 0,
) -> float:
    """Analytic HJB generator: Levy generator plus cstar(grad u(x))."""
    x_arr = np.asarray(x, dtype=float).reshape(1, -1)
    g = u.grad(x_arr)[0]
    return levy_generator_analytic(prob.triplet, u, x, n_jump_mc, seed) + conjugate_cstar(
        prob.cost, g
    )


def isaacs_generator_ou(prob: RobustOUProblem, u: SmoothTestField, x) -> float:
    """<x, A^T grad u(x)> + max_a <b(x,a), grad u(x)> + min_s 1/2 tr(s^T Q s hess u(x)).

    Exact finite-dimensional evaluation; no Monte Carlo enters.
    """
    model = prob.model
    x_arr = np.asarray(x, dtype=float).reshape(1, -1)
    g = u.grad(x_arr)[0]
    H = u.hess(x_arr)[0]
    drift = float(x_arr[0] @ (model.A_mat.T @ g))
    control = max(float(model.b(x_arr, a)[0] @ g) for a in model.action_set)
    trace = min(0.5 * float(np.trace(s.T @ model.Q @ s @ H)) for s in model.Sigma)
    return drift + control + trace


def generator_values(
    gen_fn: Callable[..., float], points: np.ndarray, *args, **kwargs
) -> np.ndarray:
    """Evaluate a pointwise generator formula over an array of points."""
    pts = np.atleast_2d(points)
    return np.array([gen_fn(*args, x=pts[i], **kwargs) for i in range(pts.shape[0])])


def rel_sup_error(estimate: np.ndarray, reference: np.ndarray, floor: float = 1e-12) -> float:
    """sup |estimate - reference| / max(sup |reference|, floor)."""
    est = np.asarray(estimate, dtype=float)
    ref = np.asarray(reference, dtype=float)
    return float(np.max(np.abs(est - ref)) / max(np.max(np.abs(ref)), floor))
