"""Driving noises and controlled state processes in R^d.

Simulation is vectorised over paths and fully deterministic given
(seed, stream_id): every step draws from its own counter-based stream, so
identical keys give bit-identical batches regardless of scheduling.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from typing import Callable, List, Optional, Sequence

import numpy as np
from scipy.linalg import expm
from scipy.stats import norm

from .errors import ModelError, PolicyError
from .lattice import LatticeFunction
from .rng import TAG_GAUSS, TAG_JUMP_COUNT, TAG_JUMP_SIZE, stream


@dataclass(frozen=True)
class JumpSampler:
    """Seeded sampler of jump sizes with known small-jump mean.

    ``mean_small`` is E[J 1{||J|| <= 1}] under the truncation-radius-1
    convention; it enters the compensator correction that keeps the
    simulated drift consistent with the generator formula. ``reach`` is a
    high-quantile norm bound used to size evaluation meshes.
    """

    dim: int
    sample: Callable[[np.random.Generator, int], np.ndarray]
    mean_small: np.ndarray
    reach: float
    name: str = "jump"

    def __post_init__(self):
        object.__setattr__(self, "mean_small", np.asarray(self.mean_small, dtype=float).reshape(self.dim))


def constant_jump(dim: int, size) -> JumpSampler:
    z = np.asarray(size, dtype=float).reshape(dim)
    small = z if np.linalg.norm(z) <= 1.0 else np.zeros(dim)
    return JumpSampler(
        dim,
        lambda rng, n: np.tile(z, (n, 1)),
        mean_small=small,
        reach=float(np.linalg.norm(z)),
        name=f"constant({size})",
    )


def uniform_ball_jump(dim: int, radius: float) -> JumpSampler:
    """Jumps uniform on the ball of the given radius (symmetric: zero mean)."""

    def _sample(rng: np.random.Generator, n: int) -> np.ndarray:
        g = rng.standard_normal((n, dim))
        g /= np.maximum(np.linalg.norm(g, axis=1, keepdims=True), 1e-300)
        r = radius * rng.random(n) ** (1.0 / dim)
        return g * r[:, None]

    return JumpSampler(dim, _sample, mean_small=np.zeros(dim), reach=float(radius),
                       name=f"uniform_ball({radius:g})")


def gaussian_jump_1d(mean: float, std: float) -> JumpSampler:
    """Scalar Gaussian jumps with the truncated first moment in closed form."""
    m, s = float(mean), float(std)
    if s <= 0:
        raise ValueError("std must be positive")
    alpha, beta = (-1.0 - m) / s, (1.0 - m) / s
    # E[Z 1{-1 < Z < 1}] for Z ~ N(m, s^2)
    small = m * (norm.cdf(beta) - norm.cdf(alpha)) - s * (norm.pdf(beta) - norm.pdf(alpha))
    return JumpSampler(
        1,
        lambda rng, n: (m + s * rng.standard_normal(n)).reshape(n, 1),
        mean_small=np.array([small]),
        reach=abs(m) + 5.0 * s,
        name=f"gaussian({m:g},{s:g})",
    )


def gaussian_draws(
    rng: np.random.Generator, n: int, dim: int, stratified: bool = False
) -> np.ndarray:
    """Standard normal draws; optionally stratified along the first axis.

    Stratification draws one point per probability stratum (i + U_i)/n, so
    empirical averages of smooth functions converge far faster than 1/sqrt(n)
    while each marginal stays exactly N(0, 1).
    """
    if not stratified:
        return rng.standard_normal((n, dim))
    u = (np.arange(n) + rng.random(n)) / n
    z = np.empty((n, dim))
    z[:, 0] = norm.ppf(u)
    if dim > 1:
        z[:, 1:] = rng.standard_normal((n, dim - 1))
    return z


def _psd_factor(mat: np.ndarray) -> np.ndarray:
    """Factor F with F F^T = mat for PSD mat; exactly zero for a zero matrix.

    Eigendecomposition with clipped eigenvalues, so no jitter noise leaks
    into nominally deterministic (zero-covariance) models.
    """
    if not np.any(mat):
        return np.zeros_like(mat)
    vals, vecs = np.linalg.eigh((mat + mat.T) / 2)
    return vecs * np.sqrt(np.clip(vals, 0.0, None))[None, :]


@dataclass(frozen=True)
class LevyTriplet:
    """Drift, Gaussian covariance and compound-Poisson jumps of a Levy process."""

    dim: int
    gamma: np.ndarray
    cov: np.ndarray
    jump_rate: float = 0.0
    jump_sampler: Optional[JumpSampler] = None

    def __post_init__(self):
        gamma = np.asarray(self.gamma, dtype=float).reshape(self.dim)
        cov = np.asarray(self.cov, dtype=float).reshape(self.dim, self.dim)
        if not np.allclose(cov, cov.T, atol=1e-12):
            raise ModelError("cov must be symmetric")
        eig = np.linalg.eigvalsh(cov)
        if np.min(eig) < -1e-12:
            raise ModelError(f"cov must be PSD; smallest eigenvalue {np.min(eig):.3g}")
        if self.jump_rate < 0:
            raise ModelError("jump_rate must be nonnegative")
        if self.jump_rate > 0 and self.jump_sampler is None:
            raise ModelError("a jump sampler is required when jump_rate > 0")
        if self.jump_sampler is not None and self.jump_sampler.dim != self.dim:
            raise ModelError("jump sampler dimension mismatch")
        try:
            np.linalg.cholesky(cov + 1e-12 * np.eye(self.dim))
        except np.linalg.LinAlgError as exc:
            raise ModelError("covariance Cholesky failed after 1e-12 jitter") from exc
        object.__setattr__(self, "gamma", gamma)
        object.__setattr__(self, "cov", cov)
        object.__setattr__(self, "_factor", _psd_factor(cov))

    @property
    def drift_effective(self) -> np.ndarray:
        """Simulation drift: gamma minus the small-jump compensator.

        With jumps beyond the truncation radius this equals gamma, so the
        generator formula and the sample paths describe the same process.
        """
        if self.jump_rate > 0:
            return self.gamma - self.jump_rate * self.jump_sampler.mean_small
        return self.gamma

    def sample_increments(
        self, h: float, n: int, rng: np.random.Generator, stratified: bool = False
    ) -> np.ndarray:
        """n draws of the increment over a step of length h.

        ``stratified`` (1-d only) replaces the raw Gaussian draws by
        stratified ones — a variance-reduction step that leaves the law
        unchanged but makes kernel averages nearly quadrature-exact.
        """
        out = np.tile(self.drift_effective * h, (n, 1))
        if np.any(self.cov):
            z = gaussian_draws(rng, n, self.dim, stratified)
            out += np.sqrt(h) * z @ self._factor.T
        if self.jump_rate > 0:
            counts = rng.poisson(self.jump_rate * h, size=n)
            total = int(counts.sum())
            if total > 0:
                sizes = self.jump_sampler.sample(rng, total)
                idx = np.repeat(np.arange(n), counts)
                np.add.at(out, idx, sizes)
        return out

    def noise_spread(self, t: float) -> float:
        """Conservative norm bound on the random part over horizon t (mesh sizing)."""
        gauss = 4.0 * np.sqrt(max(np.trace(self.cov), 0.0) * t)
        jump = 0.0
        if self.jump_rate > 0:
            lam = self.jump_rate * t
            jump = (lam + 5.0 * np.sqrt(lam) + 5.0) * self.jump_sampler.reach
        return float(gauss + jump + np.linalg.norm(self.drift_effective) * t)


def zero_triplet(dim: int) -> LevyTriplet:
    return LevyTriplet(dim, np.zeros(dim), np.zeros((dim, dim)))


def brownian_triplet(dim: int, scale: float = 1.0) -> LevyTriplet:
    return LevyTriplet(dim, np.zeros(dim), scale * np.eye(dim))


@dataclass(frozen=True)
class OUModel:
    """Controlled Ornstein-Uhlenbeck dynamics with drift actions and a
    finite family of volatility operators.

    ``b`` maps (points (n, dim), action) -> (n, dim) drifts; ``lip_C`` is a
    constant with ||b(0,a)|| <= C and ||b(x,a)-b(y,a)|| <= C ||x-y|| for all
    listed actions (spot-asserted at construction). ``omega`` satisfies
    ||exp(tA)|| <= exp(omega t) on [0, horizon], certified numerically.
    """

    dim: int
    A_mat: np.ndarray
    b: Callable[[np.ndarray, object], np.ndarray]
    action_set: tuple
    lip_C: float
    Sigma: tuple
    Q: np.ndarray
    omega: Optional[float] = None
    horizon: float = 2.0

    def __post_init__(self):
        A = np.asarray(self.A_mat, dtype=float).reshape(self.dim, self.dim)
        Q = np.asarray(self.Q, dtype=float).reshape(self.dim, self.dim)
        eig = np.linalg.eigvalsh((Q + Q.T) / 2)
        if np.min(eig) < -1e-12:
            raise ModelError("Q must be PSD")
        if len(self.Sigma) == 0:
            raise ModelError("Sigma must be nonempty")
        sig = tuple(np.asarray(s, dtype=float).reshape(self.dim, self.dim) for s in self.Sigma)
        if max(np.linalg.norm(s, 2) for s in sig) > 1e6:
            raise ModelError("Sigma must be norm-bounded")
        if len(self.action_set) == 0:
            raise ModelError("action_set must be nonempty")
        try:
            np.linalg.cholesky(Q + 1e-12 * np.eye(self.dim))
        except np.linalg.LinAlgError as exc:
            raise ModelError("Q Cholesky failed after 1e-12 jitter") from exc
        qfactor = _psd_factor(Q)
        object.__setattr__(self, "A_mat", A)
        object.__setattr__(self, "Q", Q)
        object.__setattr__(self, "Sigma", sig)
        object.__setattr__(self, "action_set", tuple(self.action_set))
        object.__setattr__(self, "_qchol", qfactor)
        self._spot_check_b()
        object.__setattr__(self, "omega", self._certify_omega())

    def _spot_check_b(self):
        rng = stream(1, TAG_GAUSS, self.dim)
        x = rng.standard_normal((16, self.dim)) * 2.0
        y = rng.standard_normal((16, self.dim)) * 2.0
        zero = np.zeros((1, self.dim))
        slack = 1e-9 * max(1.0, self.lip_C)
        for a in self.action_set:
            b0 = np.linalg.norm(self.b(zero, a)[0])
            if b0 > self.lip_C + slack:
                raise ModelError(f"||b(0,{a})|| = {b0:.4g} exceeds lip_C = {self.lip_C:g}")
            gaps = np.linalg.norm(self.b(x, a) - self.b(y, a), axis=1)
            dists = np.linalg.norm(x - y, axis=1)
            if np.any(gaps > self.lip_C * dists + slack):
                raise ModelError(f"b is not {self.lip_C:g}-Lipschitz for action {a}")

    def _certify_omega(self) -> float:
        ts = np.linspace(0.0, self.horizon, 33)[1:]
        norms = np.array([np.linalg.norm(expm(t * self.A_mat), 2) for t in ts])
        needed = float(np.max(np.log(np.maximum(norms, 1e-300)) / ts))
        if self.omega is None:
            return max(needed, 0.0) if needed > 0 else needed
        if np.any(norms > np.exp(self.omega * ts) * (1.0 + 1e-9)):
            raise ModelError(
                f"||exp(tA)|| exceeds exp(omega t) on the horizon; need omega >= {needed:.6g}"
            )
        return float(self.omega)

    def step_matrix(self, h: float) -> np.ndarray:
        return expm(h * self.A_mat)

    def action_index(self, a) -> int:
        for i, ai in enumerate(self.action_set):
            if np.array_equal(np.asarray(ai, dtype=float), np.asarray(a, dtype=float)):
                return i
        raise PolicyError(f"action {a} is not in the action set")

    def sigma_index(self, s) -> int:
        for i, si in enumerate(self.Sigma):
            if np.array_equal(si, np.asarray(s, dtype=float).reshape(self.dim, self.dim)):
                return i
        raise PolicyError("volatility matrix is not in Sigma")


@dataclass(frozen=True)
class PathBatch:
    """Simulated paths on a common time grid, reproducible from (seed, stream_id)."""

    n_paths: int
    time_grid: np.ndarray
    states: np.ndarray
    seed: int
    stream_id: int

    def __post_init__(self):
        tg = np.asarray(self.time_grid, dtype=float)
        st = np.asarray(self.states, dtype=float)
        if tg.ndim != 1 or tg[0] != 0.0 or np.any(np.diff(tg) <= 0):
            raise ValueError("time grid must start at 0 and increase strictly")
        if st.shape[0] != self.n_paths or st.shape[1] != tg.shape[0]:
            raise ValueError("states array shape inconsistent with grid/paths")
        if st.shape[0] > 0 and not np.all(st[:, 0, :] == st[0, 0, :]):
            raise ValueError("all paths must share the initial point")
        object.__setattr__(self, "time_grid", tg)
        object.__setattr__(self, "states", st)

    @property
    def dim(self) -> int:
        return self.states.shape[2]

    def step_increments(self) -> np.ndarray:
        """(n_paths, n_steps, dim) array of per-step increments."""
        return np.diff(self.states, axis=1)

    def to_csv(self, path: str) -> None:
        """One row per path per time point: path, t, x_1..x_d."""
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["path", "t"] + [f"x{k + 1}" for k in range(self.dim)])
            for p in range(self.n_paths):
                for j, t in enumerate(self.time_grid):
                    w.writerow([p, f"{t:.12g}"] + [f"{v:.12g}" for v in self.states[p, j]])


def _validate_grid(time_grid) -> np.ndarray:
    tg = np.asarray(time_grid, dtype=float)
    if tg.ndim != 1 or tg.shape[0] < 2 or tg[0] != 0.0 or np.any(np.diff(tg) <= 0):
        raise ValueError("time grid must start at 0 and increase strictly")
    return tg


def simulate_levy_increments(
    triplet: LevyTriplet,
    time_grid,
    n_paths: int,
    seed: int,
    stream_id: int = 0,
) -> PathBatch:
    """Simulate the Levy process started at 0 on the time grid.

    states[:, k, :] holds the accumulated increments up to time_grid[k];
    per-step increments follow drift*h + Gaussian(0, cov*h) + compound
    Poisson (rate jump_rate*h) with the compensated-drift convention.
    """
    tg = _validate_grid(time_grid)
    if n_paths < 1:
        raise ValueError("n_paths must be >= 1")
    states = np.zeros((n_paths, tg.shape[0], triplet.dim))
    for k in range(tg.shape[0] - 1):
        h = tg[k + 1] - tg[k]
        rng = stream(seed, stream_id, k, TAG_GAUSS)
        states[:, k + 1, :] = states[:, k, :] + triplet.sample_increments(h, n_paths, rng)
    return PathBatch(n_paths, tg, states, seed, stream_id)


def _resolve_actions(policy_out, n_paths: int, n_choices: int, what: str) -> np.ndarray:
    idx = np.asarray(policy_out)
    if idx.ndim == 0:
        idx = np.full(n_paths, int(idx))
    if idx.shape != (n_paths,) or not np.issubdtype(idx.dtype, np.integer):
        raise PolicyError(f"{what} policy must return an int index or (n_paths,) int array")
    if np.any(idx < 0) or np.any(idx >= n_choices):
        raise PolicyError(f"{what} policy produced an index outside the admissible set")
    return idx


def simulate_ou_mild(
    model: OUModel,
    x0,
    alpha_policy: Callable[[int, np.ndarray], object],
    theta_policy: Callable[[int, np.ndarray], object],
    time_grid,
    n_paths: int,
    seed: int,
    stream_id: int = 0,
) -> PathBatch:
    """Exponential-Euler discretisation of the mild controlled OU dynamics:

        x_{k+1} = e^{hA} x_k + h e^{hA} b(x_k, a_k) + e^{hA} theta_k dB_k

    with dB_k ~ Gaussian(0, Q h). Policies map (step index, states) to an
    index into action_set / Sigma (scalar or per-path int array); for A = 0
    the step is exactly Euler-Maruyama.
    """
    tg = _validate_grid(time_grid)
    x0 = np.asarray(x0, dtype=float).reshape(model.dim)
    states = np.zeros((n_paths, tg.shape[0], model.dim))
    states[:, 0, :] = x0
    for k in range(tg.shape[0] - 1):
        h = tg[k + 1] - tg[k]
        E = model.step_matrix(h)
        x = states[:, k, :]
        a_idx = _resolve_actions(alpha_policy(k, x), n_paths, len(model.action_set), "action")
        s_idx = _resolve_actions(theta_policy(k, x), n_paths, len(model.Sigma), "volatility")
        drift = np.empty_like(x)
        for i in np.unique(a_idx):
            sel = a_idx == i
            drift[sel] = model.b(x[sel], model.action_set[i])
        z = stream(seed, stream_id, k, TAG_GAUSS).standard_normal((n_paths, model.dim))
        dB = np.sqrt(h) * z @ model._qchol.T
        noise = np.empty_like(x)
        for i in np.unique(s_idx):
            sel = s_idx == i
            noise[sel] = dB[sel] @ model.Sigma[i].T
        states[:, k + 1, :] = (x + h * drift + noise) @ E.T
    return PathBatch(n_paths, tg, states, seed, stream_id)


def levy_terminal_draws(
    triplet: LevyTriplet, t: float, n_paths: int, seed: int, stream_id: int = 0
) -> np.ndarray:
    """Exact one-shot draws of L_t (no time-stepping error for compound-Poisson noise)."""
    if t < 0:
        raise ValueError("t must be nonnegative")
    if t == 0:
        return np.zeros((n_paths, triplet.dim))
    rng = stream(seed, stream_id, 0, TAG_GAUSS)
    return triplet.sample_increments(t, n_paths, rng)


def transition_expectation(
    u: LatticeFunction,
    triplet: LevyTriplet,
    t: float,
    n_paths: int,
    seed: int,
    stream_id: int = 0,
    chunk: int = 1 << 14,
) -> LatticeFunction:
    """x -> Monte Carlo average of u(x + L_t), sharing the same draws across
    every x (common random numbers), so pointwise order is preserved exactly."""
    if t < 0:
        raise ValueError("t must be nonnegative")
    if u.dim != triplet.dim:
        raise ValueError("dimension mismatch")
    if t == 0:
        return u
    draws = levy_terminal_draws(triplet, t, n_paths, seed, stream_id)

    def _eval(pts: np.ndarray) -> np.ndarray:
        out = np.empty(pts.shape[0])
        for i in range(pts.shape[0]):
            acc = 0.0
            for j in range(0, n_paths, chunk):
                acc += float(np.sum(u(pts[i] + draws[j : j + chunk])))
            out[i] = acc / n_paths
        return out

    return LatticeFunction(
        u.dim, _eval, bound=u.bound, lipschitz=u.lipschitz,
        name=f"E[{u.name}(x+L_{t:g})]",
    )
