"""Viscosity-solution checks against Dirac evaluations.

The solution path t -> S(t)u0 is tested at seeded space-time points with
differentiable test functions that touch it from above or below on a finite
space-time cloud. At every certified touching point the time derivative of
the test function is compared with the analytic generator applied to it:

    touching from above:  phi'(t, x) <= (L phi(t))(x) + tol
    touching from below:  phi'(t, x) >= (L phi(t))(x) - tol

Test functions are quadratic space-time envelopes around a local expansion
of the numerical solution, with curvature margins escalated until the
domination certificate holds; this is the standard construction, realised
at desk scale with every margin recorded.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, List, Optional, Sequence

import numpy as np

from .engine import (
    LevyControlProblem,
    MCConfig,
    RobustOUProblem,
    _levy_tables,
    _ou_tables,
    _table_function,
)
from .errors import CertificationError, HJLabError
from .fields import SmoothTestField
from .generator import hjb_generator_levy, isaacs_generator_ou
from .lattice import LatticeFunction, SamplePlan
from .rng import TAG_CLOUD, stream


@dataclass(frozen=True)
class DiracFunctional:
    """Evaluation at a point: the positive functionals used for touching."""

    x: np.ndarray

    def __post_init__(self):
        x = np.asarray(self.x, dtype=float).reshape(-1)
        if not np.all(np.isfinite(x)):
            raise ValueError("barycenter must be finite")
        object.__setattr__(self, "x", x)

    def apply(self, u: LatticeFunction) -> float:
        return float(u(self.x))


@dataclass
class SemigroupPath:
    """S(t)u0 cached on a time grid (one Bellman chain, shared noise)."""

    times: np.ndarray
    funcs: List[LatticeFunction]
    horizon: float

    def index_of(self, t: float) -> int:
        return int(np.argmin(np.abs(self.times - t)))

    def at(self, t: float) -> LatticeFunction:
        return self.funcs[self.index_of(t)]


def levy_semigroup_path(
    u0: LatticeFunction,
    horizon: float,
    prob: LevyControlProblem,
    mc: MCConfig,
    stream_id: int = 0,
    n_stored: int = 33,
) -> SemigroupPath:
    keep = max(1, mc.steps // max(1, n_stored - 1))
    mesh, _, kept = _levy_tables(u0, horizon, prob, mc, stream_id, keep_every=keep)
    funcs = [_table_function(mesh, tbl, u0.bound, f"S({t:g})u0") for t, tbl in kept]
    return SemigroupPath(np.array([t for t, _ in kept]), funcs, horizon)


def ou_semigroup_path(
    u0: LatticeFunction,
    horizon: float,
    prob: RobustOUProblem,
    mc: MCConfig,
    stream_id: int = 0,
    n_stored: int = 33,
) -> SemigroupPath:
    keep = max(1, mc.steps // max(1, n_stored - 1))
    mesh, _, kept = _ou_tables(u0, horizon, prob, mc, stream_id, "value", keep_every=keep)
    funcs = [_table_function(mesh, tbl, u0.bound, f"S({t:g})u0") for t, tbl in kept]
    return SemigroupPath(np.array([t for t, _ in kept]), funcs, horizon)


@dataclass(frozen=True)
class SpaceTimeCloud:
    """Finite space-time sample set on which domination is certified."""

    times: np.ndarray
    points: np.ndarray
    radius: float

    @classmethod
    def around(cls, path: SemigroupPath, t: float, plan: SamplePlan, window: float = 0.5):
        mask = (path.times > 0) & (np.abs(path.times - t) <= window)
        if not np.any(mask):
            raise ValueError("no path times inside the window")
        return cls(times=path.times[mask], points=plan.points, radius=plan.radius)


class TestFunctionPath:
    """Differentiable path of smooth space fields used as a test function.

    ``phi(s, pts)`` and ``dphi_dt(s, pts)`` are vectorised over points;
    ``space_field(s)`` returns the smooth field phi(s) with its analytic
    derivatives.
    """

    __test__ = False  # domain type, not a pytest case

    def __init__(
        self,
        dim: int,
        phi: Callable[[float, np.ndarray], np.ndarray],
        dphi_dt: Callable[[float, np.ndarray], np.ndarray],
        space_field: Callable[[float], SmoothTestField],
    ):
        self.dim = dim
        self.phi = phi
        self.dphi_dt = dphi_dt
        self.space_field = space_field

    def validate(self, t: float, points: np.ndarray, rtol: float = 1e-4) -> "TestFunctionPath":
        """Check the supplied time derivative against central differences."""
        pts = np.atleast_2d(points)
        dt = 1e-4 * max(t, 1.0)
        fd = (self.phi(t + dt, pts) - self.phi(t - dt, pts)) / (2 * dt)
        an = self.dphi_dt(t, pts)
        scale = max(float(np.max(np.abs(an))), 1e-6)
        if np.max(np.abs(fd - an)) > rtol * scale:
            raise ValueError("dphi_dt does not match central time differences")
        self.space_field(t).validate(pts[: min(8, pts.shape[0])])
        return self


def quadratic_test_path(
    t0: float,
    x0: np.ndarray,
    value: float,
    time_slope: float,
    time_curv: float,
    grad: np.ndarray,
    hess: np.ndarray,
    region_radius: float,
    horizon: float,
) -> TestFunctionPath:
    """Second-order space-time expansion around (t0, x0):

        phi(s, y) = value + time_slope (s-t0) + time_curv (s-t0)^2
                    + <grad, y-x0> + 1/2 (y-x0)^T hess (y-x0)
    """
    x0 = np.asarray(x0, dtype=float).reshape(-1)
    grad = np.asarray(grad, dtype=float).reshape(-1)
    hess = np.asarray(hess, dtype=float).reshape(len(x0), len(x0))
    hess = 0.5 * (hess + hess.T)
    dim = x0.shape[0]
    r = region_radius + float(np.linalg.norm(x0))
    t_span = max(horizon - t0, t0)
    vb = (
        abs(value)
        + abs(time_slope) * t_span
        + abs(time_curv) * t_span**2
        + np.linalg.norm(grad) * r
        + 0.5 * np.linalg.norm(hess, 2) * r**2
    )
    gb = float(np.linalg.norm(grad) + np.linalg.norm(hess, 2) * r)
    hb = float(np.linalg.norm(hess, 2))

    def _space(pts: np.ndarray) -> np.ndarray:
        d = np.atleast_2d(pts) - x0[None, :]
        return d @ grad + 0.5 * np.einsum("nd,de,ne->n", d, hess, d)

    def phi(s: float, pts: np.ndarray) -> np.ndarray:
        return value + time_slope * (s - t0) + time_curv * (s - t0) ** 2 + _space(pts)

    def dphi_dt(s: float, pts: np.ndarray) -> np.ndarray:
        return np.full(np.atleast_2d(pts).shape[0], time_slope + 2 * time_curv * (s - t0))

    def space_field(s: float) -> SmoothTestField:
        off = value + time_slope * (s - t0) + time_curv * (s - t0) ** 2

        def val(pts):
            return off + _space(pts)

        def grd(pts):
            return (np.atleast_2d(pts) - x0[None, :]) @ hess + grad[None, :]

        def hes(pts):
            n = np.atleast_2d(pts).shape[0]
            return np.broadcast_to(hess, (n, dim, dim)).copy()

        return SmoothTestField(
            dim, val, grd, hes,
            value_bound=vb, grad_bound=gb, hess_bound=hb,
            name=f"envelope@t={t0:g}",
        )

    return TestFunctionPath(dim, phi, dphi_dt, space_field)


@dataclass
class TouchingCertificate:
    """Record that a test function touches the path at (t, x) and dominates
    (or is dominated) on the whole cloud, with the worst margins."""

    t: float
    mu: DiracFunctional
    direction: str  # "above" | "below"
    touch_gap: float
    domination_margin: float
    worst_point: tuple


def certify_touching(
    u_path: SemigroupPath,
    phi: TestFunctionPath,
    t: float,
    mu: DiracFunctional,
    direction: str,
    cloud: SpaceTimeCloud,
    touch_tolerance: float = 1e-7,
) -> TouchingCertificate:
    """Certify mu phi(t) = mu u(t) and phi >= u (direction 'above') or
    phi <= u ('below') on every cloud point; raise otherwise."""
    if direction not in ("above", "below"):
        raise ValueError("direction must be 'above' or 'below'")
    if t <= 0:
        raise ValueError("touching time must be positive")
    if np.linalg.norm(mu.x) > cloud.radius + 1e-12:
        raise ValueError("barycenter lies outside the cloud's spatial ball")
    u_t = u_path.at(t)
    gap = abs(float(phi.phi(t, mu.x.reshape(1, -1))[0]) - mu.apply(u_t))
    worst = np.inf
    worst_pt = (t, mu.x)
    for s in cloud.times:
        u_vals = u_path.at(float(s))(cloud.points)
        p_vals = phi.phi(float(s), cloud.points)
        diff = p_vals - u_vals if direction == "above" else u_vals - p_vals
        k = int(np.argmin(diff))
        if diff[k] < worst:
            worst = float(diff[k])
            worst_pt = (float(s), cloud.points[k])
    if gap > touch_tolerance:
        raise CertificationError(f"touch gap {gap:.3g} exceeds tolerance at t={t:g}")
    if worst < -touch_tolerance:
        raise CertificationError(
            f"domination violated by {-worst:.3g} at (s={worst_pt[0]:g}, y={worst_pt[1]})"
        )
    return TouchingCertificate(
        t=t, mu=mu, direction=direction, touch_gap=gap,
        domination_margin=worst, worst_point=worst_pt,
    )


@dataclass
class CheckRecord:
    """One viscosity inequality evaluation: lhs = mu phi'(t), rhs = mu L phi(t)."""

    t: float
    x: np.ndarray
    direction: str
    kind: str  # "subsolution" | "supersolution"
    lhs: float
    rhs: float
    tol: float

    @property
    def margin(self) -> float:
        return self.rhs + self.tol - self.lhs if self.kind == "subsolution" else self.lhs - self.rhs + self.tol

    @property
    def ok(self) -> bool:
        return self.margin >= 0.0

    def row(self) -> str:
        xs = ",".join(f"{v:.6g}" for v in np.atleast_1d(self.x))
        return (
            f"t={self.t:.6g} x=({xs}) {self.kind}/{self.direction} "
            f"lhs={self.lhs:.6g} rhs={self.rhs:.6g} margin={self.margin:.6g} "
            f"verdict={'pass' if self.ok else 'VIOLATION'}"
        )


def check_subsolution(
    u_path: SemigroupPath,
    phi: TestFunctionPath,
    cert: TouchingCertificate,
    generator_fn: Callable[[SmoothTestField, np.ndarray], float],
    tol: float = 1e-2,
) -> CheckRecord:
    """mu phi'(t) <= mu L phi(t) + tol for a certificate from above."""
    if cert.direction != "above":
        raise ValueError("subsolution check needs a touching-from-above certificate")
    x = cert.mu.x
    lhs = float(phi.dphi_dt(cert.t, x.reshape(1, -1))[0])
    rhs = float(generator_fn(phi.space_field(cert.t), x))
    return CheckRecord(cert.t, x, "above", "subsolution", lhs, rhs, tol)


def check_supersolution(
    u_path: SemigroupPath,
    phi: TestFunctionPath,
    cert: TouchingCertificate,
    generator_fn: Callable[[SmoothTestField, np.ndarray], float],
    tol: float = 1e-2,
) -> CheckRecord:
    """mu phi'(t) >= mu L phi(t) - tol for a certificate from below."""
    if cert.direction != "below":
        raise ValueError("supersolution check needs a touching-from-below certificate")
    x = cert.mu.x
    lhs = float(phi.dphi_dt(cert.t, x.reshape(1, -1))[0])
    rhs = float(generator_fn(phi.space_field(cert.t), x))
    return CheckRecord(cert.t, x, "below", "supersolution", lhs, rhs, tol)


def _local_expansion(path: SemigroupPath, t_idx: int, x: np.ndarray, fd_dx: float):
    """FD estimate of (value, u_t, grad, hess, u_tt) of the numerical path."""
    dim = x.shape[0]
    u_k = path.funcs[t_idx]
    value = float(u_k(x))
    tl, tr = max(t_idx - 1, 0), min(t_idx + 1, len(path.funcs) - 1)
    dt = path.times[tr] - path.times[tl]
    u_left, u_right = float(path.funcs[tl](x)), float(path.funcs[tr](x))
    time_slope = (u_right - u_left) / dt
    time_curv = (u_right - 2 * value + u_left) / max((dt / 2) ** 2, 1e-12) / 2 if tr - tl == 2 else 0.0
    grad = np.zeros(dim)
    hess = np.zeros((dim, dim))
    for i in range(dim):
        e = np.zeros(dim)
        e[i] = fd_dx
        up, dn = float(u_k(x + e)), float(u_k(x - e))
        grad[i] = (up - dn) / (2 * fd_dx)
        hess[i, i] = (up - 2 * value + dn) / fd_dx**2
    for i in range(dim):
        for j in range(i + 1, dim):
            ei, ej = np.zeros(dim), np.zeros(dim)
            ei[i] = fd_dx
            ej[j] = fd_dx
            hess[i, j] = hess[j, i] = (
                float(u_k(x + ei + ej))
                - float(u_k(x + ei - ej))
                - float(u_k(x - ei + ej))
                + float(u_k(x - ei - ej))
            ) / (4 * fd_dx**2)
    return value, time_slope, time_curv, grad, hess


@dataclass
class ViscosityReport:
    """Aggregate of all viscosity checks on one instance, fully reproducible."""

    instance: str
    test_family: str
    tol: float
    records: List[CheckRecord]
    fault_records: List[CheckRecord]
    flip_records: List[CheckRecord]
    seed: int

    @property
    def n_violations(self) -> int:
        return sum(0 if r.ok else 1 for r in self.records)

    @property
    def fault_detection_rate(self) -> float:
        if not self.fault_records:
            return 1.0
        return sum(0 if r.ok else 1 for r in self.fault_records) / len(self.fault_records)

    @property
    def flip_violations(self) -> int:
        return sum(0 if r.ok else 1 for r in self.flip_records)

    def worst_margin(self) -> float:
        return min((r.margin for r in self.records), default=np.inf)

    def to_text(self) -> str:
        lines = [
            f"instance: {self.instance}",
            f"test-function family: {self.test_family}",
            f"tolerance: {self.tol:g}",
            f"seed: {self.seed}",
            f"checks: {len(self.records)} violations: {self.n_violations}",
            f"injected-fault detection: {self.fault_detection_rate:.3f}",
            f"flipped-role violations: {self.flip_violations}/{len(self.flip_records)}",
        ]
        lines += [r.row() for r in self.records]
        return "\n".join(lines) + "\n"


_TEST_FAMILY = (
    "quadratic space-time envelopes around Gaussian-bump-smoothed local "
    "expansions of the numerical path (curvature margins recorded)"
)


def verify_theorem(
    problem,
    u0: LatticeFunction,
    catalog_size: int,
    seed: int,
    tol: float,
    mc: MCConfig,
    plan: SamplePlan,
    horizon: float = 1.0,
    window: float = 0.5,
    margin_eps: float = 2e-2,
    run_faults: bool = True,
) -> ViscosityReport:
    """Check that t -> S(t)u0 is a viscosity solution at seeded touch points.

    Builds the semigroup path, generates ``catalog_size`` touching test
    functions per direction (escalating curvature margins, resampling on
    certificate failure up to 10x oversampling), runs both inequality
    checks, and optionally re-runs them with injected faults (corrupted
    time derivative / corrupted generator) as harness sanity controls.
    """
    if isinstance(problem, LevyControlProblem):
        path = levy_semigroup_path(u0, horizon, problem, mc)
        gen_fn = lambda f, x: hjb_generator_levy(problem, f, x)
        instance = "levy"
    elif isinstance(problem, RobustOUProblem):
        path = ou_semigroup_path(u0, horizon, problem, mc)
        gen_fn = lambda f, x: isaacs_generator_ou(problem, f, x)
        instance = "ou"
    else:
        raise HJLabError("problem must be a Levy control or robust OU instance")

    rng = stream(seed, TAG_CLOUD)
    usable = np.nonzero((path.times > window / 2) & (path.times < horizon - 1e-12))[0]
    if usable.size == 0:
        raise HJLabError("path too short for the touching window")

    records: List[CheckRecord] = []
    fault_records: List[CheckRecord] = []
    flip_records: List[CheckRecord] = []
    made, attempts = 0, 0
    max_attempts = 10 * catalog_size
    dim = u0.dim
    while made < catalog_size and attempts < max_attempts:
        attempts += 1
        t_idx = int(rng.choice(usable))
        t = float(path.times[t_idx])
        x = rng.uniform(-0.7 * plan.radius, 0.7 * plan.radius, size=dim)
        if np.linalg.norm(x) > plan.radius:
            continue
        cloud = SpaceTimeCloud.around(path, t, plan, window)
        try:
            expansion = _local_expansion(path, t_idx, x, fd_dx=0.1)
        except Exception:
            continue
        value, slope, curv, grad, hess = expansion
        entry = []
        for direction in ("above", "below"):
            sign = 1.0 if direction == "above" else -1.0
            eps = margin_eps
            kappa = abs(curv) + margin_eps
            cert = phi = None
            while eps <= 64 * margin_eps:
                phi = quadratic_test_path(
                    t, x, value, slope, sign * kappa, grad,
                    hess + sign * eps * np.eye(dim),
                    region_radius=plan.radius, horizon=horizon,
                )
                try:
                    cert = certify_touching(
                        path, phi, t, DiracFunctional(x), direction, cloud,
                        touch_tolerance=1e-7,
                    )
                    break
                except CertificationError:
                    eps *= 2.0
                    kappa *= 2.0
            if cert is None:
                break
            entry.append((direction, phi, cert))
        if len(entry) != 2:
            continue
        made += 1
        for direction, phi, cert in entry:
            if direction == "above":
                rec = check_subsolution(path, phi, cert, gen_fn, tol)
                records.append(rec)
                flip_records.append(CheckRecord(rec.t, rec.x, "above", "supersolution", rec.lhs, rec.rhs, tol))
                if run_faults:
                    fault_records.append(
                        CheckRecord(rec.t, rec.x, "above", "subsolution", rec.lhs + 10.0, rec.rhs, tol)
                    )
            else:
                rec = check_supersolution(path, phi, cert, gen_fn, tol)
                records.append(rec)
                flip_records.append(CheckRecord(rec.t, rec.x, "below", "subsolution", rec.lhs, rec.rhs, tol))
                if run_faults:
                    fault_records.append(
                        CheckRecord(rec.t, rec.x, "below", "supersolution", rec.lhs, rec.rhs + 10.0, tol)
                    )
    if made < catalog_size:
        raise HJLabError(
            f"catalog generation failed: {made}/{catalog_size} after {attempts} attempts"
        )
    return ViscosityReport(
        instance=instance, test_family=_TEST_FAMILY, tol=tol,
        records=records, fault_records=fault_records, flip_records=flip_records,
        seed=seed,
    )
