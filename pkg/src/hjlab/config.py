"""Strict sectioned key-value configuration for problem instances and runs.

Unknown sections or keys are errors (strict mode). Matrices are written as
rows separated by ';' with whitespace- or comma-separated entries; lists of
matrices (the volatility family) separate matrices with '|'.
"""

from __future__ import annotations

import configparser
from typing import Callable, Dict, Optional

import numpy as np

from .campaign import CHECK_IDS, CampaignSpec
from .costs import RunningCost, custom_grid_cost, quadratic_cost, quartic_cost
from .dynamics import (
    LevyTriplet,
    OUModel,
    constant_jump,
    gaussian_jump_1d,
    uniform_ball_jump,
)
from .engine import LevyControlProblem, MCConfig, RobustOUProblem
from .errors import ConfigurationError
from .fields import clipped_abs_1d, clipped_neg_square_1d, random_smooth_function
from .lattice import SamplePlan, build_plan


def _parse_bool(s: str) -> bool:
    v = s.strip().lower()
    if v in ("true", "1", "yes", "on"):
        return True
    if v in ("false", "0", "no", "off"):
        return False
    raise ConfigurationError(f"expected a boolean, got {s!r}")


def _parse_vector(s: str) -> np.ndarray:
    entries = s.replace(",", " ").split()
    if not entries:
        raise ConfigurationError("empty vector")
    return np.array([float(e) for e in entries])


def _parse_matrix(s: str) -> np.ndarray:
    rows = [r for r in s.split(";") if r.strip()]
    return np.stack([_parse_vector(r) for r in rows])


def _parse_matrix_list(s: str):
    return [_parse_matrix(m) for m in s.split("|") if m.strip()]


def _parse_floats(s: str):
    return tuple(float(e) for e in s.replace(",", " ").split())


def _parse_names(s: str):
    return tuple(e.strip() for e in s.split(",") if e.strip())


_SCHEMA: Dict[str, Dict[str, Callable]] = {
    "plan": {
        "dim": int,
        "radius": float,
        "grid_points": int,
        "qmc_points": int,
        "qmc_seed": int,
    },
    "mc": {
        "n_paths": int,
        "seed": int,
        "crn": _parse_bool,
        "steps": int,
        "mesh_dx": float,
        "mesh_radius": float,
    },
    "cost": {
        "kind": str,  # quadratic | quartic | custom-grid
        "weight": float,
        "domain_radius": float,
    },
    "levy": {
        "gamma": _parse_vector,
        "cov": _parse_matrix,
        "jump_rate": float,
        "jump": str,  # none | constant:<vec> | uniform_ball:<r> | gaussian:<m>,<s>
        "lip_u": float,
        "actions_per_dim": int,
    },
    "ou": {
        "a_mat": _parse_matrix,
        "actions": _parse_matrix,  # one action vector per row
        "sigma": _parse_matrix_list,
        "q": _parse_matrix,
        "omega": float,
        "horizon": float,
        "lip_c": float,
    },
    "campaign": {
        "instance": str,
        "checks": _parse_names,
        "n_trials": int,
        "seed": int,
        "t_values": _parse_floats,
        "lambdas": _parse_floats,
        "h_values": _parse_floats,
        "tol_exact": float,
        "tol_semigroup": float,
        "tol_right_continuity": float,
        "tol_generator": float,
    },
    "viscosity": {
        "catalog": int,
        "tol": float,
        "horizon": float,
        "window": float,
        "margin_eps": float,
        "u0": str,  # neg_square | abs | bumps:<seed>[:<n>]
    },
    "oracle": {
        "kind": str,  # hopf_lax | hopf_cole | pde_levy | pde_ou
        "t": float,
        "u0": str,
        "dx": float,
        "n_paths": int,
    },
}


class Config:
    """Parsed, schema-validated configuration with a deterministic echo."""

    def __init__(self, values: Dict[str, Dict[str, object]]):
        self.values = values

    def section(self, name: str) -> Dict[str, object]:
        return self.values.get(name, {})

    def get(self, section: str, key: str, default=None):
        return self.values.get(section, {}).get(key, default)

    def require(self, section: str, key: str):
        if key not in self.values.get(section, {}):
            raise ConfigurationError(f"missing required key [{section}] {key}")
        return self.values[section][key]

    def echo(self) -> str:
        lines = []
        for sec in sorted(self.values):
            lines.append(f"[{sec}]")
            for key in sorted(self.values[sec]):
                val = self.values[sec][key]
                if isinstance(val, np.ndarray):
                    if val.ndim == 1:
                        txt = " ".join(f"{v:.12g}" for v in val)
                    else:
                        txt = "; ".join(" ".join(f"{v:.12g}" for v in row) for row in val)
                elif isinstance(val, list):
                    txt = " | ".join(
                        "; ".join(" ".join(f"{v:.12g}" for v in row) for row in m) for m in val
                    )
                elif isinstance(val, tuple):
                    txt = ", ".join(str(v) for v in val)
                elif isinstance(val, float):
                    txt = f"{val:.12g}"
                else:
                    txt = str(val)
                lines.append(f"{key} = {txt}")
        return "\n".join(lines)


def load_config(path: str) -> Config:
    parser = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
    read = parser.read(path)
    if not read:
        raise ConfigurationError(f"cannot read config file {path!r}")
    values: Dict[str, Dict[str, object]] = {}
    for sec in parser.sections():
        if sec not in _SCHEMA:
            raise ConfigurationError(f"unknown config section [{sec}]")
        values[sec] = {}
        for key, raw in parser.items(sec):
            if key not in _SCHEMA[sec]:
                raise ConfigurationError(f"unknown key {key!r} in section [{sec}]")
            if raw.strip() == "":
                continue
            try:
                values[sec][key] = _SCHEMA[sec][key](raw)
            except ConfigurationError:
                raise
            except Exception as exc:
                raise ConfigurationError(f"bad value for [{sec}] {key}: {raw!r}") from exc
    return Config(values)


def plan_from_config(cfg: Config) -> SamplePlan:
    sec = cfg.section("plan")
    return build_plan(
        dim=int(sec.get("dim", 1)),
        radius=sec.get("radius"),
        grid_per_axis=sec.get("grid_points"),
        qmc_points=sec.get("qmc_points"),
        seed=int(sec.get("qmc_seed", 0)),
    )


def mc_from_config(cfg: Config) -> MCConfig:
    sec = cfg.section("mc")
    return MCConfig(
        n_paths=int(sec.get("n_paths", 100_000)),
        seed=int(sec.get("seed", 0)),
        crn=bool(sec.get("crn", True)),
        steps=int(sec.get("steps", 64)),
        mesh_dx=sec.get("mesh_dx"),
        mesh_radius=sec.get("mesh_radius"),
    )


def cost_from_config(cfg: Config, dim: int) -> RunningCost:
    sec = cfg.section("cost")
    kind = str(sec.get("kind", "quadratic"))
    radius = float(sec.get("domain_radius", 8.0))
    weight = float(sec.get("weight", 0.5 if kind == "quadratic" else 1.0))
    if kind == "quadratic":
        return quadratic_cost(dim, weight=weight, domain_radius=radius)
    if kind == "quartic":
        return quartic_cost(dim, weight=weight, domain_radius=radius)
    if kind == "custom-grid":
        # even-powered radial cost family sharpened by the weight exponent
        p = max(weight, 1.5)
        return custom_grid_cost(
            dim,
            lambda pts: np.sum(pts * pts, axis=1) ** (p / 2.0),
            domain_radius=radius,
            radial=True,
            name=f"power({p:g})",
        )
    raise ConfigurationError(f"unknown cost kind {kind!r}")


def _jump_from_config(dim: int, spec: str):
    s = spec.strip()
    if s == "none":
        return None
    if ":" not in s:
        raise ConfigurationError(f"bad jump spec {spec!r}")
    kind, args = s.split(":", 1)
    if kind == "constant":
        return constant_jump(dim, _parse_vector(args))
    if kind == "uniform_ball":
        return uniform_ball_jump(dim, float(args))
    if kind == "gaussian":
        if dim != 1:
            raise ConfigurationError("gaussian jumps are 1-d only")
        m, sd = _parse_floats(args)
        return gaussian_jump_1d(m, sd)
    raise ConfigurationError(f"unknown jump kind {kind!r}")


def levy_problem_from_config(cfg: Config, dim: int) -> LevyControlProblem:
    sec = cfg.section("levy")
    gamma = np.asarray(sec.get("gamma", np.zeros(dim)), dtype=float).reshape(-1)
    cov = np.asarray(sec.get("cov", np.eye(dim)), dtype=float)
    if cov.size == 1:
        cov = float(cov.reshape(-1)[0]) * np.eye(dim)
    rate = float(sec.get("jump_rate", 0.0))
    sampler = _jump_from_config(dim, str(sec.get("jump", "none")))
    triplet = LevyTriplet(dim, gamma, cov, jump_rate=rate, jump_sampler=sampler)
    cost = cost_from_config(cfg, dim)
    return LevyControlProblem.build(
        triplet,
        cost,
        lip_u=float(sec.get("lip_u", 1.0)),
        points_per_dim=int(sec.get("actions_per_dim", 33)),
    )


def ou_problem_from_config(cfg: Config, dim: int) -> RobustOUProblem:
    sec = cfg.section("ou")
    a_mat = np.asarray(cfg.require("ou", "a_mat"), dtype=float)
    if a_mat.size == 1:
        a_mat = float(a_mat.reshape(-1)[0]) * np.eye(dim)
    actions_rows = np.asarray(cfg.require("ou", "actions"), dtype=float)
    actions = tuple(np.asarray(row, dtype=float).reshape(dim) for row in actions_rows)
    sigma_raw = cfg.require("ou", "sigma")
    sigma = []
    for s in sigma_raw:
        s = np.asarray(s, dtype=float)
        sigma.append(float(s.reshape(-1)[0]) * np.eye(dim) if s.size == 1 else s)
    q = np.asarray(sec.get("q", np.eye(dim)), dtype=float)
    if q.size == 1:
        q = float(q.reshape(-1)[0]) * np.eye(dim)
    lip_c = float(sec.get("lip_c", max(np.linalg.norm(np.asarray(a)) for a in actions)))

    def b(pts: np.ndarray, a) -> np.ndarray:
        return np.tile(np.asarray(a, dtype=float).reshape(1, dim), (pts.shape[0], 1))

    model = OUModel(
        dim=dim,
        A_mat=a_mat,
        b=b,
        action_set=actions,
        lip_C=lip_c,
        Sigma=tuple(sigma),
        Q=q,
        omega=sec.get("omega"),
        horizon=float(sec.get("horizon", 2.0)),
    )
    return RobustOUProblem(model)


def u0_from_config(spec: str, dim: int):
    s = spec.strip()
    if s == "neg_square":
        if dim != 1:
            raise ConfigurationError("neg_square initial condition is 1-d")
        return clipped_neg_square_1d()
    if s == "abs":
        if dim != 1:
            raise ConfigurationError("abs initial condition is 1-d")
        return clipped_abs_1d()
    if s.startswith("bumps:"):
        parts = s.split(":")
        seed = int(parts[1])
        n = int(parts[2]) if len(parts) > 2 else 3
        return random_smooth_function(seed, dim, n_bumps=n).as_lattice()
    raise ConfigurationError(f"unknown initial condition {spec!r}")


def campaign_from_config(cfg: Config) -> CampaignSpec:
    sec = cfg.section("campaign")
    instance = str(cfg.require("campaign", "instance"))
    plan = plan_from_config(cfg)
    mc = mc_from_config(cfg)
    if instance == "levy":
        problem = levy_problem_from_config(cfg, plan.dim)
    elif instance == "ou":
        problem = ou_problem_from_config(cfg, plan.dim)
    else:
        raise ConfigurationError(f"unknown instance {instance!r}")
    kwargs = {}
    if "checks" in sec:
        kwargs["checks"] = tuple(sec["checks"])
    for key in (
        "n_trials", "seed", "t_values", "lambdas", "h_values",
        "tol_exact", "tol_semigroup", "tol_right_continuity", "tol_generator",
    ):
        if key in sec:
            kwargs[key] = sec[key]
    return CampaignSpec(instance=instance, problem=problem, plan=plan, mc=mc, **kwargs)
