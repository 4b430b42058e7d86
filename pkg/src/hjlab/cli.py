"""Command-line entry points: verify / generator / viscosity / oracle.

All subcommands read a strict sectioned config file, write deterministic
reports into the output directory, and exit 0 only if every verdict passes.
"""

from __future__ import annotations

import argparse
import os
import sys
from dataclasses import replace

import numpy as np

from .campaign import run_campaign
from .config import (
    Config,
    campaign_from_config,
    levy_problem_from_config,
    load_config,
    mc_from_config,
    ou_problem_from_config,
    plan_from_config,
    u0_from_config,
)
from .engine import (
    MCConfig,
    S_levy,
    S_ou,
    hopf_cole_values,
    hopf_lax_oracle,
)
from .errors import HJLabError
from .fields import random_smooth_function
from .generator import (
    estimate_generator,
    hjb_generator_levy,
    isaacs_generator_ou,
    rel_sup_error,
)
from .pde import GridSolverSpec, solve_hjb_levy_1d, solve_isaacs_ou_1d
from .viscosity import verify_theorem


def _write(out_dir: str, name: str, body: str) -> str:
    os.makedirs(out_dir, exist_ok=True)
    path = os.path.join(out_dir, name)
    with open(path, "w") as fh:
        fh.write(body)
    return path


def _cmd_verify(cfg: Config, args) -> int:
    spec = campaign_from_config(cfg)
    if args.seed is not None:
        spec = replace(spec, seed=args.seed)
    report = run_campaign(spec, config_echo=cfg.echo())
    ext = {"text": "txt", "json": "json", "csv": "csv"}[args.format]
    path = _write(args.out, f"campaign_{spec.instance}.{ext}", report.render(args.format))
    sys.stdout.write(report.to_text())
    sys.stdout.write(f"report written to {path}\n")
    return 0 if report.all_passed else 1


def _cmd_generator(cfg: Config, args) -> int:
    plan = plan_from_config(cfg)
    mc = replace(mc_from_config(cfg), steps=1)
    instance = str(cfg.get("campaign", "instance", "levy"))
    seed = args.seed if args.seed is not None else int(cfg.get("campaign", "seed", 42))
    fld = random_smooth_function(seed, plan.dim, n_bumps=3)
    h_seq = (0.2, 0.1, 0.05, 0.025)
    if instance == "levy":
        prob = levy_problem_from_config(cfg, plan.dim)
        s_op = lambda h, w: S_levy(h, w, prob, mc, stream_id=5)
        ana_fn = lambda x: hjb_generator_levy(prob, fld, x)
    elif instance == "ou":
        prob = ou_problem_from_config(cfg, plan.dim)
        s_op = lambda h, w: S_ou(h, w, prob, mc, stream_id=5)
        ana_fn = lambda x: isaacs_generator_ou(prob, fld, x)
    else:
        raise HJLabError(f"unknown instance {instance!r}")
    est = estimate_generator(s_op, fld, h_seq, plan, mc)
    ana = np.array([ana_fn(x) for x in plan.points])
    scale = max(float(np.max(np.abs(ana))), 1e-12)
    rows = [",".join(["x%d" % (k + 1) for k in range(plan.dim)] + ["numeric", "analytic", "rel_error"])]
    for i, x in enumerate(plan.points):
        rows.append(
            ",".join(f"{v:.12g}" for v in x)
            + f",{est.extrapolated[i]:.12g},{ana[i]:.12g},{abs(est.extrapolated[i] - ana[i]) / scale:.12g}"
        )
    path = _write(args.out, f"generator_{instance}.csv", "\n".join(rows) + "\n")
    rel = rel_sup_error(est.extrapolated, ana)
    tol = float(cfg.get("campaign", "tol_generator", 0.05))
    sys.stdout.write(f"generator comparison written to {path}\n")
    sys.stdout.write(f"relative sup error: {rel:.6g} (tolerance {tol:g})\n")
    return 0 if rel <= tol else 1


def _cmd_viscosity(cfg: Config, args) -> int:
    plan = plan_from_config(cfg)
    mc = mc_from_config(cfg)
    sec = cfg.section("viscosity")
    instance = str(cfg.get("campaign", "instance", "levy"))
    u0 = u0_from_config(str(sec.get("u0", "bumps:1")), plan.dim)
    if instance == "levy":
        prob = levy_problem_from_config(cfg, plan.dim)
    else:
        prob = ou_problem_from_config(cfg, plan.dim)
    seed = args.seed if args.seed is not None else int(cfg.get("campaign", "seed", 42))
    report = verify_theorem(
        prob,
        u0,
        catalog_size=int(sec.get("catalog", 20)),
        seed=seed,
        tol=float(sec.get("tol", 1e-2)),
        mc=mc,
        plan=plan,
        horizon=float(sec.get("horizon", 1.0)),
        window=float(sec.get("window", 0.5)),
        margin_eps=float(sec.get("margin_eps", 2e-2)),
    )
    path = _write(args.out, f"viscosity_{instance}.txt", report.to_text())
    sys.stdout.write(report.to_text())
    sys.stdout.write(f"report written to {path}\n")
    ok = report.n_violations == 0 and report.fault_detection_rate == 1.0
    return 0 if ok else 1


def _cmd_oracle(cfg: Config, args) -> int:
    plan = plan_from_config(cfg)
    sec = cfg.section("oracle")
    kind = str(cfg.require("oracle", "kind"))
    t = float(sec.get("t", 0.25))
    u0 = u0_from_config(str(sec.get("u0", "neg_square")), plan.dim)
    xs = np.sort(plan.points[:, 0]) if plan.dim == 1 else None
    if kind == "hopf_lax":
        from .config import cost_from_config

        cost = cost_from_config(cfg, plan.dim)
        vals = [hopf_lax_oracle(u0, cost, t, x) for x in plan.points]
        rows = ["x,value"] + [
            f"{plan.points[i, 0]:.12g},{vals[i]:.12g}" for i in range(plan.n_points)
        ]
    elif kind == "hopf_cole":
        vals = hopf_cole_values(
            u0, t, plan.points, n_paths=int(sec.get("n_paths", 200_000))
        )
        rows = ["x,value"] + [
            f"{plan.points[i, 0]:.12g},{vals[i]:.12g}" for i in range(plan.n_points)
        ]
    elif kind in ("pde_levy", "pde_ou"):
        if plan.dim != 1:
            raise HJLabError("PDE oracles are 1-d only")
        spec = GridSolverSpec.for_plan(plan, dx=float(sec.get("dx", 0.01)))
        grid = spec.grid()
        if kind == "pde_levy":
            prob = levy_problem_from_config(cfg, 1)
            sol = solve_hjb_levy_1d(
                u0(grid.reshape(-1, 1)), prob.cost, prob.triplet, spec, t,
                lip_u0=u0.lipschitz if u0.lipschitz is not None else 4.0,
            )
        else:
            prob = ou_problem_from_config(cfg, 1)
            sol = solve_isaacs_ou_1d(u0(grid.reshape(-1, 1)), prob.model, spec, t)
        rows = ["x,value"] + [
            f"{sol.xs[j]:.12g},{sol.final()[j]:.12g}" for j in range(sol.xs.shape[0])
        ]
    else:
        raise HJLabError(f"unknown oracle kind {kind!r}")
    path = _write(args.out, f"oracle_{kind}.csv", "\n".join(rows) + "\n")
    sys.stdout.write(f"oracle values written to {path}\n")
    return 0


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="hjlab",
        description="Verification campaigns for Monte Carlo value-function semigroups",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name, help_text in (
        ("verify", "run a verification campaign from a config file"),
        ("generator", "emit a generator comparison table"),
        ("viscosity", "run the viscosity-solution verification"),
        ("oracle", "evaluate a standalone oracle"),
    ):
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--config", required=True, help="path to the config file")
        p.add_argument("--seed", type=int, default=None, help="override the campaign seed")
        p.add_argument("--out", default=".", help="output directory")
        p.add_argument(
            "--format", choices=("json", "csv", "text"), default="text",
            help="report format for verify",
        )
    args = parser.parse_args(argv)
    cfg = load_config(args.config)
    try:
        if args.command == "verify":
            return _cmd_verify(cfg, args)
        if args.command == "generator":
            return _cmd_generator(cfg, args)
        if args.command == "viscosity":
            return _cmd_viscosity(cfg, args)
        return _cmd_oracle(cfg, args)
    except HJLabError as exc:
        sys.stderr.write(f"error: {exc}\n")
        return 2


if __name__ == "__main__":
    sys.exit(main())
