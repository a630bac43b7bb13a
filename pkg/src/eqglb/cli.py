"""Command-line frontend: validate / synth / solve / compare.

Exit codes: 0 success, 1 I/O error, 2 validation error, 3 infeasible
scenario, 4 solver non-convergence.  Flag values override the optional
``--config`` JSON file, which overrides built-in defaults; the effective
configuration is echoed into every output bundle.  All outputs are
deterministic given identical inputs, independent of ``--threads``
(evaluation uses ordered reductions).
"""

from __future__ import annotations

import argparse
import json
import os
import sys

import numpy as np

from . import experiment, scenario_io
from .domain import validate_scenario
from .experiment import PRESET_NAMES
from .projection import InfeasibleTimestepError
from .solver import SolverOptions, solve_offline

EXIT_OK = 0
EXIT_IO = 1
EXIT_VALIDATION = 2
EXIT_INFEASIBLE = 3
EXIT_NO_CONVERGENCE = 4

OUTPUT_SCHEMA_VERSION = 1

DEFAULTS = {
    "preset": ["SE-GLB"],
    "q": experiment.DEFAULT_Q,
    "mu_c": experiment.DEFAULT_MU_C,
    "mu_w": experiment.DEFAULT_MU_W,
    "social_weight": experiment.DEFAULT_SOCIAL_WEIGHT,
    "max_iters": 5000,
    "tol": 1e-8,
    "seed": 0,
    "threads": 1,
}


def _build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="eqglb", description="Equitable geographical load balancing")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, scenario=True, out=True):
        if scenario:
            sp.add_argument("--scenario", required=True, help="scenario bundle directory")
        if out:
            sp.add_argument("--out", required=True, help="output directory")
        sp.add_argument("--config", help="JSON file with flag defaults")
        sp.add_argument("--q", type=float, default=None)
        sp.add_argument("--mu-c", dest="mu_c", type=float, default=None)
        sp.add_argument("--mu-w", dest="mu_w", type=float, default=None)
        sp.add_argument("--social-weight", dest="social_weight", type=float, default=None)
        sp.add_argument("--max-iters", dest="max_iters", type=int, default=None)
        sp.add_argument("--tol", type=float, default=None)
        sp.add_argument("--seed", type=int, default=None)
        sp.add_argument("--threads", type=int, default=None)

    sp = sub.add_parser("validate", help="check a scenario bundle")
    sp.add_argument("--scenario", required=True)

    sp = sub.add_parser("synth", help="generate a synthetic scenario bundle")
    sp.add_argument("--out", required=True)
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--n-dcs", type=int, default=10)
    sp.add_argument("--n-regions", type=int, default=10)
    sp.add_argument("--n-models", type=int, default=3)
    sp.add_argument("--horizon", type=int, default=432)
    sp.add_argument("--heterogeneity", type=float, default=1.0)
    sp.add_argument("--demand-scale", type=float, default=1.0)

    sp = sub.add_parser("solve", help="solve one objective configuration")
    common(sp)
    sp.add_argument("--preset", action="append", default=None,
                    help=f"one of {PRESET_NAMES} (single use for solve)")

    sp = sub.add_parser("compare", help="run presets and emit the comparison report")
    common(sp)
    sp.add_argument("--preset", action="append", default=None,
                    help="repeatable; defaults to all four presets")
    return p


def _effective(args) -> dict:
    """Merge defaults <- config file <- explicit flags."""
    eff = dict(DEFAULTS)
    cfg_path = getattr(args, "config", None)
    if cfg_path:
        with open(cfg_path) as f:
            file_cfg = json.load(f)
        for k, v in file_cfg.items():
            if k in eff:
                eff[k] = v
    for k in eff:
        v = getattr(args, k, None)
        if v is not None:
            eff[k] = v
    return eff


def _solver_options(eff) -> SolverOptions:
    return SolverOptions(max_iters=int(eff["max_iters"]), tol_rel_obj=float(eff["tol"]))


def _write_manifest(out_dir, files, eff):
    manifest = {
        "schema_version": OUTPUT_SCHEMA_VERSION,
        "effective_config": {k: eff[k] for k in sorted(eff)},
        "files": sorted(os.path.basename(f) for f in files),
    }
    path = os.path.join(out_dir, "manifest.json")
    with open(path, "w") as f:
        json.dump(manifest, f, indent=2, sort_keys=True)
        f.write("\n")


def _load(path):
    if not os.path.exists(path):
        print(f"error: scenario path does not exist: {path}", file=sys.stderr)
        raise SystemExit(EXIT_IO)
    return scenario_io.load_scenario(path)


def cmd_validate(args) -> int:
    if not os.path.exists(args.scenario):
        print(f"error: scenario path does not exist: {args.scenario}", file=sys.stderr)
        return EXIT_IO
    try:
        s = scenario_io.load_scenario(args.scenario)
    except scenario_io.ScenarioLoadError as e:
        print(f"invalid scenario: {e}", file=sys.stderr)
        return EXIT_VALIDATION
    violations = validate_scenario(s)
    for v in violations:
        print(v)
    if violations:
        return EXIT_VALIDATION
    print("scenario valid")
    return EXIT_OK


def cmd_synth(args) -> int:
    s = scenario_io.synth_scenario(
        seed=args.seed, n_dcs=args.n_dcs, n_regions=args.n_regions,
        n_models=args.n_models, horizon=args.horizon,
        heterogeneity=args.heterogeneity, demand_scale=args.demand_scale,
    )
    scenario_io.save_scenario(s, args.out)
    print(f"wrote scenario bundle to {args.out}")
    return EXIT_OK


def cmd_solve(args) -> int:
    eff = _effective(args)
    presets = eff["preset"] if isinstance(eff["preset"], list) else [eff["preset"]]
    if len(presets) != 1:
        print("error: solve takes exactly one --preset", file=sys.stderr)
        return EXIT_IO
    s = _load(args.scenario)
    cfg = experiment.preset_config(
        presets[0], q=float(eff["q"]), mu_c=float(eff["mu_c"]),
        mu_w=float(eff["mu_w"]), social_weight=float(eff["social_weight"]),
    )
    try:
        res = solve_offline(s, cfg, _solver_options(eff))
    except InfeasibleTimestepError as e:
        print(f"infeasible: {e}", file=sys.stderr)
        return EXIT_INFEASIBLE

    os.makedirs(args.out, exist_ok=True)
    files = []
    apath = os.path.join(args.out, "allocation.npy")
    np.save(apath, res.allocation)
    files.append(apath)

    bd = res.breakdown
    bpath = os.path.join(args.out, "breakdown.json")
    with open(bpath, "w") as f:
        json.dump(
            {
                "total": bd.total,
                "energy_cost": bd.energy_cost.tolist(),
                "social_term": bd.social_term.tolist(),
                "env_term": bd.env_term,
                "moving_cost": bd.moving_cost,
                "per_dc_env": bd.per_dc_env.tolist(),
                "iterations": res.iterations,
                "converged": bool(res.converged),
                "feasibility_residual": res.feasibility_residual,
                "kkt_residual": res.kkt_residual,
            },
            f, indent=2, sort_keys=True,
        )
        f.write("\n")
    files.append(bpath)

    cpath = os.path.join(args.out, "convergence.csv")
    with open(cpath, "w") as f:
        f.write("iteration,objective\n")
        for i, v in enumerate(res.objective_history):
            f.write(f"{i},{v!r}\n")
    files.append(cpath)

    eff["preset"] = presets
    _write_manifest(args.out, files + ["manifest.json"], eff)
    print(f"objective {bd.total!r} after {res.iterations} iterations")
    return EXIT_OK if res.converged else EXIT_NO_CONVERGENCE


def cmd_compare(args) -> int:
    eff = _effective(args)
    if args.preset is not None:
        presets = args.preset
    elif args.config and "preset" in json.load(open(args.config)):
        presets = eff["preset"]
    else:
        presets = list(PRESET_NAMES)
    s = _load(args.scenario)
    try:
        report = experiment.compare_report(
            s, presets=tuple(presets), opts=_solver_options(eff), out_dir=args.out,
            q=float(eff["q"]), mu_c=float(eff["mu_c"]), mu_w=float(eff["mu_w"]),
            social_weight=float(eff["social_weight"]),
        )
    except InfeasibleTimestepError as e:
        print(f"infeasible: {e}", file=sys.stderr)
        return EXIT_INFEASIBLE
    failed = [n for n, d in report["diagnostics"].items() if d["status"] != "ok"]
    eff["preset"] = list(presets)
    _write_manifest(
        args.out,
        ["report.json", "metrics.csv", "plot_dc_footprint.csv", "plot_region_perf.csv", "manifest.json"],
        eff,
    )
    for row in report["rows"]:
        print(
            f"{row['algorithm']:>9}: energy_avg={row['energy_avg']:.2f} "
            f"water_ratio={row['water_ratio']:.3f} carbon_ratio={row['carbon_ratio']:.3f} "
            f"perf_ratio={row['perf_cost_ratio']:.3f}"
        )
    if failed:
        print(f"presets failed: {failed}", file=sys.stderr)
        return EXIT_NO_CONVERGENCE
    return EXIT_OK


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        if args.command == "validate":
            return cmd_validate(args)
        if args.command == "synth":
            return cmd_synth(args)
        if args.command == "solve":
            return cmd_solve(args)
        if args.command == "compare":
            return cmd_compare(args)
    except scenario_io.ScenarioLoadError as e:
        print(f"invalid scenario: {e}", file=sys.stderr)
        return EXIT_VALIDATION
    except OSError as e:
        print(f"I/O error: {e}", file=sys.stderr)
        return EXIT_IO
    return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
