"""Command-line entry point.

Exit codes: 0 success, 2 invalid input, 3 planning failure, 4 unsafe result.
"""

from __future__ import annotations

import argparse
import json
import math
import sys
from dataclasses import replace

from .embodied_box import check_vehicle_admissible, extents_arrays, prerequisites
from .errors import NotSafeWithinBudget, ParseError, StageError, ValidationError
from .scenario import VEHICLE_PRESETS, load_scenario, validate_scenario
from .pipeline import (
    certify,
    coarse_seed,
    export,
    growth_rate_experiment,
    naive_escalation,
    plan,
    probe_report,
    read_trajectory_csv,
)

EXIT_OK = 0
EXIT_INVALID = 2
EXIT_PLANNING = 3
EXIT_UNSAFE = 4


def _emit(obj) -> None:
    print(json.dumps(obj, indent=2, sort_keys=True))


def _scenario(args):
    sc = load_scenario(args.scenario)
    if getattr(args, "lam", None) is not None:
        sc = sc.with_lambda(args.lam)
    if getattr(args, "seed", None) is not None:
        sc = replace(sc, seed=args.seed)
    validate_scenario(sc)
    return sc


def _run_code(m) -> int:
    if not m.solver_success:
        return EXIT_PLANNING
    return EXIT_OK if m.safe else EXIT_UNSAFE


def cmd_plan(args) -> int:
    sc = _scenario(args)
    traj, m = plan(sc, args.mode, args.nfe)
    _emit(m.to_dict())
    if args.out:
        export(traj, m, args.out, sc)
    return _run_code(m)


def cmd_export(args) -> int:
    if not args.out:
        print("export needs --out", file=sys.stderr)
        return EXIT_INVALID
    return cmd_plan(args)


def cmd_check(args) -> int:
    sc = _scenario(args)
    if args.trajectory is None:
        rep = probe_report(sc)
        _emit(rep)
        return EXIT_OK if rep["oracle_safe"] else EXIT_UNSAFE
    traj = read_trajectory_csv(args.trajectory)
    rep = certify(traj, sc, args.samples)
    _emit(rep.to_dict())
    return EXIT_OK if rep.safe else EXIT_UNSAFE


def cmd_box(args) -> int:
    params = VEHICLE_PRESETS[args.vehicle]
    lam = 1.0 if args.lam is None else args.lam
    rep = prerequisites(args.kappa, args.s, params, lam)
    el, er, eu = (float(a) for a in extents_arrays(args.kappa, args.s, params))
    _emit({
        "kappa": args.kappa,
        "s": args.s,
        "lambda": lam,
        "admissible_vehicle": check_vehicle_admissible(params),
        "prerequisites_hold": rep.ok,
        "violated": sorted(rep.violated),
        "slacks": rep.slacks,
        "extents": {"e_left": el, "e_right": er, "e_up": eu, "e_down": 0.0},
    })
    return EXIT_OK if rep.ok else EXIT_INVALID


def cmd_escalate(args) -> int:
    sc = _scenario(args)
    seed = coarse_seed(sc)
    if args.nfe is None:
        _, m = plan(sc, "embodied", None, seed)
        n_start = m.n_fe
    else:
        n_start = args.nfe
    n_max = args.n_max or int(math.ceil(3 * n_start))
    try:
        n_safe, trail = naive_escalation(sc, n_start, n_max, seed)
    except NotSafeWithinBudget as exc:
        _emit({"n_start": n_start, "n_max": n_max, "n_safe": None,
               "trail": [t.to_dict() for t in exc.trail]})
        return EXIT_PLANNING
    _emit({"n_start": n_start, "n_max": n_max, "n_safe": n_safe, "trail": [t.to_dict() for t in trail]})
    return EXIT_OK


def cmd_growth(args) -> int:
    sc = _scenario(args)
    lams = [float(v) for v in args.lambdas.split(",")] if args.lambdas else [sc.lam]
    if args.lam is not None and not args.lambdas:
        lams = [args.lam]
    results = growth_rate_experiment(sc, args.tasks, lams, sc.seed)
    payload = [r.to_dict() for r in results]
    text = json.dumps(payload, indent=2, sort_keys=True) + "\n"
    if args.out:
        from pathlib import Path

        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        (out / "growth.json").write_text(text)
    sys.stdout.write(text)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="embodied-planner", description=__doc__,
                                 formatter_class=argparse.RawDescriptionHelpFormatter)
    sub = ap.add_subparsers(dest="command", required=True)

    def common(p, lam=True):
        p.add_argument("scenario", help="scenario JSON file")
        if lam:
            p.add_argument("--lambda", dest="lam", type=float, default=None,
                           help="tightening factor for the initial guess, in (0, 1)")
        p.add_argument("--seed", type=int, default=None, help="override the scenario seed")

    p = sub.add_parser("plan", help="plan and certify one trajectory")
    common(p)
    p.add_argument("--mode", choices=("embodied", "naive"), default="embodied")
    p.add_argument("--nfe", type=int, default=None, help="number of intervals (naive mode)")
    p.add_argument("--out", default=None, help="directory for CSV, metrics and SVG")
    p.set_defaults(func=cmd_plan)

    p = sub.add_parser("export", help="plan and write CSV, metrics and SVG")
    common(p)
    p.add_argument("--mode", choices=("embodied", "naive"), default="embodied")
    p.add_argument("--nfe", type=int, default=None)
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_export)

    p = sub.add_parser("check", help="certify a trajectory CSV, or run the scenario's probe")
    common(p, lam=False)
    p.add_argument("trajectory", nargs="?", default=None, help="trajectory CSV (t,x,y,theta,v,phi)")
    p.add_argument("--samples", type=int, default=200, help="samples per interval")
    p.set_defaults(func=cmd_check)

    p = sub.add_parser("box", help="extents and validity conditions for one interval")
    p.add_argument("--kappa", type=float, required=True)
    p.add_argument("--s", type=float, required=True, help="arc length of the interval (m)")
    p.add_argument("--vehicle", choices=sorted(VEHICLE_PRESETS), default="table_i")
    p.add_argument("--lambda", dest="lam", type=float, default=None)
    p.set_defaults(func=cmd_box)

    p = sub.add_parser("escalate", help="raise naive N until certified safe")
    common(p)
    p.add_argument("--nfe", type=int, default=None, help="starting N (default: embodied N)")
    p.add_argument("--n-max", type=int, default=None)
    p.set_defaults(func=cmd_escalate)

    p = sub.add_parser("growth", help="collocation growth-rate experiment on random tasks")
    common(p)
    p.add_argument("--tasks", type=int, default=5)
    p.add_argument("--lambdas", default=None, help="comma-separated list, e.g. 0.5,0.75,0.9")
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_growth)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ParseError, ValidationError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except StageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_PLANNING
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID


if __name__ == "__main__":
    sys.exit(main())
