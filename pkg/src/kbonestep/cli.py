"""Command-line front end.

Subcommands: simulate | filter | estimate | montecarlo | bound. Every output
is plain CSV or JSON written with deterministic formatting, so a rerun with
identical flags produces byte-identical files. Exit codes: 0 success,
2 configuration problem, 3 numerical failure, 4 statistical failure.
"""

from __future__ import annotations

import argparse
import json
import os
import sys

from .errors import InputError, KbError, StatisticalFailure
from .fisher import mse_lower_bound
from .kbfilter import filter_to_csv, run_filter
from .mc import McConfig, delta_sweep, report_to_files, run_replications
from .model import TimeGrid, load_model
from .onestep import one_step_mle, one_step_process, process_to_csv
from .prelim import (DELTA_RANGES, estimate_example1, estimate_example2,
                     estimate_generic, learning_interval)
from .simulate import load_trajectory, simulate_path, trajectory_to_csv

_DELTA_OPTIMUM = 0.4
_DELTA_OPT_TOL = 0.1


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--model", required=True, help="model JSON file")
    p.add_argument("--eps", type=float, default=None,
                   help="override the model's noise level")
    p.add_argument("--steps", type=int, default=10_000,
                   help="time-grid steps (default 10000)")
    p.add_argument("-o", "--out", default=".", help="output directory")


def _parse_floats(text: str) -> list[float]:
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise InputError(f"expected comma-separated numbers, got {text!r}")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="kbonestep",
        description="Small-noise parameter estimation for partially observed "
                    "linear diffusions")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="generate one sample path")
    _add_common(p)
    p.add_argument("--theta", type=float, required=True, help="true parameter")
    p.add_argument("--seed", type=int, default=0)

    p = sub.add_parser("filter", help="run the filter along a path")
    _add_common(p)
    p.add_argument("--theta", type=float, required=True, help="filter parameter")
    p.add_argument("--theta-true", type=float, default=None,
                   help="simulation parameter (default: --theta)")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--trajectory", default=None, help="trajectory CSV to load")
    p.add_argument("--meta", default=None, help="metadata JSON for --trajectory")
    p.add_argument("--derivative", action="store_true",
                   help="also integrate the parameter-derivative filter")

    p = sub.add_parser("estimate", help="preliminary + one-step estimation")
    _add_common(p)
    p.add_argument("--theta", type=float, default=None,
                   help="true parameter for inline simulation")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--trajectory", default=None)
    p.add_argument("--meta", default=None)
    p.add_argument("--delta", type=float, default=0.5,
                   help="learning-interval exponent")
    p.add_argument("--use", default="theorem2", choices=sorted(DELTA_RANGES),
                   help="asymptotic result whose delta range applies")
    p.add_argument("--method", default="auto",
                   choices=["auto", "generic", "example1", "example2"])

    p = sub.add_parser("montecarlo", help="replication study")
    _add_common(p)
    p.add_argument("--theta", type=float, required=True, help="true parameter")
    p.add_argument("--reps", type=int, required=True)
    p.add_argument("--seed", type=int, default=0, help="base seed")
    p.add_argument("--delta", type=float, default=None)
    p.add_argument("--delta-sweep", default=None, metavar="A:B:STEP",
                   help="sweep the learning exponent instead of fixing it")
    p.add_argument("--checkpoints", default=None,
                   help="comma-separated times for process/mean estimators")
    p.add_argument("--estimators", default="prelim,onestep",
                   help="comma-separated subset of "
                        "prelim,onestep,process,mstar,adaptive")
    p.add_argument("--method", default="auto",
                   choices=["auto", "generic", "example1", "example2"])
    p.add_argument("--use", default="theorem2", choices=sorted(DELTA_RANGES))
    p.add_argument("--assert", dest="assertion", default=None,
                   choices=["delta-optimum"],
                   help="fail (exit 4) when the assertion does not hold")

    p = sub.add_parser("bound", help="mean-square efficiency floor")
    _add_common(p)
    p.add_argument("--theta", type=float, required=True, help="true parameter")
    p.add_argument("--times", default=None,
                   help="comma-separated evaluation times (default: T/2, T)")
    return ap


def _load(args):
    model = load_model(args.model)
    if args.eps is not None:
        model = model.with_eps(args.eps)
    grid = TimeGrid(args.steps, model.T)
    os.makedirs(args.out, exist_ok=True)
    return model, grid


def _write_json(path, payload) -> None:
    with open(path, "w") as fh:
        json.dump(payload, fh, sort_keys=True, indent=2)
        fh.write("\n")


def _get_trajectory(args, model, grid):
    if args.trajectory is not None:
        if args.meta is None:
            raise InputError("--trajectory requires --meta")
        return load_trajectory(args.trajectory, args.meta)
    theta = getattr(args, "theta_true", None)
    if theta is None:
        theta = args.theta
    if theta is None:
        raise InputError("need --theta for inline simulation or --trajectory")
    return simulate_path(model, theta, grid, args.seed)


def cmd_simulate(args) -> int:
    model, grid = _load(args)
    traj = simulate_path(model, args.theta, grid, args.seed)
    trajectory_to_csv(traj, os.path.join(args.out, "trajectory.csv"),
                      os.path.join(args.out, "meta.json"))
    return 0


def cmd_filter(args) -> int:
    model, grid = _load(args)
    traj = _get_trajectory(args, model, grid)
    out = run_filter(model, args.theta, traj, with_derivative=args.derivative)
    filter_to_csv(out, os.path.join(args.out, "filter.csv"))
    return 0


def cmd_estimate(args) -> int:
    model, grid = _load(args)
    traj = _get_trajectory(args, model, grid)
    tau = learning_interval(traj.eps, args.delta, model.T, use=args.use)
    fn = {"generic": estimate_generic, "example1": estimate_example1,
          "example2": estimate_example2}.get(args.method)
    if fn is None:
        from .model import CaseTag
        fn = (estimate_example1 if model.case_tag is CaseTag.THETA_IN_F
              else estimate_example2)
    prelim = fn(model, traj, tau)
    result = one_step_mle(model, traj, prelim)
    process = one_step_process(model, traj, prelim)
    _write_json(os.path.join(args.out, "estimate.json"), {
        "theta_bar": prelim.theta_bar,
        "branch": prelim.branch.value,
        "tau_eps": prelim.tau_eps,
        "delta": args.delta,
        "theta_star": result.theta_star,
        "correction": result.correction,
        "fisher_used": result.fisher_used,
        "prelim_clamped": result.prelim_clamped,
    })
    process_to_csv(process, os.path.join(args.out, "process.csv"))
    return 0


def _parse_sweep(text: str) -> list[float]:
    try:
        a, b, step = (float(v) for v in text.split(":"))
    except ValueError:
        raise InputError(f"--delta-sweep expects A:B:STEP, got {text!r}")
    if step <= 0 or b < a:
        raise InputError(f"empty sweep {text!r}")
    out, v = [], a
    while v <= b + 1e-9:
        out.append(round(v, 10))
        v += step
    return out


def cmd_montecarlo(args) -> int:
    model, grid = _load(args)
    estimators = frozenset(v.strip() for v in args.estimators.split(",") if v.strip())
    checkpoints = tuple(_parse_floats(args.checkpoints)) if args.checkpoints else ()

    if args.delta_sweep is not None:
        deltas = _parse_sweep(args.delta_sweep)
        curve = delta_sweep(model, args.theta, deltas, args.reps, grid,
                            base_seed=args.seed, prelim_method=args.method,
                            delta_use=args.use)
        best = min(curve, key=lambda dv: dv[1])[0]
        payload = {"schema": 1,
                   "sweep": [{"delta": d, "prelim_mse": v} for d, v in curve],
                   "best_delta": best}
        _write_json(os.path.join(args.out, "sweep.json"), payload)
        if args.assertion == "delta-optimum":
            if abs(best - _DELTA_OPTIMUM) > _DELTA_OPT_TOL:
                raise StatisticalFailure(
                    f"empirical MSE minimizer delta={best} is not within "
                    f"{_DELTA_OPT_TOL} of {_DELTA_OPTIMUM}")
        return 0

    if args.delta is None:
        raise InputError("montecarlo needs --delta or --delta-sweep")
    cfg = McConfig(model=model, theta0=args.theta, delta=args.delta,
                   n_rep=args.reps, grid=grid, base_seed=args.seed,
                   checkpoints=checkpoints, estimators=estimators,
                   prelim_method=args.method, delta_use=args.use)
    report = run_replications(cfg)
    report_to_files(report, cfg, os.path.join(args.out, "rows.csv"),
                    os.path.join(args.out, "aggregates.json"))
    return 0


def cmd_bound(args) -> int:
    model, grid = _load(args)
    times = (_parse_floats(args.times) if args.times
             else [model.T / 2.0, model.T])
    entries = []
    for t in times:
        eb = mse_lower_bound(model, args.theta, t, grid)
        entries.append({"t": eb.t, "bound": eb.bound})
    _write_json(os.path.join(args.out, "bound.json"),
                {"schema": 1, "theta0": args.theta, "bounds": entries})
    return 0


_DISPATCH = {"simulate": cmd_simulate, "filter": cmd_filter,
             "estimate": cmd_estimate, "montecarlo": cmd_montecarlo,
             "bound": cmd_bound}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return _DISPATCH[args.command](args)
    except InputError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except StatisticalFailure as exc:
        print(f"statistical failure: {exc}", file=sys.stderr)
        return 4
    except KbError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 3
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
