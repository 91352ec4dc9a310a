"""Command-line entry point ``infeasalm``.

Subcommands
-----------
solve              run the augmented Lagrangian method on a problem file
ippa               run proximal point iterations on a built-in oracle
validate-schedule  check a step-size / error schedule against the assumptions
reproduce          rerun the shipped worked examples
"""

from __future__ import annotations

import argparse
import datetime as _dt
import json
import os
import sys
from concurrent.futures import ThreadPoolExecutor

import numpy as np

from . import __version__
from ._backend import BACKEND
from .errors import InfeasAlmError, ScheduleRejectedError
from .fileio import (
    IPPA_COLUMNS,
    TRACE_COLUMNS,
    data_path,
    read_problem,
    trace_rows,
    write_report,
    write_trace,
)
from .ialm import STATUS_UNBOUNDED, IalmOptions, attach_reference, run_ialm
from .ippa import ErrorInjector, diagnostics, parse_oracle, run_ippa
from .oracle import (
    ClosestFeasibleReference,
    fit_rate_above_floor,
    grid_closest_feasible,
    least_squares_min_violation,
)
from .schedules import parse_schedule, validate_assumptions

EXIT_OK = 0
EXIT_FAIL = 1
EXIT_UNBOUNDED = 2
EXIT_SCHEDULE = 3
EXIT_USAGE = 64


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        sys.exit(EXIT_USAGE)


def _floats(text):
    return np.array([float(t) for t in text.replace(";", ",").split(",") if t.strip()])


def _header(args, what):
    if args.deterministic:
        return None
    stamp = _dt.datetime.now(_dt.timezone.utc).isoformat(timespec="seconds")
    return f"{what} generated {stamp} by infeasalm {__version__}"


def _fits(series_list, abscissa, burn_in=0.1):
    out = []
    for name, series in series_list:
        if series is None or len(series) == 0 or np.all(np.isnan(series)):
            continue
        entry = {"series": name, "abscissa": "cumulative_gamma"}
        try:
            fit = fit_rate_above_floor(series, abscissa, burn_in, series_name=name,
                                       abscissa_name="cumulative_gamma")
        except InfeasAlmError as exc:
            entry.update(slope=None, note=str(exc))
        else:
            if fit is None:
                entry.update(slope=None, note="series at numerical floor")
            else:
                entry.update(fit.to_dict())
        out.append(entry)
    return out


def build_report(run, problem_name="", options=None):
    """JSON-ready summary of an IALM run."""
    ref = run.reference
    S = run.cum_gamma
    series = [("s_norm", run.s_norm), ("slack_proj_gap", run.slack_proj_gap)]
    if ref is not None:
        sb2 = float(np.dot(ref.sbar, ref.sbar))
        series += [
            ("dist_s_to_ref", run.dist_s_to_ref),
            ("value_gap_to_ref", run.value_gap_to_ref),
            ("s_sq_gap", run.s_norm ** 2 - sb2),
        ]
    n = run.n_iter
    final = {
        "f_xk": run.f[-1] if n else None,
        "s_norm": run.s_norm[-1] if n else None,
        "s": run.s[-1] if n else None,
        "x": run.x[-1] if n else None,
        "lambda_norm": float(np.linalg.norm(run.lam[-1])) if n and run.lam.size else None,
        "slack_proj_gap": run.slack_proj_gap[-1] if n else None,
        "dist_s_to_ref": run.dist_s_to_ref[-1] if n and run.dist_s_to_ref is not None else None,
        "value_gap_to_ref": run.value_gap_to_ref[-1] if n and run.value_gap_to_ref is not None else None,
    }
    if run.status == STATUS_UNBOUNDED:
        final["unbounded_at_iteration"] = run.unbounded_at
        final["unbounded_value"] = run.unbounded_value
        final["unbounded_x"] = run.unbounded_x
    return {
        "status": run.status,
        "iterations": n,
        "problem": problem_name,
        "final": final,
        "rate_fits": _fits(series, S) if n >= 50 else [],
        "schedule": {"spec": run.schedule.spec(), "assumptions": run.report.to_dict() if run.report else None},
        "reference": ref.to_dict() if ref is not None else None,
        "options": dict(options or {}, backend=BACKEND),
    }


# ---------------------------------------------------------------- solve


def _reference(args, prog):
    if getattr(args, "ref_file", None):
        return ClosestFeasibleReference.from_json(args.ref_file)
    if args.ref == "grid":
        lo, hi = args.ref_bounds
        return grid_closest_feasible(prog, (lo, hi), args.ref_resolution)
    if args.ref == "lsq":
        return least_squares_min_violation(prog)
    return None


def _solve_one(args, problem_path, out_path, report_path):
    try:
        prog = read_problem(problem_path)
        schedule = parse_schedule(args.gamma, args.eps)
    except (InfeasAlmError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FAIL
    opts = IalmOptions(
        inner_tol=args.inner_tol,
        inner_max_iter=args.inner_max_iter,
        max_outer_iter=args.iters,
        stop_on_convergence=not args.no_stop,
        backend=args.backend,
    )
    lam0 = _floats(args.lam0) if args.lam0 else None
    try:
        ref = _reference(args, prog)
        if ref is not None and getattr(args, "ref_out", None):
            ref.to_json(args.ref_out)
        run = run_ialm(prog, lam0, schedule, opts, force=args.force_schedule, horizon=args.horizon)
    except ScheduleRejectedError as exc:
        print(f"schedule rejected: {exc}", file=sys.stderr)
        return EXIT_SCHEDULE
    except (InfeasAlmError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FAIL
    if ref is not None:
        attach_reference(run, ref)
    name = prog.name or os.path.basename(problem_path)
    if out_path:
        write_trace(out_path, trace_rows(run), _header(args, "ialm trace"), TRACE_COLUMNS)
    report = build_report(run, name, {"gamma": args.gamma, "eps": args.eps, "iters": args.iters,
                                      "inner_tol": args.inner_tol, "seed": args.seed})
    if report_path:
        write_report(report_path, report)
    if not args.quiet:
        fin = report["final"]
        line = f"{name}: {run.status} after {run.n_iter} iterations"
        if run.status == STATUS_UNBOUNDED:
            line = f"{name}: {run.status} detected during iteration {run.unbounded_at}"
        if fin["s_norm"] is not None:
            line += f", |s| = {fin['s_norm']:.6g}, f = {fin['f_xk']:.6g}"
        if fin["dist_s_to_ref"] is not None:
            line += f", dist to sbar = {fin['dist_s_to_ref']:.3g}"
        print(line)
    return EXIT_UNBOUNDED if run.status == STATUS_UNBOUNDED else EXIT_OK


def cmd_solve(args):
    if args.batch:
        files = sorted(
            os.path.join(args.batch, f) for f in os.listdir(args.batch)
            if f.endswith(".json") and not f.endswith(".ref.json") and not f.endswith(".report.json")
        )
        outdir = args.outdir or args.batch
        os.makedirs(outdir, exist_ok=True)

        def job(path):
            stem = os.path.splitext(os.path.basename(path))[0]
            return _solve_one(args, path, os.path.join(outdir, stem + ".csv"),
                              os.path.join(outdir, stem + ".report.json"))

        with ThreadPoolExecutor(max_workers=max(1, args.jobs)) as pool:
            codes = list(pool.map(job, files))
        return max(codes, default=EXIT_OK)
    if not args.problem:
        print("error: --problem or --batch is required", file=sys.stderr)
        return EXIT_USAGE
    return _solve_one(args, args.problem, args.out, args.report)


# ---------------------------------------------------------------- ippa


def cmd_ippa(args):
    try:
        oracle = parse_oracle(args.oracle)
        schedule = parse_schedule(args.gamma, args.eps)
        lam0 = _floats(args.lam0) if args.lam0 else np.zeros(oracle.dim)
        direction = _floats(args.direction) if args.direction else np.ones(oracle.dim)
        inj = ErrorInjector(
            args.inject,
            direction=direction if args.inject == "fixed" else None,
            seed=args.seed,
            magnitude=args.magnitude,
        )
        run = run_ippa(oracle, lam0, schedule, inj, args.iters, force=args.force_schedule,
                       horizon=args.horizon)
    except ScheduleRejectedError as exc:
        print(f"schedule rejected: {exc}", file=sys.stderr)
        return EXIT_SCHEDULE
    except InfeasAlmError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FAIL
    dg = diagnostics(run)
    excess = np.concatenate(([np.nan], dg.increment_excess))
    rows = []
    for j in range(run.n_iter):
        rows.append((
            j + 1, run.gammas[j], run.eps[j], run.err_norm[j], oracle.value(run.lam_star[j]),
            np.linalg.norm(run.s_star[j]), np.linalg.norm(run.s[j]), dg.dist_star_to_sbar[j],
            dg.dist_s_to_sbar[j], dg.sq_gap_star[j], dg.vertical[j], dg.conj_gap[j],
            dg.fenchel_young[j], excess[j], np.linalg.norm(run.lam[j + 1]),
        ))
    if args.out:
        write_trace(args.out, rows, _header(args, "ippa trace"), IPPA_COLUMNS)
    bound_ok = bool(np.all(dg.increment_excess <= 1e-10)) if dg.increment_excess.size else True
    summary = {
        "status": "MaxIter",
        "iterations": run.n_iter,
        "problem": oracle.spec(),
        "final": {
            "s_star": run.s_star[-1],
            "dist_s_star_to_sbar": dg.dist_star_to_sbar[-1],
            "vertical_distance": dg.vertical[-1],
            "conj_gap": dg.conj_gap[-1],
            "increment_bound_holds": bound_ok,
        },
        "rate_fits": _fits([("sq_gap_s_star", dg.sq_gap_star), ("conj_gap", dg.conj_gap)],
                           dg.cum_gamma) if run.n_iter >= 50 else [],
        "schedule": {"spec": schedule.spec(), "assumptions": run.report.to_dict()},
        "reference": {"sbar": dg.sbar, "h_star_sbar": dg.h_star_sbar},
        "options": {"injector": inj.describe(), "seed": args.seed, "backend": BACKEND},
    }
    if args.report:
        write_report(args.report, summary)
    if not args.quiet:
        print(
            f"{oracle.family}: {run.n_iter} iterations, |s*-sbar| = {dg.dist_star_to_sbar[-1]:.3g}, "
            f"squared-norm increment bound {'holds' if bound_ok else 'violated'}"
        )
    return EXIT_OK


# ---------------------------------------------------------------- validate-schedule


def cmd_validate_schedule(args):
    try:
        schedule = parse_schedule(args.gamma, args.eps)
        report = validate_assumptions(schedule, args.horizon)
    except InfeasAlmError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FAIL
    if args.json:
        print(json.dumps(report.to_dict(), indent=2, default=float))
    else:
        print(schedule.spec())
        print(report.format())
    return EXIT_FAIL if report.has_fails else EXIT_OK


# ---------------------------------------------------------------- reproduce

EXAMPLES = {
    "qcqp-infeasible": ("qcqp_infeasible.json", "grid"),
    "qcqp-subdiff": ("qcqp_subdiff.json", "grid"),
    "improper": ("improper.json", "none"),
    "equality-qp": ("equality_qp.json", "lsq"),
    "linear-formulation": ("linear_formulation.json", "lsq"),
}


def cmd_reproduce(args):
    names = list(EXAMPLES) if args.example == "all" else [args.example]
    os.makedirs(args.outdir, exist_ok=True)
    worst = EXIT_OK
    for name in names:
        fname, ref = EXAMPLES[name]
        ns = argparse.Namespace(
            gamma="const:1", eps="zero", iters=args.iters, ref=ref, ref_bounds=(-3.0, 3.0),
            ref_resolution=10**4, ref_file=None, ref_out=None, inner_tol=1e-10, inner_max_iter=20000,
            no_stop=True, backend=None, lam0=None, force_schedule=False, horizon=10**6,
            deterministic=args.deterministic, quiet=False, seed=None,
        )
        code = _solve_one(
            ns, data_path(fname), os.path.join(args.outdir, name + ".csv"),
            os.path.join(args.outdir, name + ".report.json"),
        )
        if name != "improper":
            worst = max(worst, code)
    return worst


# ---------------------------------------------------------------- parser


def _common(p):
    p.add_argument("--gamma", default="const:1", help="step sizes, e.g. const:1 or poly:g0=1,p=0.5")
    p.add_argument("--eps", default="zero", help="errors, e.g. zero, logpoly:c=1, powerlaw:c=1,a=2")
    p.add_argument("--iters", type=int, default=1000)
    p.add_argument("--lam0", default=None, help="comma-separated starting multiplier")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--force-schedule", action="store_true")
    p.add_argument("--horizon", type=int, default=10**6, help="assumption-check horizon")
    p.add_argument("--deterministic", action="store_true", help="omit the timestamp header line")
    p.add_argument("--quiet", action="store_true")
    p.add_argument("--report", default=None, help="write a JSON report here")


def build_parser():
    parser = _Parser(prog="infeasalm", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("solve", help="run the augmented Lagrangian method")
    p.add_argument("--problem", default=None)
    p.add_argument("--batch", default=None, help="solve every problem file in this directory")
    p.add_argument("--outdir", default=None, help="output directory for --batch")
    p.add_argument("--jobs", type=int, default=1)
    p.add_argument("--ref", choices=("grid", "lsq", "none"), default="none")
    p.add_argument("--ref-bounds", type=float, nargs=2, default=(-3.0, 3.0), metavar=("LO", "HI"))
    p.add_argument("--ref-resolution", type=int, default=10**4)
    p.add_argument("--ref-file", default=None, help="load the reference from a JSON sidecar")
    p.add_argument("--ref-out", default=None, help="save the computed reference as a JSON sidecar")
    p.add_argument("--out", default=None, help="trace CSV path")
    p.add_argument("--inner-tol", type=float, default=1e-10)
    p.add_argument("--inner-max-iter", type=int, default=20000)
    p.add_argument("--no-stop", action="store_true", help="disable the Converged stop rule")
    p.add_argument("--backend", choices=("cython", "python"), default=None)
    _common(p)
    p.set_defaults(func=cmd_solve)

    p = sub.add_parser("ippa", help="proximal point iterations on an oracle")
    p.add_argument("--oracle", required=True, help="linear:a=1,2 | quadratic:P=I,b=0 | maxaffine:slopes=[[1],[2]],intercepts=[0,0]")
    p.add_argument("--inject", choices=("none", "fixed", "random"), default="none")
    p.add_argument("--direction", default=None, help="direction for --inject fixed")
    p.add_argument("--magnitude", choices=("exact", "uniform"), default="exact")
    p.add_argument("--out", default=None, help="trace CSV path")
    _common(p)
    p.set_defaults(func=cmd_ippa)

    p = sub.add_parser("validate-schedule", help="check the step-size and error assumptions")
    p.add_argument("--gamma", default="const:1")
    p.add_argument("--eps", default="zero")
    p.add_argument("--horizon", type=int, default=10**6)
    p.add_argument("--json", action="store_true")
    p.set_defaults(func=cmd_validate_schedule)

    p = sub.add_parser("reproduce", help="rerun the shipped examples")
    p.add_argument("example", choices=("all",) + tuple(EXAMPLES))
    p.add_argument("--outdir", default="reproduce_out")
    p.add_argument("--iters", type=int, default=2000)
    p.add_argument("--deterministic", action="store_true")
    p.set_defaults(func=cmd_reproduce)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    return args.func(args)


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
