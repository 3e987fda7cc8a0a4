"""``tailbound`` command line.

Exit codes: 0 success, 2 usage or calibration error, 3 infeasible problem
(the report is still written), 4 audit failure.
"""
from __future__ import annotations

import argparse
import csv
import io as _io
import logging
import sys
from pathlib import Path

from . import io
from .calibration import CalibrationConfig, SampleSet, calibrate, sample_normal
from .constraints import ConstraintSet, boundary_from_list
from .errors import CalibrationError, TailboundError
from .experiments import data_driven_runs, summarize, true_distribution_runs
from .oracle import GridSpec, grid_lp_bound, verify_report
from .pou import PouProblem, solve_1pou
from .pricing import PricingBudget
from .presets import PERCENTILE_PRESETS, target, true_normal_constraints
from .solver import SolveReport, SolverOptions, solve

EXIT_OK, EXIT_USAGE, EXIT_INFEASIBLE, EXIT_AUDIT = 0, 2, 3, 4


class UsageError(Exception):
    pass


def _err(component: str, msg: str) -> None:
    print(f"tailbound.{component}: {msg}", file=sys.stderr)


def _positive_int(s: str) -> int:
    v = int(s)
    if v < 1:
        raise argparse.ArgumentTypeError("must be >= 1")
    return v


def _alpha(s: str) -> float:
    v = float(s)
    if not 0.0 < v < 1.0:
        raise argparse.ArgumentTypeError("alpha must be in (0, 1)")
    return v


def _grid(s: str) -> GridSpec:
    """``CELLSxEXTENT`` such as ``64x20``."""
    try:
        cells, extent = s.lower().split("x")
        return GridSpec(float(extent), int(cells))
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"expected CELLSxEXTENT, e.g. 64x20 ({exc})") from None


def _c_grid(s: str):
    if "," in s:
        return [float(v) for v in s.split(",")]
    return _positive_int(s)


def load_boundary(spec: str):
    """A preset name (S1, S2, S3) or a JSON file of ``{x_b, slope, intercept}`` pieces."""
    if spec.upper() in ("S1", "S2", "S3"):
        return target(spec)
    doc = io.read_json(spec)
    return boundary_from_list(doc["pieces"] if isinstance(doc, dict) else doc)


def load_problem(path: str):
    """A constraint or 1-POU problem JSON file; ``7.1`` names the true-moment benchmark."""
    if path == "7.1":
        return true_normal_constraints()
    doc = io.read_json(path)
    if "x10" in doc:
        return PouProblem.from_dict(doc)
    return ConstraintSet.from_dict(doc)


def solver_options(args) -> SolverOptions:
    budget = PricingBudget(restarts=args.restarts, seed=args.seed)
    return SolverOptions(budget=budget)


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------

def cmd_sample(args) -> int:
    if args.n < 1:
        raise UsageError("--n must be >= 1")
    io.write_samples(args.out, sample_normal(args.n, args.seed))
    return EXIT_OK


def cmd_calibrate(args) -> int:
    try:
        pts = io.read_samples(args.samples)
        cfg = CalibrationConfig.from_preset(args.preset, alpha=args.alpha, bootstrap_reps=args.bootstrap,
                                            rng_seed=args.seed, reflect=args.reflect)
        cs = calibrate(SampleSet(pts), cfg)
    except (CalibrationError, OSError) as exc:
        _err("calibration", str(exc))
        return EXIT_USAGE
    io.atomic_write_text(args.out, cs.to_json())
    return EXIT_OK


def cmd_solve(args) -> int:
    problem = load_problem(args.constraints)
    opts = solver_options(args)
    if isinstance(problem, PouProblem):
        if args.box_bound is not None:
            problem.box_bound = args.box_bound
        rep = solve_1pou(problem, args.c_grid, opts)
    else:
        rep = solve(problem, load_boundary(args.target), args.c_grid, opts, args.box_bound)
    io.write_json(args.out, rep.to_dict())
    if not rep.feasible:
        _err("solver", f"problem infeasible; report written to {args.out}")
        return EXIT_INFEASIBLE
    print(f"{rep.value:.10g}")
    return EXIT_OK


def cmd_verify(args) -> int:
    doc = io.read_json(args.report)
    rep = SolveReport.from_dict(doc)
    problem = load_problem(args.constraints)
    bnd = None if isinstance(problem, PouProblem) else load_boundary(args.target)
    res = verify_report(rep, problem, bnd, mc_draws=args.mc_draws, seed=args.seed)
    ver = res.to_dict()
    ok = res.passed
    if args.grid is not None and bnd is not None and rep.feasible:
        gb = grid_lp_bound(problem, bnd, rep.best_c, args.grid)
        ver["grid_bound"] = {"value": gb.value, "status": gb.status, "edge_mass": gb.edge_mass}
        if gb.feasible and gb.value > rep.value * (1 + 1e-6) + 1e-12:
            ok = False
            ver["messages"].append(f"grid bound {gb.value:.6g} exceeds the reported optimum")
    ver["passed"] = ok
    doc["verification"] = ver
    io.write_json(args.out or args.report, doc)
    if not ok:
        for m in ver["messages"] or ["audit failed"]:
            _err("oracle", m)
        return EXIT_AUDIT
    return EXIT_OK


def _write_csv(path: Path, rows: list) -> None:
    buf = _io.StringIO()
    w = csv.DictWriter(buf, fieldnames=list(rows[0]), lineterminator="\n")
    w.writeheader()
    w.writerows(rows)
    io.atomic_write_text(path, buf.getvalue())


def cmd_reproduce(args) -> int:
    if args.experiment not in ("7.1", "7.2"):
        raise UsageError(f"unknown experiment {args.experiment!r}; choose 7.1 or 7.2")
    names = [t.strip().upper() for t in (args.target or ("S1,S2" if args.experiment == "7.1" else "S3")).split(",")]
    out = Path(args.outdir)
    opts = solver_options(args)
    summaries, status = [], EXIT_OK
    for name in names:
        target(name)
        if args.experiment == "7.1":
            recs = true_distribution_runs(name, args.reps, args.seed, opts, c_grid=1, box_bound=args.box_bound)
        else:
            recs = data_driven_runs(name, args.m, args.preset, args.reps, args.seed, args.alpha, opts,
                                    args.c_grid, args.bootstrap, args.box_bound)
        for r in recs:
            if r.report is not None:
                io.write_json(out / "runs" / f"{name}_{r.run:03d}.json", r.report.to_dict())
        _write_csv(out / f"runs_{name}.csv", [r.row() for r in recs])
        s = summarize(recs)
        summaries.append(s)
        if s["completed"] < 0.9 * s["runs"]:
            _err("experiments", f"{name}: only {s['completed']} of {s['runs']} runs completed")
            status = EXIT_USAGE
    _write_csv(out / "summary.csv", summaries)
    for s in summaries:
        print(f"{s['target']}: median {s['q50']:.4g} truth {s['truth']:.4g} "
              f"covers {s['covers_truth_fraction']:.2f} ({s['completed']}/{s['runs']} runs)")
    return status


# ---------------------------------------------------------------------------
# parser
# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="tailbound", description="Worst-case tail probabilities under unimodality.")
    p.add_argument("--config", help="key = value file (or JSON) supplying option defaults")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, seed=True):
        if seed:
            sp.add_argument("--seed", type=int, default=0)

    def solver_flags(sp):
        sp.add_argument("--c-grid", type=_c_grid, default=3, help="count of c values or a comma list")
        sp.add_argument("--restarts", type=int, default=64, help="random pricing restarts")
        sp.add_argument("--box-bound", type=float, default=None, help="pricing box L beyond the mode")

    s = sub.add_parser("sample", help="draw N(0, 16 I) samples to CSV")
    s.add_argument("--n", type=int, required=True)
    s.add_argument("--out", required=True)
    common(s)
    s.set_defaults(func=cmd_sample)

    s = sub.add_parser("calibrate", help="estimate a constraint set from samples")
    s.add_argument("samples")
    s.add_argument("--out", required=True)
    s.add_argument("--alpha", type=_alpha, default=0.05)
    s.add_argument("--preset", choices=sorted(PERCENTILE_PRESETS), default="90")
    s.add_argument("--bootstrap", type=int, default=1000, help="bootstrap replicates")
    s.add_argument("--reflect", action="store_true", help="reflect the KDE at the threshold")
    common(s)
    s.set_defaults(func=cmd_calibrate)

    s = sub.add_parser("solve", help="compute the worst-case bound")
    s.add_argument("constraints")
    s.add_argument("--target", default="S1", help="S1, S2, S3 or a boundary JSON file")
    s.add_argument("--out", required=True)
    solver_flags(s)
    common(s)
    s.set_defaults(func=cmd_solve)

    s = sub.add_parser("verify", help="audit a report")
    s.add_argument("report")
    s.add_argument("constraints")
    s.add_argument("--target", default="S1")
    s.add_argument("--out", default=None, help="annotated report (default: overwrite the input)")
    s.add_argument("--mc-draws", type=int, default=1_000_000)
    s.add_argument("--grid", type=_grid, default=None, help="also run the grid LP oracle, e.g. 64x20")
    common(s)
    s.set_defaults(func=cmd_verify)

    s = sub.add_parser("reproduce", help="repeat the benchmark experiments")
    s.add_argument("experiment", help="7.1 (true moments) or 7.2 (data driven)")
    s.add_argument("--outdir", required=True)
    s.add_argument("--target", default=None, help="comma list of S1, S2, S3")
    s.add_argument("--reps", type=_positive_int, default=50)
    s.add_argument("--m", type=_positive_int, default=100_000, help="sample size for 7.2")
    s.add_argument("--preset", choices=sorted(PERCENTILE_PRESETS), default="95")
    s.add_argument("--alpha", type=_alpha, default=0.05)
    s.add_argument("--bootstrap", type=int, default=1000)
    solver_flags(s)
    common(s)
    s.set_defaults(func=cmd_reproduce)
    return p


def _apply_config(parser: argparse.ArgumentParser, argv) -> None:
    pre = argparse.ArgumentParser(add_help=False)
    pre.add_argument("--config")
    known, _ = pre.parse_known_args(argv)
    if not known.config:
        return
    values = io.read_config(known.config)
    for action in parser._subparsers._group_actions:
        for sp in action.choices.values():
            sp.set_defaults(**{k: v for k, v in values.items() if k in {a.dest for a in sp._actions}})


def main(argv=None) -> int:
    argv = sys.argv[1:] if argv is None else list(argv)
    parser = build_parser()
    try:
        _apply_config(parser, argv)
    except (OSError, ValueError) as exc:
        _err("cli", f"config: {exc}")
        return EXIT_USAGE
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(name)s: %(message)s", stream=sys.stderr)
    try:
        return args.func(args)
    except UsageError as exc:
        _err("cli", str(exc))
        return EXIT_USAGE
    except (TailboundError, ValueError, KeyError, OSError) as exc:
        _err(args.command, str(exc))
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
