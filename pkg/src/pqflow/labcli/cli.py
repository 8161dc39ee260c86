"""``pqflow`` command line: run / eigen / check / plot."""

from __future__ import annotations

import argparse
import io
import logging
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

from ..geomflow import FlowStepError
from ..monitor import einstein_trace, run_monitor, standard_verdicts
from ..pqeigen import EigenSolverError, first_eigenpair
from . import checks, svg
from .config import ConfigError, load_scenario
from .csvio import read_csv, write_fields, write_trace

EXIT_OK, EXIT_FAIL, EXIT_PARSE, EXIT_FLOW, EXIT_EIGEN = 0, 1, 2, 3, 4

log = logging.getLogger("pqflow")


def _run_one(path: str) -> tuple[int, str]:
    """Run one scenario; returns (exit code, report text)."""
    out = io.StringIO()
    try:
        sc = load_scenario(path)
    except ConfigError as exc:
        return EXIT_PARSE, f"error: {exc}\n"
    try:
        if sc.manifold == "einstein_analytic":
            trace = einstein_trace(sc.einstein, sc.lambda0, sc.flow.t_end, sc.flow.record_every,
                                   sc.eigen.k, sc.volume0)
        else:
            trace = run_monitor(sc.state, sc.flow, sc.eigen, sc.tolerances)
    except FlowStepError as exc:
        return EXIT_FLOW, f"{path}: flow failure: {exc}\n"
    except EigenSolverError as exc:
        return EXIT_EIGEN, f"{path}: eigensolver failure: {exc}\n"
    write_trace(trace, sc.csv_path)
    verdicts = standard_verdicts(trace, sc.tolerances)
    print(f"# {path}: {len(trace.records)} records -> {sc.csv_path}", file=out)
    for v in verdicts:
        print(v.line(), file=out)
    report = out.getvalue()
    if sc.summary_path is not None:
        sc.summary_path.write_text(report)
    failed = any(v.status == "FAIL" for v in verdicts)
    return (EXIT_FAIL if failed else EXIT_OK), report


def cmd_run(args) -> int:
    threads = int(os.environ.get("PQFLOW_THREADS", "1") or 1)
    workers = max(1, min(threads, len(args.files)))
    if workers == 1:
        results = [_run_one(f) for f in args.files]
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_run_one, args.files))
    code = EXIT_OK
    for rc, text in results:
        sys.stdout.write(text)
        code = max(code, rc)
    return code


def cmd_eigen(args) -> int:
    try:
        sc = load_scenario(args.file)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_PARSE
    if sc.state is None:
        print(f"error: {args.file}: eigen needs a gridded manifold, not {sc.manifold}", file=sys.stderr)
        return EXIT_PARSE
    try:
        pair = first_eigenpair(sc.state.g, sc.eigen)
    except EigenSolverError as exc:
        print(f"{args.file}: eigensolver failure: {exc}", file=sys.stderr)
        return EXIT_EIGEN
    c = pair.constraint_residuals
    print(f"lambda           = {pair.lam:.12g}")
    print(f"kkt residual     = {pair.kkt_residual:.3e} (relative {pair.kkt_relative:.3e})")
    print(f"constraints      = B-1: {c[0]:.2e}, mean u: {c[1]:.2e}, mean v: {c[2]:.2e}")
    print(f"iterations       = {pair.iterations} (restarts {pair.restarts})")
    write_fields(sc.fields_path, sc.state.grid, pair.u, pair.v)
    print(f"fields           -> {sc.fields_path}")
    return EXIT_OK if pair.converged else EXIT_EIGEN


def cmd_check(args) -> int:
    verdicts = checks.run_suite()
    for v in verdicts:
        print(v.line())
    return EXIT_OK if all(v.passed for v in verdicts) else EXIT_FAIL


def cmd_plot(args) -> int:
    try:
        header, data = read_csv(args.csv)
    except (OSError, ValueError) as exc:
        print(f"error: {args.csv}: {exc}", file=sys.stderr)
        return EXIT_PARSE
    if data.shape[0] == 0:
        print(f"error: {args.csv}: empty trace", file=sys.stderr)
        return EXIT_PARSE
    cols = [c.strip() for c in args.cols.split(",") if c.strip()]
    missing = [c for c in cols + [args.x] if c not in header]
    if missing or not cols:
        print(f"error: unknown column(s) {', '.join(missing) or '(none given)'}; have {', '.join(header)}",
              file=sys.stderr)
        return EXIT_PARSE
    series = {c: data[:, header.index(c)] for c in cols}
    text = svg.render(data[:, header.index(args.x)], series, xlabel=args.x, title=args.title or "")
    Path(args.output).write_text(text)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="pqflow", description="First (p,q)-eigenvalue along Ricci-harmonic flow.")
    ap.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="evolve one or more scenarios and check the monotonicity results")
    p.add_argument("files", nargs="+", help="scenario files")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("eigen", help="solve the eigenproblem on a scenario's initial metric")
    p.add_argument("file")
    p.set_defaults(func=cmd_eigen)

    p = sub.add_parser("check", help="run the built-in invariant suite")
    p.set_defaults(func=cmd_check)

    p = sub.add_parser("plot", help="plot trace columns to SVG")
    p.add_argument("csv")
    p.add_argument("--cols", default="lambda,Q", help="comma-separated column names")
    p.add_argument("--x", default="t", help="abscissa column")
    p.add_argument("--title", default="")
    p.add_argument("-o", "--output", default="trace.svg")
    p.set_defaults(func=cmd_plot)
    return ap


def main(argv=None) -> int:
    ap = build_parser()
    try:
        args = ap.parse_args(argv)
    except SystemExit as exc:
        return EXIT_PARSE if exc.code else EXIT_OK
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
