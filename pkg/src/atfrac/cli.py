"""Command-line entry point: ``atfrac run|verify|rate-study|check-inequality``."""
from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path
from typing import Optional, Sequence

from pydantic import ValidationError

from .evolution import check_energy_inequality
from .io import FIELDS_NAME, SCENARIO_NAME, TRACE_NAME, RunDirectoryBusy, load_fields, read_trace, run_to_directory
from .mesh import MeshError
from .scenarios import BUILTINS, Scenario, builtin
from .solvers import SolverError
from .verify import SUITES, rate_study, run_suites

log = logging.getLogger("atfrac")


def thread_cap() -> int:
    """Value of ``FRACTURE_FIELD_THREADS`` (assembly is sequential, so only 1 is used)."""
    raw = os.environ.get("FRACTURE_FIELD_THREADS", "1")
    try:
        n = int(raw)
    except ValueError:
        raise SystemExit(f"FRACTURE_FIELD_THREADS must be an integer, got {raw!r}")
    return max(n, 1)


def _parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="atfrac", description=__doc__)
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="cmd", required=True)

    run = sub.add_parser("run", help="run a quasi-static evolution")
    run.add_argument("scenario", nargs="?", help="scenario JSON file")
    run.add_argument("--builtin", choices=BUILTINS)
    run.add_argument("--h", type=int, help="mesh subdivisions per side")
    run.add_argument("--tau", type=float, help="time step")
    run.add_argument("--t-end", type=float, help="final time")
    run.add_argument("--out", default="run_out", help="output directory")
    run.add_argument("--snapshots", type=int, metavar="K",
                     help="write a VTK snapshot every K steps (0 disables)")

    ver = sub.add_parser("verify", help="run oracle and invariant suites")
    ver.add_argument("--suite", choices=[*SUITES, "all"], default="all")
    ver.add_argument("--seed", type=int, default=0)

    rate = sub.add_parser("rate-study", help="interpolation error convergence rate")
    rate.add_argument("--hs", type=int, nargs="+", default=[8, 16, 32, 64])

    chk = sub.add_parser("check-inequality", help="recompute energy-inequality slacks of a run")
    chk.add_argument("run_dir")
    chk.add_argument("--rel-tol", type=float, default=1e-6)
    return ap


def _load_scenario(args) -> Scenario:
    if (args.scenario is None) == (args.builtin is None):
        raise ValueError("give exactly one of a scenario file or --builtin")
    sc = builtin(args.builtin) if args.builtin else Scenario.load(args.scenario)
    update = {}
    if args.h is not None:
        update["mesh_h"] = args.h
    if args.tau is not None:
        update["tau"] = args.tau
    if args.t_end is not None:
        update["t_end"] = args.t_end
    if update:
        sc = Scenario.model_validate({**sc.model_dump(), **update})
    return sc


def _cmd_run(args) -> int:
    sc = _load_scenario(args)
    trace = run_to_directory(sc, Path(args.out), snapshot_every=args.snapshots)
    last = trace.records[-1] if trace.records else None
    print(f"{sc.name}: {len(trace.records)} steps, break_time={trace.break_time}, "
          f"final crack_length={last.crack_length if last else 0.0:.6g} -> {args.out}")
    if trace.failed:
        print(f"run aborted: {trace.error}", file=sys.stderr)
        return 1
    return 0


def _cmd_verify(args) -> int:
    reports = run_suites(args.suite, seed=args.seed)
    failed = [r for r in reports if not r.passed]
    print(f"{len(reports) - len(failed)}/{len(reports)} checks passed")
    return 1 if failed else 0


def _cmd_rate(args) -> int:
    reports = rate_study(args.hs)
    for r in reports:
        print(r.line())
    return 0 if all(r.passed for r in reports) else 1


def _cmd_check(args) -> int:
    run_dir = Path(args.run_dir)
    sc = Scenario.load(run_dir / SCENARIO_NAME)
    fields = load_fields(run_dir / FIELDS_NAME)
    records = read_trace(run_dir / TRACE_NAME)
    slacks = check_energy_inequality(sc, sc.build_mesh(), fields)
    peak = max((abs(r.total) for r in records), default=0.0)
    worst = min(slacks, default=0.0)
    for i, s in enumerate(slacks, start=1):
        log.info("step %d slack %.6e", i, s)
    ok = worst >= -args.rel_tol * peak
    print(f"{len(slacks)} steps, min slack {worst:.6e}, J_peak {peak:.6e}: "
          f"{'OK' if ok else 'VIOLATED'}")
    return 0 if ok else 1


def cli_main(argv: Optional[Sequence[str]] = None) -> int:
    args = _parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    thread_cap()
    handlers = {"run": _cmd_run, "verify": _cmd_verify, "rate-study": _cmd_rate,
                "check-inequality": _cmd_check}
    try:
        return handlers[args.cmd](args)
    except (ValidationError, ValueError, MeshError, SolverError, RunDirectoryBusy,
            OSError, json.JSONDecodeError) as exc:
        print(f"atfrac {args.cmd}: error: {exc}", file=sys.stderr)
        return 2


def main() -> None:
    sys.exit(cli_main())


if __name__ == "__main__":
    main()
