"""Command-line entry point.

Exit codes: 0 success, 1 usage/config/IO error, 2 verification violation,
3 integrator failure.
"""

from __future__ import annotations

import argparse
import csv
import datetime as _dt
import hashlib
import io
import json
import math
import os
import sys
import warnings
from pathlib import Path

from . import __version__
from .bounds import PoorFitWarning
from .campaigns import (
    OPEN_MODELS,
    VARIANTS,
    default_jobs,
    probe,
    qfi_check,
    replay,
    verify_closed,
    verify_open,
)
from .dynamics import IntegratorFailure
from .scenarios import ConfigError, load_scenario
from .simulate import COLUMNS, run_record, run_scenario

EXIT_OK, EXIT_USAGE, EXIT_VIOLATION, EXIT_INTEGRATOR = 0, 1, 2, 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _int_list(text: str) -> list:
    try:
        vals = [int(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}")
    if not vals or any(v < 1 for v in vals):
        raise argparse.ArgumentTypeError("dimensions must be integers >= 1")
    return vals


def _float_list(text: str) -> list:
    try:
        return [float(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}")


def _common() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(add_help=False)
    p.add_argument("--seed", type=int, default=0, help="base seed (instance i uses seed + i)")
    p.add_argument("--jobs", type=int, default=None, help="worker processes (default: available CPUs)")
    p.add_argument("--rank-tol", type=float, default=1e-10, help="cutoff for p_a + p_b > 0 and support decisions")
    p.add_argument("--tol", type=float, default=1e-9, help="scale-aware violation tolerance")
    p.add_argument("--format", choices=("csv", "json"), default=None)
    return p


def build_parser() -> argparse.ArgumentParser:
    common = _common()
    parser = _Parser(prog="qbattery", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"qbattery {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("simulate", parents=[common], help="run a scenario file")
    p.add_argument("scenario", type=Path)
    p.add_argument("-o", "--output", type=Path, required=True)

    p = sub.add_parser("verify", parents=[common], help="fuzz the closed or open bound")
    p.add_argument("--kind", choices=("closed", "open"), required=False)
    p.add_argument("--instances", type=int, default=100)
    p.add_argument("--dims", type=_int_list, default=[2, 1, 1, 2], help="closed: S,B,A,W dims")
    p.add_argument("--rank", type=int, default=None, help="rank of the random initial states")
    p.add_argument("--models", default=",".join(OPEN_MODELS[:-1]), help="open: comma-separated model names")
    p.add_argument("--dim", type=int, default=3, help="open: dimension of 'random' models")
    p.add_argument("--points", type=int, default=100, help="open: samples per trajectory")
    p.add_argument("--t-end", type=float, default=5.0)
    p.add_argument("--variant", choices=VARIANTS, default="corrected")
    p.add_argument("--replay", type=Path, default=None, help="re-evaluate violations stored in a report")
    p.add_argument("-o", "--report", type=Path, default=None)

    p = sub.add_parser("probe-singularity", parents=[common], help="fit P(eps) = a + b log eps")
    p.add_argument("--model", required=True)
    p.add_argument("--eps-grid", type=_float_list, default=[1e-2, 1e-3, 1e-4, 1e-5, 1e-6])
    p.add_argument("--state", type=int, default=None, help="basis index of the pure state")
    p.add_argument("--beta", type=float, default=1.0)
    p.add_argument("-o", "--output", type=Path, default=None)

    p = sub.add_parser("qfi-check", parents=[common], help="cross-check QFI formulas")
    p.add_argument("--instances", type=int, default=1000)
    p.add_argument("--dims", type=_int_list, default=[4])
    p.add_argument("--rtol", type=float, default=1e-8)
    p.add_argument("-o", "--report", type=Path, default=None)
    return parser


def _json_text(report: dict) -> str:
    body = json.dumps(report, sort_keys=True, indent=2, allow_nan=False)
    digest = hashlib.sha256(body.encode()).hexdigest()
    stamped = dict(report, content_sha256=digest, timestamp=_dt.datetime.now(_dt.timezone.utc).isoformat())
    return json.dumps(stamped, sort_keys=True, indent=2, allow_nan=False) + "\n"


def _emit(text: str, path):
    if path is None:
        sys.stdout.write(text)
        return
    path = Path(path)
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_text(text)
    os.replace(tmp, path)


def _fmt(x: float) -> str:
    return "infinite" if x == math.inf else repr(float(x))


def _csv_text(record: dict) -> str:
    buf = io.StringIO()
    buf.write(f"# scenario_sha256={record['scenario_sha256']}\n")
    buf.write(f"# tool_version={record['tool_version']}\n")
    buf.write(f"# rng_algorithm={record['rng_algorithm']}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(COLUMNS)
    for row in record["rows"]:
        w.writerow([_fmt(row[c]) for c in COLUMNS])
    return buf.getvalue()


def _jsonable_record(record: dict) -> dict:
    rec = dict(record)
    rec["rows"] = [{k: ("infinite" if v == math.inf else v) for k, v in r.items()} for r in record["rows"]]
    return rec


def _check_common(args):
    if args.tol < 0 or not math.isfinite(args.tol):
        raise UsageError(f"--tol must be a finite number >= 0, got {args.tol}")
    if args.rank_tol < 0:
        raise UsageError("--rank-tol must be >= 0")
    if not 0 <= args.seed < 2**64:
        raise UsageError("--seed must be an unsigned 64-bit integer")
    if args.jobs is not None and args.jobs < 1:
        raise UsageError("--jobs must be >= 1")
    return args.jobs or default_jobs()


def cmd_simulate(args) -> int:
    try:
        scenario = load_scenario(args.scenario.read_text())
    except OSError as exc:
        raise UsageError(f"cannot read scenario: {exc}")
    except ConfigError as exc:
        raise UsageError(f"invalid scenario {args.scenario}: {exc}")
    try:
        traj = run_scenario(scenario)
    except (ConfigError, ValueError) as exc:
        if isinstance(exc, IntegratorFailure):
            raise
        raise UsageError(f"scenario {args.scenario} cannot be run: {exc}")
    record = run_record(scenario, traj)
    fmt = args.format or ("json" if args.output.suffix == ".json" else "csv")
    text = _csv_text(record) if fmt == "csv" else json.dumps(_jsonable_record(record), indent=2) + "\n"
    _emit(text, args.output)
    return EXIT_OK


def cmd_verify(args, jobs: int) -> int:
    if args.replay is not None:
        try:
            stored = json.loads(args.replay.read_text())
        except (OSError, ValueError) as exc:
            raise UsageError(f"cannot read report: {exc}")
        reps = replay(stored)
        out = {"command": "verify-replay", "replayed": len(reps), "still_violated": sum(r.violated for r in reps),
               "reports": [r.to_dict() for r in reps]}
        _emit(_json_text(out), args.report)
        return EXIT_VIOLATION if out["still_violated"] else EXIT_OK
    if args.kind is None:
        raise UsageError("verify needs --kind closed|open (or --replay)")
    if args.instances < 1:
        raise UsageError("--instances must be >= 1")
    try:
        if args.kind == "closed":
            report = verify_closed(args.instances, args.dims, args.seed, args.tol, args.rank_tol, args.rank, jobs)
        else:
            models = [m.strip() for m in args.models.split(",") if m.strip()]
            report = verify_open(
                models, args.instances, args.seed, args.points, args.t_end, args.tol, args.rank_tol,
                args.rank, args.dim, args.variant, jobs,
            )
    except ValueError as exc:
        raise UsageError(str(exc))
    _emit(_json_text(report), args.report)
    return EXIT_VIOLATION if report["violations"] else EXIT_OK


def cmd_probe_singularity(args) -> int:
    if args.beta <= 0:
        raise UsageError("--beta must be > 0")
    try:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", PoorFitWarning)
            out = probe(args.model, args.eps_grid, args.state, args.beta)
    except ValueError as exc:
        raise UsageError(str(exc))
    if args.format == "csv":
        buf = io.StringIO()
        fit = out["fit"]
        buf.write(f"# model={args.model} a={fit['a']!r} b={fit['b']!r} residual={fit['residual']!r} "
                  f"poor_fit={out['poor_fit']}\n")
        buf.write("eps,P\n")
        for row in out["table"]:
            buf.write(f"{row['eps']!r},{row['P']!r}\n")
        _emit(buf.getvalue(), args.output)
    else:
        _emit(_json_text(out), args.output)
    return EXIT_OK


def cmd_qfi_check(args, jobs: int) -> int:
    if args.instances < 1:
        raise UsageError("--instances must be >= 1")
    report = qfi_check(args.instances, args.dims, args.seed, args.rtol, args.rank_tol, jobs)
    _emit(_json_text(report), args.report)
    ok = not report["violations"] and report["rank_deficient"]["all_finite"]
    return EXIT_OK if ok else EXIT_VIOLATION


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        jobs = _check_common(args)
        if args.command == "simulate":
            return cmd_simulate(args)
        if args.command == "verify":
            return cmd_verify(args, jobs)
        if args.command == "probe-singularity":
            return cmd_probe_singularity(args)
        return cmd_qfi_check(args, jobs)
    except UsageError as exc:
        print(f"qbattery: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except OSError as exc:
        print(f"qbattery: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except IntegratorFailure as exc:
        print(f"qbattery: integrator failure: {exc}", file=sys.stderr)
        return EXIT_INTEGRATOR


if __name__ == "__main__":
    sys.exit(main())
