"""Command-line interface: ``steerdca {solve,bench,check,export,replay}``.

Exit codes: 0 critical point found, 2 infeasible stall, 3 iteration or
inner-loop limit, 64 usage error, 65 unreadable or invalid input file.
Replay exits 1 when the reproduced trace differs from the recorded one.
"""
from __future__ import annotations

import argparse
import csv
import hashlib
import json
import logging
import subprocess
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import fields
from pathlib import Path

import numpy as np

from . import __version__
from .bundle import SubsolveConfig
from .io import ProblemFormatError, load_point, load_problem, save_problem
from .penalty import infeasibility
from .problems import (
    ProductionParams,
    TrainParams,
    build_production_problem,
    build_train_problem,
    production_starts,
    tachogram,
    toy_eq,
    toy_ineq,
)
from .steering import (
    TRACE_COLUMNS,
    SteeringConfig,
    check_generalized_critical,
    check_linearized_slater,
    check_penalty_term_critical,
    run,
    write_trace_csv,
)

EXIT_OK, EXIT_STALL, EXIT_LIMIT, EXIT_USAGE, EXIT_DATA, EXIT_MISMATCH = 0, 2, 3, 64, 65, 1
EXIT_CODES = {"CriticalPoint": EXIT_OK, "InfeasibleStall": EXIT_STALL,
              "IterLimit": EXIT_LIMIT, "InnerLoopCapHit": EXIT_LIMIT}

log = logging.getLogger("steerdca")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def version_string() -> str:
    """``git describe`` of the source tree when available, else the package version."""
    try:
        out = subprocess.run(["git", "describe", "--always", "--dirty", "--tags"],
                             cwd=Path(__file__).parent, capture_output=True, text=True, timeout=5)
        if out.returncode == 0 and out.stdout.strip():
            return f"{__version__}+g{out.stdout.strip()}"
    except (OSError, subprocess.SubprocessError):
        pass
    return __version__


# ------------------------------------------------------------------ config

_SUB_FLAGS = {"tol_sub": float, "max_oracle_calls": int}


def _add_config_flags(ap: argparse.ArgumentParser):
    g = ap.add_argument_group("solver configuration (defaults follow the reference settings)")
    defaults = SteeringConfig()
    for f in fields(SteeringConfig):
        if f.name == "subsolve":
            continue
        val = getattr(defaults, f.name)
        flag = "--" + f.name.replace("_", "-")
        if isinstance(val, bool):
            g.add_argument(flag, action="store_true", default=val)
        elif f.name == "schedule":
            g.add_argument(flag, choices=("geometric", "additive"), default=val)
        else:
            g.add_argument(flag, type=type(val), default=val, metavar=type(val).__name__.upper())
    sub = SubsolveConfig()
    for name, typ in _SUB_FLAGS.items():
        g.add_argument("--" + name.replace("_", "-"), type=typ, default=getattr(sub, name))


def _config_from(args) -> SteeringConfig:
    sub = SubsolveConfig(**{k: getattr(args, k) for k in _SUB_FLAGS})
    kw = {f.name: getattr(args, f.name) for f in fields(SteeringConfig) if f.name != "subsolve"}
    try:
        return SteeringConfig(subsolve=sub, **kw)
    except ValueError as exc:
        raise UsageError(str(exc)) from None


# ----------------------------------------------------------------- helpers

def _trace_rows(report) -> list:
    """Trace rows without wall time, for replay comparison."""
    return [rec.csv_row()[:-1] for rec in report.trace]


def _report_dict(report, extra=None) -> dict:
    out = {
        "status": report.status,
        "message": report.message,
        "iterations": report.iterations,
        "penalty_increases": report.total_increases,
        "c": report.c,
        "phi": report.phi,
        "f0": report.f0,
        "criticality_residual": report.critical_residual,
        "x": report.x.tolist(),
        "diagnostics": report.diagnostics,
    }
    out.update(extra or {})
    return out


def _print_report(report, out=None):
    out = out or sys.stdout
    print(f"status: {report.status}", file=out)
    print(f"iterations: {report.iterations}", file=out)
    print(f"penalty increases: {report.total_increases}", file=out)
    print(f"final c: {report.c:g}", file=out)
    print(f"final phi: {report.phi:.6g}", file=out)
    print(f"final f0: {report.f0:.10g}", file=out)
    print(f"criticality residual: {report.critical_residual:.3g}", file=out)
    if report.x.size <= 10:
        print("x: " + " ".join(f"{v:.10g}" for v in report.x), file=out)


def _sha256(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def _write_json(path, obj):
    Path(path).write_text(json.dumps(obj, indent=2, allow_nan=True))


# -------------------------------------------------------------------- solve

def cmd_solve(args) -> int:
    cfg = _config_from(args)
    p = load_problem(args.problem)
    x0 = load_point(args.x0, p.dim) if args.x0 else np.zeros(p.dim)
    report = run(p, x0, cfg)
    _print_report(report)
    if args.trace:
        write_trace_csv(report, args.trace)
    if args.report:
        _write_json(args.report, _report_dict(report))
    manifest = {
        "command": "solve",
        "problem": {"file": str(Path(args.problem).resolve()), "sha256": _sha256(args.problem)},
        "x0": None if args.x0 is None else str(Path(args.x0).resolve()),
        "config": cfg.to_dict(),
        "seeds": [],
        "outputs": {"trace": args.trace, "report": args.report},
        "version": version_string(),
        "trace": _trace_rows(report),
    }
    if args.manifest or args.trace:
        _write_json(args.manifest or str(Path(args.trace).with_suffix(".manifest.json")), manifest)
    return EXIT_CODES[report.status]


# -------------------------------------------------------------------- bench

def _bench_problem(name: str, k: int, seed: int):
    if name == "production":
        params = ProductionParams(k=k, seed=seed)
        return params, build_production_problem(params)
    params = TrainParams(k=k)
    return params, build_train_problem(params)


def _bench_starts(name, params, p, starts, seed):
    if name == "production":
        return production_starts(params, starts, seed)
    return [np.zeros(p.dim) for _ in range(starts)]


def _bench_worker(job):
    name, k, seed, index, cfg_dict = job
    cfg = SteeringConfig.from_dict(cfg_dict)
    params, p = _bench_problem(name, k, seed)
    x0 = _bench_starts(name, params, p, index + 1, seed)[index]
    t0 = time.perf_counter()
    report = run(p, x0, cfg)
    return index, report, time.perf_counter() - t0


def _run_bench(name, k, starts, seed, cfg, workers):
    jobs = [(name, k, seed, i, cfg.to_dict()) for i in range(starts)]
    if workers > 1 and starts > 1:
        with ProcessPoolExecutor(max_workers=workers) as ex:
            results = list(ex.map(_bench_worker, jobs))
    else:
        results = [_bench_worker(j) for j in jobs]
    return sorted(results, key=lambda r: r[0])


SUMMARY_COLUMNS = ("start", "status", "iterations", "penalty_increases", "final_c",
                   "final_phi", "final_f0", "criticality_residual", "wall_time_s")


def cmd_bench(args) -> int:
    if args.k < (2 if args.name == "production" else 3):
        raise UsageError(f"k must be at least {2 if args.name == 'production' else 3} for {args.name}")
    if args.starts < 1:
        raise UsageError("starts must be at least 1")
    cfg = _config_from(args)
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    results = _run_bench(args.name, args.k, args.starts, args.seed, cfg, args.workers)

    rows = []
    traces = []
    for index, report, wall in results:
        trace_path = out_dir / f"{args.name}_k{args.k}_start{index}_trace.csv"
        write_trace_csv(report, trace_path)
        traces.append(_trace_rows(report))
        rows.append([index, report.status, report.iterations, report.total_increases, report.c,
                     report.phi, report.f0, report.critical_residual, round(wall, 3)])
    summary = out_dir / f"{args.name}_k{args.k}_summary.csv"
    with open(summary, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(SUMMARY_COLUMNS)
        w.writerows(rows)
    print("  ".join(f"{c:>12s}" for c in SUMMARY_COLUMNS))
    for r in rows:
        print("  ".join(f"{v:>12.6g}" if isinstance(v, float) else f"{v!s:>12s}" for v in r))

    outputs = {"summary": str(summary)}
    if args.name == "train":
        params, _ = _bench_problem("train", args.k, args.seed)
        tacho = out_dir / f"train_k{args.k}_tachogram.csv"
        np.savetxt(tacho, tachogram(params, results[0][1].x), delimiter=",",
                   header="position,velocity", comments="", fmt="%.12g")
        outputs["tachogram"] = str(tacho)
        print(f"tachogram: {tacho}")
    manifest = {
        "command": "bench",
        "problem": {"benchmark": args.name, "k": args.k},
        "config": cfg.to_dict(),
        "seeds": [args.seed],
        "starts": args.starts,
        "outputs": outputs,
        "version": version_string(),
        "traces": traces,
    }
    _write_json(out_dir / f"{args.name}_k{args.k}_manifest.json", manifest)
    return max(EXIT_CODES[r[1].status] for r in results)


# -------------------------------------------------------------------- check

def cmd_check(args) -> int:
    if not args.c > 0:
        raise UsageError("c must be positive")
    cfg = SteeringConfig(subsolve=SubsolveConfig(tol_sub=args.tol_sub))
    p = load_problem(args.problem)
    x = load_point(args.point, p.dim)
    yn = lambda b: "yes" if b else "no"  # noqa: E731
    phi = infeasibility(p, x)
    ok_g, r_g = check_generalized_critical(p, args.c, x, tol=args.tol, cfg=cfg)
    ok_p, r_p = check_penalty_term_critical(p, x, tol=args.tol, cfg=cfg)
    print(f"phi: {phi:.6g}")
    print(f"generalized critical: {yn(ok_g)} (residual {r_g:.3g}, c = {args.c:g})")
    print(f"penalty-term critical: {yn(ok_p)}, infeasible: {yn(phi > args.tol)} (\u03c6={phi:.3g}), residual {r_p:.3g}")
    if ok_g and phi <= args.tol:
        print("critical: yes")
    else:
        print("critical: no")
    if p.n_eq == 0:
        margin = check_linearized_slater(p, x, cfg=cfg)
        print(f"linearized Slater margin: {margin:.6g} ({'holds' if margin < 0 else 'fails'})")
    return EXIT_OK


# ------------------------------------------------------------------- export

def cmd_export(args) -> int:
    if args.name == "toy_ineq":
        p = toy_ineq()
    elif args.name == "toy_eq":
        p = toy_eq()
    else:
        if args.k < (2 if args.name == "production" else 3):
            raise UsageError(f"k is too small for {args.name}")
        _, p = _bench_problem(args.name, args.k, args.seed)
    save_problem(p, args.output)
    print(f"wrote {args.output} (dimension {p.dim})")
    return EXIT_OK


# ------------------------------------------------------------------- replay

def cmd_replay(args) -> int:
    try:
        manifest = json.loads(Path(args.manifest).read_text())
        cfg = SteeringConfig.from_dict(manifest["config"])
        command = manifest["command"]
    except (OSError, json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
        raise ProblemFormatError(str(args.manifest), f"unusable manifest: {exc}") from None
    if command == "solve":
        src = manifest["problem"]["file"]
        if _sha256(src) != manifest["problem"]["sha256"]:
            print("problem file changed since the recorded run", file=sys.stderr)
            return EXIT_MISMATCH
        p = load_problem(src)
        x0 = load_point(manifest["x0"], p.dim) if manifest.get("x0") else np.zeros(p.dim)
        recorded = [manifest["trace"]]
        replayed = [_trace_rows(run(p, x0, cfg))]
    elif command == "bench":
        prob = manifest["problem"]
        res = _run_bench(prob["benchmark"], prob["k"], manifest["starts"], manifest["seeds"][0], cfg, 1)
        recorded = manifest["traces"]
        replayed = [_trace_rows(r) for _, r, _ in res]
    else:
        raise ProblemFormatError("command", f"cannot replay {command!r}")
    same = json.loads(json.dumps(replayed)) == recorded
    print("replay: identical" if same else "replay: MISMATCH")
    return EXIT_OK if same else EXIT_MISMATCH


# ------------------------------------------------------------------- parser

def build_parser() -> argparse.ArgumentParser:
    ap = _Parser(prog="steerdca", description="Steering exact penalty DCA for constrained DC problems.")
    ap.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True, parser_class=_Parser)

    s = sub.add_parser("solve", help="solve a problem file")
    s.add_argument("problem")
    s.add_argument("--x0", help="point file with the starting point (default: origin)")
    s.add_argument("--trace", help="write the iteration trace CSV here")
    s.add_argument("--report", help="write a JSON report here")
    s.add_argument("--manifest", help="write the run manifest here (default: next to the trace)")
    _add_config_flags(s)

    b = sub.add_parser("bench", help="run a benchmark with multiple starts")
    b.add_argument("name", choices=("production", "train"))
    b.add_argument("--k", type=int, default=100)
    b.add_argument("--starts", type=int, default=None, help="default: 10 (production), 1 (train)")
    b.add_argument("--seed", type=int, default=42)
    b.add_argument("--workers", type=int, default=1)
    b.add_argument("--out-dir", default="bench_out")
    _add_config_flags(b)

    c = sub.add_parser("check", help="criticality diagnostics at a point")
    c.add_argument("problem")
    c.add_argument("point")
    c.add_argument("--c", type=float, default=10.0)
    c.add_argument("--tol", type=float, default=1e-4)
    c.add_argument("--tol-sub", type=float, default=1e-8)

    e = sub.add_parser("export", help="write a built-in problem to a problem file")
    e.add_argument("name", choices=("toy_ineq", "toy_eq", "production", "train"))
    e.add_argument("-o", "--output", required=True)
    e.add_argument("--k", type=int, default=100)
    e.add_argument("--seed", type=int, default=42)

    r = sub.add_parser("replay", help="re-run a manifest and compare traces")
    r.add_argument("manifest")
    return ap


COMMANDS = {"solve": cmd_solve, "bench": cmd_bench, "check": cmd_check,
            "export": cmd_export, "replay": cmd_replay}


def main(argv=None) -> int:
    ap = build_parser()
    args = ap.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if args.command == "bench" and args.starts is None:
        args.starts = 10 if args.name == "production" else 1
    try:
        return COMMANDS[args.command](args)
    except UsageError as exc:
        ap.print_usage(sys.stderr)
        print(f"steerdca: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except ProblemFormatError as exc:
        print(f"steerdca: invalid input: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
