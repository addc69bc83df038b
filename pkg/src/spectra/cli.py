"""Command-line entry point.

Exit codes: 0 success, 1 internal error, 2 usage or configuration error.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import io
import itertools
import logging
import os
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import replace
from pathlib import Path
from typing import Optional, Sequence

from .export import MODES, ExportError, ModelInterfaceMap, export_set, render_report
from .ingest import SIGN, LoadStats, LogFormatError, LogSchema, load_logs
from .metrics import evaluate, format_table, volume
from .model import ConfigError, EvalReport, MinerConfig, validate_config
from .references import (
    CONTROLLERS,
    LOG_COLUMNS,
    BandwidthTrace,
    PlantedReference,
    PlantedRule,
    sample_planted,
    simulate_abr,
    write_log,
)
from .regions import important, interesting, tally_regions
from .serialize import dump_report, dump_specification_set, load_specification_set, read_json, write_json
from .synthesis import mine

log = logging.getLogger("spectra")

EXIT_OK, EXIT_INTERNAL, EXIT_USAGE = 0, 1, 2
ABLATE_AXES = ("history", "tau_rep", "parts", "tau_max")


class UsageError(Exception):
    pass


def _sha256(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def _out_dir(path) -> Path:
    out = Path(path)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _log_paths(items: Sequence[str]) -> list[Path]:
    """Expand directories to the delimited/jsonl files they contain."""
    paths: list[Path] = []
    for item in items:
        p = Path(item)
        if p.is_dir():
            paths.extend(sorted(q for q in p.iterdir() if q.suffix in (".csv", ".tsv", ".txt", ".jsonl", ".log")))
        elif p.exists():
            paths.append(p)
        else:
            raise UsageError(f"{p}: no such log file or directory")
    if not paths:
        raise UsageError("no log files given")
    return sorted(paths)


def effective_config(args, schema: Optional[LogSchema] = None) -> MinerConfig:
    """Defaults < config file < command-line flags."""
    data = read_json(args.config) if getattr(args, "config", None) else {}
    if not isinstance(data, dict):
        raise UsageError(f"{args.config}: expected a JSON object")
    if schema is not None and "history" not in data:
        data["history"] = schema.history
    for key in ("tau_cov", "tau_rep", "tau_max", "parts", "history"):
        value = getattr(args, key, None)
        if value is not None:
            data[key] = value
    return MinerConfig.from_dict(data)


def schema_for(schema: LogSchema, config: MinerConfig) -> LogSchema:
    schema = schema.with_history(config.history)
    if config.discretizer == "sign" and schema.output != SIGN:
        schema = replace(schema, output=SIGN, sign_deadband=config.sign_deadband)
    return schema


# --- simulate ----------------------------------------------------------------


def _simulate_planted(args, out: Path) -> None:
    spec = read_json(args.planted)
    lower, upper = spec["lower"], spec["upper"]
    num_labels = len(spec["labels"]) if "labels" in spec else int(spec["num_labels"])
    labels = spec.get("labels", [str(i) for i in range(num_labels)])
    features = spec.get("features", [f"x{i}" for i in range(len(lower))])
    refs = {}
    for i, (name, body) in enumerate(sorted(spec["references"].items())):
        rules = [PlantedRule.from_dict(r) for r in body["rules"]]
        refs[name] = PlantedReference(
            rules, num_labels, body.get("noise_rate", 0.0), args.seed * 1000 + i + 1, body.get("default_allowed")
        )
    samples = sample_planted(refs, lower, upper, args.n, args.seed)
    for name, (x, y) in samples.items():
        path = out / f"{name}.csv"
        rows = [(*(repr(float(v)) for v in row), labels[int(lab)]) for row, lab in zip(x, y)]
        write_log(rows, path, (*features, "label"))
        print(f"{path}: {len(rows)} rows")


def _simulate_abr(args, out: Path) -> None:
    trace_dir = Path(args.traces) if args.traces else None
    if trace_dir is None or not trace_dir.is_dir():
        raise UsageError(f"trace directory {args.traces!r} does not exist")
    trace_files = sorted(p for p in trace_dir.iterdir() if p.is_file() and not p.name.startswith("."))
    if not trace_files:
        raise UsageError(f"{trace_dir}: no trace files")
    names = [c.strip() for c in args.abr.split(",") if c.strip()]
    for name in names:
        if name not in CONTROLLERS:
            raise UsageError(f"unknown controller {name!r}; choose from {sorted(CONTROLLERS)}")
    for path in trace_files:
        trace = BandwidthTrace.load(path)
        for name in names:
            rows = simulate_abr(trace, CONTROLLERS[name](), args.chunks, reference=name)
            target = out / f"{name}__{trace.name}.csv"
            write_log(rows, target, LOG_COLUMNS)
            print(f"{target}: {len(rows)} rows")


def cmd_simulate(args) -> int:
    if bool(args.planted) == bool(args.abr):
        raise UsageError("simulate needs exactly one of --planted or --abr")
    out = _out_dir(args.out)
    if args.planted:
        if args.n is None or args.n < 1:
            raise UsageError("--planted needs a positive --n")
        _simulate_planted(args, out)
    else:
        _simulate_abr(args, out)
    return EXIT_OK


# --- mine --------------------------------------------------------------------


def cmd_mine(args) -> int:
    schema = LogSchema.load(args.schema)
    config = effective_config(args, schema)
    schema = schema_for(schema, config)
    paths = _log_paths(args.logs)
    stats = LoadStats()
    obs = load_logs(paths, schema, stats)
    validate_config(config, obs.alphabet)
    start = time.perf_counter()
    spec_set = mine(obs, config)
    elapsed = time.perf_counter() - start
    out = _out_dir(args.out)
    dump_specification_set(spec_set, out / "specs.json")
    (out / "report.txt").write_text(render_report(spec_set), encoding="utf-8", newline="\n")
    write_json(
        out / "manifest.json",
        {
            "command": "mine",
            "config": config.to_dict(),
            "schema": schema.to_dict(),
            "seed": args.seed,
            "inputs": [{"path": p.name, "sha256": _sha256(p)} for p in paths],
            "load": dict(stats.__dict__),
            "stats": spec_set.stats.to_dict(),
            "outputs": ["specs.json", "report.txt"],
        },
    )
    s = spec_set.stats
    cov = "undefined" if s.coverage is None else f"{s.coverage:.4f}"
    print(f"observations: {len(obs)} across {len(obs.references)} references")
    print(f"interesting regions: {s.n_interesting} (of {s.n_regions} occupied, {s.n_important} important)")
    print(f"specifications: {len(spec_set)}")
    print(f"relaxed coverage: {cov}{' (early exit)' if s.early_exit else ''}")
    print(f"volume: {volume(spec_set.specs, spec_set.grid):.6g}")
    print(f"wall time: {elapsed:.2f} s")
    if s.n_interesting == 0:
        print("warning: no interesting regions; wrote an empty specification set", file=sys.stderr)
    return EXIT_OK


# --- eval --------------------------------------------------------------------


def _eval_split(spec_set, schema, items, split, with_table) -> EvalReport:
    obs = load_logs(_log_paths(items), schema, allow_empty=True)
    table = None
    if with_table and len(obs):
        raw = tally_regions(obs, spec_set.grid)
        imp = important(raw, obs, spec_set.config.importance_fraction, spec_set.config.importance_min_count)
        table = interesting(imp, obs.alphabet)
    return evaluate(spec_set, obs, table, split)


def cmd_eval(args) -> int:
    spec_set = load_specification_set(args.specs)
    schema = schema_for(LogSchema.load(args.schema), spec_set.config)
    if schema.feature_names != spec_set.feature_names:
        raise UsageError(
            f"schema features {list(schema.feature_names)} do not match specification features {list(spec_set.feature_names)}"
        )
    reports = [_eval_split(spec_set, schema, args.logs, "train", True)]
    if args.test:
        reports.append(_eval_split(spec_set, schema, args.test, "test", False))
    text = format_table(reports)
    print(text, end="")
    for r in reports:
        for m in r.references:
            if m.support is None or m.confidence is None:
                print(f"note: {r.split}/{m.name}: undefined metric (no observations in the denominator)")
    if args.out:
        out = _out_dir(args.out)
        for r in reports:
            dump_report(r, out / f"eval_{r.split}.json")
        (out / "eval.txt").write_text(text, encoding="utf-8", newline="\n")
    return EXIT_OK


# --- export ------------------------------------------------------------------


def cmd_export(args) -> int:
    spec_set = load_specification_set(args.specs)
    mapping = ModelInterfaceMap.load(args.map)
    manifest = export_set(spec_set, mapping, args.out, args.mode, args.epsilon)
    written = [e for e in manifest["specifications"] if e["file"]]
    skipped = [e for e in manifest["specifications"] if not e["file"]]
    print(f"wrote {len(written)} property files to {args.out}")
    for e in skipped:
        print(f"skipped specification {e['ordinal']}: {e['skipped']}", file=sys.stderr)
    return EXIT_OK


# --- ablate ------------------------------------------------------------------


def _parse_grid(path) -> list[dict]:
    grid = read_json(path)
    if not isinstance(grid, dict):
        raise UsageError(f"{path}: expected a JSON object of parameter lists")
    unknown = set(grid) - set(ABLATE_AXES)
    if unknown:
        raise UsageError(f"{path}: unknown grid axes {sorted(unknown)}; allowed {list(ABLATE_AXES)}")
    axes = [a for a in ABLATE_AXES if a in grid]
    for a in axes:
        if not isinstance(grid[a], list) or not grid[a]:
            raise UsageError(f"{path}: axis {a!r} needs a non-empty list")
        if len(set(map(repr, grid[a]))) != len(grid[a]):
            raise UsageError(f"{path}: axis {a!r} has repeated values")
    return [dict(zip(axes, combo)) for combo in itertools.product(*(grid[a] for a in axes))]


def row_key(params: dict) -> str:
    return ";".join(f"{a}={params[a]!r}" for a in ABLATE_AXES if a in params)


def _ablate_row(task) -> tuple[dict, float]:
    params, base, schema_dict, train, test = task
    start = time.perf_counter()
    config = MinerConfig.from_dict({**base, **params})
    schema = schema_for(LogSchema.from_dict(schema_dict), config)
    obs = load_logs(train, schema)
    validate_config(config, obs.alphabet)
    spec_set = mine(obs, config)
    row = {"key": row_key(params), **{a: params.get(a, getattr(config, a)) for a in ABLATE_AXES}}
    row["n_specs"] = len(spec_set)
    row["volume"] = volume(spec_set.specs, spec_set.grid)
    row["coverage"] = spec_set.stats.coverage
    splits = [("train", obs)]
    if test:
        splits.append(("test", load_logs(test, schema, allow_empty=True)))
    joint = 1.0
    for split, data in splits:
        report = evaluate(spec_set, data, None, split)
        for m in report.references:
            row[f"{split}/{m.name}/support"] = m.support
            row[f"{split}/{m.name}/confidence"] = m.confidence
            if split == "train":
                joint *= (m.support or 0.0) * (m.confidence or 0.0)
    row["joint"] = joint
    return row, time.perf_counter() - start


def _cell(v) -> str:
    if v is None:
        return ""
    if isinstance(v, float):
        return repr(v)
    return str(v)


def _read_rows(path: Path) -> dict[str, dict]:
    if not path.exists():
        return {}
    with path.open(newline="", encoding="utf-8") as fh:
        return {r["key"]: r for r in csv.DictReader(fh)}


def _write_rows(path: Path, rows: list[dict]) -> None:
    columns: list[str] = []
    for r in rows:
        for c in r:
            if c not in columns:
                columns.append(c)
    fixed = ["key", *ABLATE_AXES, "n_specs", "volume", "coverage", "joint"]
    metric_cols = sorted(c for c in columns if c not in fixed)
    columns = [c for c in fixed if c in columns] + metric_cols
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(columns)
    for r in rows:
        writer.writerow([r[c] if isinstance(r.get(c), str) else _cell(r.get(c)) for c in columns])
    path.write_text(buf.getvalue(), encoding="utf-8", newline="\n")


def worker_count(n_tasks: int) -> int:
    cap = os.environ.get("SPECTRA_THREADS")
    try:
        limit = int(cap) if cap else (os.cpu_count() or 1)
    except ValueError:
        raise UsageError(f"SPECTRA_THREADS must be an integer, got {cap!r}") from None
    return max(1, min(limit, n_tasks))


def cmd_ablate(args) -> int:
    combos = _parse_grid(args.grid)
    schema = LogSchema.load(args.schema)
    base = read_json(args.config) if args.config else {}
    base.setdefault("history", schema.history)
    for params in combos:
        # fail fast on invalid grid values
        validate_config(MinerConfig.from_dict({**base, **params}), schema.alphabet)
    train = [str(p) for p in _log_paths(args.logs)]
    test = [str(p) for p in _log_paths(args.test)] if args.test else []
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    # runtimes vary between runs, so they stay out of the result file
    timing_path = out.with_name(out.name + ".timing.csv") if args.timing else None
    done = _read_rows(out)
    timings = _read_rows(timing_path) if timing_path else {}
    keys = [row_key(p) for p in combos]
    pending = [p for p, k in zip(combos, keys) if k not in done]
    if len(pending) < len(combos):
        print(f"resuming: {len(combos) - len(pending)} completed rows skipped")
    tasks = [(p, base, schema.to_dict(), train, test) for p in pending]

    def record(result):
        row, seconds = result
        done[row["key"]] = row
        timings[row["key"]] = {"key": row["key"], "seconds": f"{seconds:.3f}"}
        ordered = [done[k] for k in keys if k in done]
        _write_rows(out, ordered)
        if timing_path:
            _write_rows(timing_path, [timings[k] for k in keys if k in timings])
        print(f"{row['key']}: {row['n_specs']} specs, joint {row['joint']:.4f} ({seconds:.2f} s)")

    workers = worker_count(len(tasks))
    if workers == 1:
        for t in tasks:
            record(_ablate_row(t))
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            for result in pool.map(_ablate_row, tasks):
                record(result)
    if not tasks:
        _write_rows(out, [done[k] for k in keys if k in done])
    best = max((done[k] for k in keys), key=lambda r: float(r["joint"]) if r["joint"] != "" else -1.0)
    print(f"best joint support x confidence: {best['key']}")
    return EXIT_OK


# --- parser ------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="spectra", description="Mine conjunctive input/output specifications from reference logs.")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, seed=True):
        if seed:
            p.add_argument("--seed", type=int, default=0)
        return p

    p = common(sub.add_parser("simulate", help="generate reference logs"))
    p.add_argument("--planted", help="planted-rule JSON")
    p.add_argument("--n", type=int, help="observations per planted reference")
    p.add_argument("--abr", help="comma-separated controllers, e.g. bb,rb")
    p.add_argument("--traces", help="directory of bandwidth traces")
    p.add_argument("--chunks", type=int, default=200)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_simulate)

    p = common(sub.add_parser("mine", help="mine a specification set"))
    p.add_argument("logs", nargs="+")
    p.add_argument("--schema", required=True)
    p.add_argument("--config")
    p.add_argument("--out", required=True)
    p.add_argument("--tau-cov", dest="tau_cov", type=float)
    p.add_argument("--tau-rep", dest="tau_rep", type=float)
    p.add_argument("--tau-max", dest="tau_max", type=int)
    p.add_argument("--parts", type=int)
    p.add_argument("--history", type=int)
    p.set_defaults(func=cmd_mine)

    p = common(sub.add_parser("eval", help="support and confidence of a specification set"))
    p.add_argument("logs", nargs="+", help="training logs")
    p.add_argument("--specs", required=True)
    p.add_argument("--schema", required=True)
    p.add_argument("--test", nargs="*", default=[])
    p.add_argument("--out")
    p.set_defaults(func=cmd_eval)

    p = common(sub.add_parser("export-vnnlib", help="write VNN-Lib property files"))
    p.add_argument("--specs", required=True)
    p.add_argument("--map", required=True)
    p.add_argument("--mode", choices=MODES, default=MODES[0])
    p.add_argument("--epsilon", type=float, default=1e-4)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_export)

    p = common(sub.add_parser("ablate", help="parameter sweep"))
    p.add_argument("logs", nargs="+", help="training logs")
    p.add_argument("--grid", required=True)
    p.add_argument("--schema", required=True)
    p.add_argument("--config")
    p.add_argument("--test", nargs="*", default=[])
    p.add_argument("--out", required=True, help="result CSV")
    p.add_argument("--timing", action="store_true", help="also write per-row runtimes to <out>.timing.csv")
    p.set_defaults(func=cmd_ablate)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (UsageError, LogFormatError, ExportError, FileNotFoundError, KeyError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INTERNAL
    except Exception as exc:  # noqa: BLE001
        log.exception("internal error")
        print(f"internal error: {exc}", file=sys.stderr)
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
