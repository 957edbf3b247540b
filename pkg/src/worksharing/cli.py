"""Command-line entry point.

Exit codes: 0 success, 1 result mismatch, 2 input error, 3 missing statistics.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from pathlib import Path

from . import __version__
from .costmodel import DEFAULT_BUCKETS, CostConstants, MissingStats, TableStats, collect_stats
from .engine import ParseError, generate_synthetic, load_csv, write_csv
from .mckp import DEFAULT_UNITS
from .plan import (
    CacheRead, Filter, Limit, LogicalPlan, Not, PlanError, Scan, Schema, plan_to_json,
    replace_at, walk,
)
from .sql import load_sql_dir
from .workbench import FORMATS, MICRO_SQL, compare_modes, run_micro, window_csv_rows, window_study
from .workloads import POOL_SQL, plan_queries, pool_tables, running_tables, star_tables

REPORT_VERSION = 1
DEFAULT_BUDGET_FRACTION = 0.25

EXIT_OK, EXIT_MISMATCH, EXIT_INPUT, EXIT_STATS = 0, 1, 2, 3

log = logging.getLogger("worksharing")


class InputError(Exception):
    pass


# ---------------------------------------------------------------------------
# Data directories: <table>.csv + <table>.schema.json (+ <table>.stats.json)

def save_table_dir(tables: dict, out: Path) -> list[Path]:
    out.mkdir(parents=True, exist_ok=True)
    written = []
    for name, rel in tables.items():
        write_csv(rel, out / f"{name}.csv")
        (out / f"{name}.schema.json").write_text(json.dumps(rel.schema.to_json(), indent=2) + "\n")
        written.append(out / f"{name}.csv")
    return written


def load_catalog(data: Path) -> dict:
    if not data.is_dir():
        raise InputError(f"data directory {data} does not exist")
    return {p.name[: -len(".schema.json")]: Schema.from_json(json.loads(p.read_text()))
            for p in sorted(data.glob("*.schema.json"))}


def load_tables(data: Path, names=None) -> dict:
    catalog = load_catalog(data)
    names = sorted(catalog) if names is None else names
    return {n: load_csv(data / f"{n}.csv", catalog[n]) for n in names}


def load_stats(data: Path, tables) -> dict:
    stats = {}
    for t in sorted(tables):
        p = data / f"{t}.stats.json"
        if not p.exists():
            raise MissingStats(t)
        stats[t] = TableStats.load(p)
    return stats


def referenced_tables(queries) -> set:
    return {n.table for q in queries for _, n in walk(q.root) if isinstance(n, Scan)}


# ---------------------------------------------------------------------------
# Config

DEFAULTS = {"budget": None, "k": 2, "units": DEFAULT_UNITS, "buckets": DEFAULT_BUCKETS,
            "seed": 0, "constants": {}}


def resolve(args) -> dict:
    """Config file values, overridden by any flag given on the command line."""
    cfg = dict(DEFAULTS)
    if getattr(args, "config", None):
        try:
            cfg.update(json.loads(Path(args.config).read_text()))
        except (OSError, json.JSONDecodeError) as exc:
            raise InputError(f"cannot read config {args.config}: {exc}") from exc
    for key in list(cfg) + ["sql", "data"]:
        v = getattr(args, key, None)
        if v is not None:
            cfg[key] = v
    if cfg["k"] < 2:
        raise InputError("--k must be at least 2")
    if cfg["units"] < 1:
        raise InputError("--units must be at least 1")
    if cfg["budget"] is not None and cfg["budget"] < 0:
        raise InputError("--budget must be non-negative")
    cfg["consts"] = CostConstants.from_dict(cfg.get("constants") or {}).validate()
    return cfg


# ---------------------------------------------------------------------------
# Output

def emit(report: dict, path) -> None:
    report = {"report_version": REPORT_VERSION, **report}
    text = json.dumps(report, indent=2, sort_keys=True, default=str)
    if path is None:
        print(text)
        return
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text + "\n")
    log.info("report written to %s", path)


def sibling(report_path, suffix: str):
    p = Path(report_path)
    return p.with_name(p.stem + suffix)


def _dumps(args, opt, queries) -> dict:
    wanted = {
        "plans": lambda: [plan_to_json(q) for q in queries],
        "ses": lambda: [se.to_json() for se in opt.ses],
        "candidates": lambda: {"ces": [c.to_json() for c in opt.ces],
                               "groups": [g.to_json() for g in opt.groups],
                               "selection": opt.selection.to_json()},
        "rewritten": lambda: opt.optimized.to_json(),
    }
    out = {}
    for name, build in wanted.items():
        if getattr(args, f"dump_{name}", False):
            out[name] = build()
            if args.report:
                Path(args.report).parent.mkdir(parents=True, exist_ok=True)
                sibling(args.report, f".{name}.json").write_text(
                    json.dumps(out[name], indent=2, default=str) + "\n")
    return out


# ---------------------------------------------------------------------------
# Commands

def cmd_gen_data(args) -> int:
    if args.rows < 1:
        raise InputError("--rows must be positive")
    if args.dataset == "synthetic":
        tables = {"synthetic": generate_synthetic(args.rows, args.seed)}
    elif args.dataset == "star":
        tables = star_tables(args.rows, args.seed)
    elif args.dataset == "pool":
        tables = pool_tables(args.rows, max(1000, args.rows // 4), args.seed)
    else:
        tables = running_tables(args.rows, args.seed)
    for p in save_table_dir(tables, Path(args.out)):
        print(p)
    return EXIT_OK


def cmd_stats(args) -> int:
    data = Path(args.data)
    catalog = load_catalog(data)
    if not catalog:
        raise InputError(f"no <table>.schema.json files in {data}")
    buckets = args.buckets or DEFAULT_BUCKETS
    for name in catalog:
        rel = load_csv(data / f"{name}.csv", catalog[name])
        collect_stats(rel, buckets).save(data / f"{name}.stats.json")
        print(data / f"{name}.stats.json")
    return EXIT_OK


def _load_queries(cfg) -> tuple[list, dict]:
    if not cfg.get("sql"):
        raise InputError("--sql is required")
    if not cfg.get("data"):
        raise InputError("--data is required")
    sql_dir, data = Path(cfg["sql"]), Path(cfg["data"])
    if not sql_dir.is_dir():
        raise InputError(f"sql directory {sql_dir} does not exist")
    statements = load_sql_dir(sql_dir)
    if not statements:
        raise InputError(f"no queries in {sql_dir}")
    catalog = load_catalog(data)
    queries = plan_queries(dict(statements), catalog)
    return queries, catalog


def _budget(cfg, stats) -> float:
    if cfg["budget"] is not None:
        return float(cfg["budget"])
    size = sum(s.row_count * s.avg_record_size for s in stats.values())
    return DEFAULT_BUDGET_FRACTION * size


def cmd_optimize(args) -> int:
    from .pipeline import optimize_batch
    cfg = resolve(args)
    queries, _ = _load_queries(cfg)
    data = Path(cfg["data"])
    stats = load_stats(data, referenced_tables(queries))
    budget = _budget(cfg, stats)
    opt = optimize_batch(queries, stats, budget, k=cfg["k"], units=cfg["units"],
                         consts=cfg["consts"])
    report = {"command": "optimize", "queries": [q.query_id for q in queries],
              **opt.summary(),
              "ses": [{"fingerprint": se.fingerprint.hex, "m": se.m} for se in opt.ses],
              "groups": [[list(it.members) for it in g.items] for g in opt.groups],
              "selection": opt.selection.to_json()}
    dumps = _dumps(args, opt, queries)
    if dumps and not args.report:
        report["dumps"] = dumps
    emit(report, args.report)
    return EXIT_OK


def _corrupt(optimized) -> bool:
    """Test hook: break the first extraction so the comparison must fail."""
    for i, q in enumerate(optimized.queries):
        for path, node in walk(q.root):
            if isinstance(node, Filter) and isinstance(node.child, CacheRead):
                optimized.queries[i] = LogicalPlan(
                    q.query_id, replace_at(q.root, path, Filter(Not(node.predicate), node.child)))
                return True
            if isinstance(node, CacheRead):
                optimized.queries[i] = LogicalPlan(q.query_id, replace_at(q.root, path, Limit(0, node)))
                return True
    return False


def cmd_run(args) -> int:
    cfg = resolve(args)
    queries, _ = _load_queries(cfg)
    data = Path(cfg["data"])
    needed = sorted(referenced_tables(queries))
    stats = load_stats(data, needed)
    tables = load_tables(data, needed)
    budget = _budget(cfg, stats)
    mode_names = {"baseline": "baseline", "fc": "full_cache", "ws": "worksharing"}
    modes = [mode_names[m] for m in (args.mode or ["baseline", "fc", "ws"])]
    if args.compare:
        modes = list(dict.fromkeys(["baseline"] + modes + ["worksharing"]))
    tamper = _corrupt if args.corrupt_extraction else None
    out = compare_modes(queries, tables, stats, budget, cfg["consts"], modes=modes,
                        k=cfg["k"], units=cfg["units"], tamper=tamper)
    report = {"command": "run", "queries": [q.query_id for q in queries], **_public(out)}
    status = EXIT_OK
    if args.compare:
        ok = all(report["equivalent"].values())
        report["comparison"] = "PASS" if ok else "FAIL"
        print(f"comparison: {report['comparison']}", file=sys.stderr)
        for q, same in report["equivalent"].items():
            if not same:
                print(f"  {q}: result differs from baseline", file=sys.stderr)
        status = EXIT_OK if ok else EXIT_MISMATCH
    else:
        for key in ("equivalent", "ratio", "total_ratio"):
            report.pop(key, None)
    dumps = _dumps(args, out["_opt"], queries)
    if dumps and not args.report:
        report["dumps"] = dumps
    if args.report:
        from .plotting import plot_modes
        report["figures"] = [str(plot_modes(report, sibling(args.report, ".png"), "per-query proxy cost"))]
    emit(report, args.report)
    return status


def _public(report: dict) -> dict:
    return {k: v for k, v in report.items() if not k.startswith("_")}


def cmd_micro(args) -> int:
    cfg = resolve(args)
    report = _public(run_micro(args.kind, args.rows, args.format, cfg["budget"], cfg["seed"],
                               cfg["consts"]))
    report["command"] = "micro"
    ok = all(report["equivalent"].values())
    report["comparison"] = "PASS" if ok else "FAIL"
    if args.report:
        from .plotting import plot_modes
        report["figures"] = [str(plot_modes(report, sibling(args.report, ".png"),
                                            f"{args.kind} micro-benchmark"))]
    emit(report, args.report)
    return EXIT_OK if ok else EXIT_MISMATCH


def cmd_window(args) -> int:
    cfg = resolve(args)
    try:
        windows = [int(w) for w in str(args.window).split(",")]
    except ValueError:
        raise InputError(f"--window expects integers, got {args.window!r}") from None
    if any(not 1 <= w <= len(POOL_SQL) for w in windows):
        raise InputError(f"window sizes must be in [1, {len(POOL_SQL)}]")
    tables = pool_tables(args.sales, args.synthetic_rows, cfg["seed"])
    study = window_study(POOL_SQL, tables, windows, args.trials, cfg["seed"], cfg["budget"],
                         cfg["consts"])
    report = {"command": "window", "pool_size": len(POOL_SQL), **study}
    if args.report:
        csv_path = sibling(args.report, ".csv")
        with csv_path.open("w", newline="") as fh:
            w = csv.DictWriter(fh, fieldnames=["trial", "window", "ratio", "se_count"])
            w.writeheader()
            w.writerows(window_csv_rows(study))
        from .plotting import plot_window
        report["csv"] = str(csv_path)
        report["figures"] = [str(plot_window(study, sibling(args.report, ".png")))]
    emit(report, args.report)
    return EXIT_OK


# ---------------------------------------------------------------------------

def _common(p, pipeline: bool = True):
    p.add_argument("--config", help="JSON config file; flags override its values")
    p.add_argument("--seed", type=int)
    p.add_argument("--budget", type=float, help="cache budget in bytes")
    p.add_argument("--report", help="write the JSON report (and figures) here")
    if pipeline:
        p.add_argument("--sql", help="directory of .sql files, one query per statement")
        p.add_argument("--data", help="directory of <table>.csv and <table>.schema.json")
        p.add_argument("--k", type=int, help="minimum SE size (default 2)")
        p.add_argument("--units", type=int, help="knapsack capacity units (default 4096)")
        for name in ("plans", "ses", "candidates", "rewritten"):
            p.add_argument(f"--dump-{name}", action="store_true")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="worksharing", description=__doc__.splitlines()[0])
    ap.add_argument("--version", action="version", version=__version__)
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-data", help="generate a dataset as CSV files")
    p.add_argument("--dataset", choices=["synthetic", "star", "running", "pool"], default="synthetic")
    p.add_argument("--rows", type=int, default=10000,
                   help="synthetic rows, store_sales rows (star) or employees (running)")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_gen_data)

    p = sub.add_parser("stats", help="write <table>.stats.json next to each table")
    p.add_argument("--data", required=True)
    p.add_argument("--buckets", type=int)
    p.set_defaults(func=cmd_stats)

    p = sub.add_parser("optimize", help="find shared work and choose what to cache")
    _common(p)
    p.set_defaults(func=cmd_optimize)

    p = sub.add_parser("run", help="execute the batch in one or more modes")
    _common(p)
    p.add_argument("--mode", action="append", choices=["baseline", "fc", "ws"])
    p.add_argument("--compare", action="store_true",
                   help="check worksharing results against baseline")
    p.add_argument("--corrupt-extraction", action="store_true", help=argparse.SUPPRESS)
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("micro", help="two-query micro-benchmark on synthetic data")
    _common(p, pipeline=False)
    p.add_argument("--kind", choices=sorted(MICRO_SQL), default="filter")
    p.add_argument("--rows", type=int, default=100_000)
    p.add_argument("--format", choices=FORMATS, default="csv")
    p.set_defaults(func=cmd_micro)

    p = sub.add_parser("window", help="window-size study on the bundled query pool")
    _common(p, pipeline=False)
    p.add_argument("--window", default="1,5,10,20", help="comma-separated window sizes")
    p.add_argument("--trials", type=int, default=20)
    p.add_argument("--sales", type=int, default=20000, help="store_sales rows")
    p.add_argument("--synthetic-rows", type=int, default=5000)
    p.set_defaults(func=cmd_window)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except MissingStats as exc:
        print(f"error: {exc} (run `worksharing stats --data DIR` first)", file=sys.stderr)
        return EXIT_STATS
    except (InputError, PlanError, ParseError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
