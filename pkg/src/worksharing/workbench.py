"""Desk-scale experiments: operator micro-benchmarks and the window-size study.

Runtime is replaced by the engine's proxy cost throughout, so every ratio
reported here is WS proxy cost over baseline proxy cost.
"""

from __future__ import annotations

import random
from dataclasses import dataclass

import numpy as np

from .costmodel import CostConstants, collect_stats
from .engine import generate_synthetic, run_batch, same_result
from .pipeline import optimize_batch
from .workloads import plan_queries

MICRO_SQL = {
    "filter": {
        "q1": "SELECT * FROM synthetic WHERE n_1 <= 125",
        "q2": "SELECT * FROM synthetic WHERE n_1 > 875",
    },
    "project": {
        "q1": "SELECT n_1, d_1, s_1 FROM synthetic",
        "q2": "SELECT n_2, d_2, s_1 FROM synthetic",
    },
    "mixed": {
        "q1": "SELECT n_1, d_1, s_1 FROM synthetic WHERE n_1 <= 125",
        "q2": "SELECT n_2, d_2, s_1 FROM synthetic WHERE n_1 > 875",
    },
}

FORMATS = ("csv", "columnar")
PERCENTILES = (5, 25, 50, 75, 95)


@dataclass
class ModeRun:
    per_query: dict
    total: dict
    cache_bytes: int
    spills: int


def _mode_json(run, consts) -> ModeRun:
    per_query = {q: m.to_json(consts) for q, m in run.metrics.items()}
    return ModeRun(per_query, run.total.to_json(consts), run.cache.used_bytes, run.cache.spills)


def compare_modes(queries, tables, stats, budget: float, consts: CostConstants = CostConstants(),
                  columnar_scan: bool = False, modes=("baseline", "full_cache", "worksharing"),
                  k: int = 2, units: int = 4096, tamper=None) -> dict:
    """Optimize once, run each mode, and check WS results against baseline.

    ``tamper`` may edit the optimized batch before execution (negative controls).
    """
    opt = optimize_batch(queries, stats, budget, k=k, units=units, consts=consts)
    if tamper is not None:
        tamper(opt.optimized)
    runs = {m: run_batch(queries, tables, m, budget=budget, optimized=opt.optimized,
                         columnar_scan=columnar_scan) for m in modes}
    out = {"optimization": opt.summary(), "budget": budget, "modes": {}, "equivalent": None}
    for m, r in runs.items():
        out["modes"][m] = vars(_mode_json(r, consts))
    if "baseline" in runs and "worksharing" in runs:
        base, ws = runs["baseline"], runs["worksharing"]
        out["equivalent"] = {q.query_id: same_result(base.results[q.query_id], ws.results[q.query_id])
                             for q in queries}
        out["ratio"] = {q.query_id: ws.metrics[q.query_id].proxy_cost(consts)
                        / base.metrics[q.query_id].proxy_cost(consts) for q in queries}
        out["total_ratio"] = ws.total.proxy_cost(consts) / base.total.proxy_cost(consts)
    out["_runs"] = runs
    out["_opt"] = opt
    return out


def run_micro(kind: str = "filter", rows: int = 100_000, fmt: str = "csv",
              budget: float | None = None, seed: int = 0,
              consts: CostConstants = CostConstants()) -> dict:
    if kind not in MICRO_SQL:
        raise ValueError(f"kind must be one of {sorted(MICRO_SQL)}")
    if fmt not in FORMATS:
        raise ValueError(f"format must be one of {FORMATS}")
    if rows < 1000:
        raise ValueError("micro-benchmarks need at least 1000 rows")
    table = generate_synthetic(rows, seed)
    tables = {"synthetic": table}
    stats = {"synthetic": collect_stats(table)}
    if budget is None:
        # room for the shared result but not for the whole table
        budget = 0.5 * table.nbytes
    queries = plan_queries(MICRO_SQL[kind], {"synthetic": table.schema})
    report = compare_modes(queries, tables, stats, budget, consts, columnar_scan=fmt == "columnar")
    report.update({"kind": kind, "rows": rows, "format": fmt, "budget": budget, "seed": seed,
                   "table_bytes": table.nbytes, "sql": MICRO_SQL[kind]})
    return report


def _summary(values) -> dict:
    arr = np.asarray(values, dtype=float)
    pct = np.percentile(arr, PERCENTILES)
    return {"mean": float(arr.mean()),
            "percentiles": {str(p): float(v) for p, v in zip(PERCENTILES, pct)}}


def run_window(pool_sql: dict, tables: dict, window: int, trials: int = 20, seed: int = 0,
               budget: float | None = None, stats=None,
               consts: CostConstants = CostConstants()) -> dict:
    """Sample ``window`` queries ``trials`` times; record SE count and WS/baseline ratio."""
    ids = list(pool_sql)
    if not 1 <= window <= len(ids):
        raise ValueError(f"window must be in [1, {len(ids)}]")
    catalog = {n: r.schema for n, r in tables.items()}
    stats = stats if stats is not None else {n: collect_stats(r) for n, r in tables.items()}
    if budget is None:
        budget = 0.25 * sum(r.nbytes for r in tables.values())
    plans = {q.query_id: q for q in plan_queries(pool_sql, catalog)}
    rng = random.Random(seed)
    rows = []
    for trial in range(trials):
        picked = set(rng.sample(ids, window))
        batch = [plans[q] for q in ids if q in picked]
        opt = optimize_batch(batch, stats, budget, consts=consts)
        base = run_batch(batch, tables, "baseline")
        ws = run_batch(batch, tables, "worksharing", budget=budget, optimized=opt.optimized)
        ratio = ws.total.proxy_cost(consts) / base.total.proxy_cost(consts)
        rows.append({"trial": trial, "window": window, "ratio": ratio,
                     "se_count": len(opt.ses), "ce_count": len(opt.ces),
                     "selected": len(opt.chosen), "cache_bytes": ws.cache.used_bytes,
                     "queries": sorted(picked)})
    return {"window": window, "trials": trials, "seed": seed, "budget": budget,
            "ratio": _summary([r["ratio"] for r in rows]),
            "se_count": _summary([r["se_count"] for r in rows]),
            "rows": rows}


def window_study(pool_sql: dict, tables: dict, windows=(1, 5, 10, 20), trials: int = 20,
                 seed: int = 0, budget: float | None = None,
                 consts: CostConstants = CostConstants()) -> dict:
    stats = {n: collect_stats(r) for n, r in tables.items()}
    results = [run_window(pool_sql, tables, w, trials, seed + i, budget, stats, consts)
               for i, w in enumerate(windows)]
    return {"windows": list(windows), "trials": trials, "seed": seed, "results": results,
            "metric": "proxy-cost ratio WS/baseline"}


def window_csv_rows(study: dict) -> list[dict]:
    return [{"trial": r["trial"], "window": r["window"], "ratio": r["ratio"],
             "se_count": r["se_count"]} for res in study["results"] for r in res["rows"]]
