"""Acceptance gate: one test per criterion, each reporting a PASS/FAIL line.

Run alone with ``pytest tests/test_acceptance.py -v``; the lines are repeated in
the terminal summary under "acceptance criteria".
"""

import random
import time
from contextlib import contextmanager
from functools import lru_cache

from worksharing.costmodel import CostConstants, collect_stats
from worksharing.engine import generate_synthetic, run_batch, same_result
from worksharing.pipeline import build_ces, optimize_batch
from worksharing.plan import Scan, walk
from worksharing.covering import generate_kp_items
from worksharing.sharing import identify_ses
from worksharing.workbench import run_micro, window_study
from worksharing.workloads import (
    POOL_SQL, RUNNING_SCHEMAS, RUNNING_SQL, plan_queries, pool_tables, random_workload,
    running_tables,
)

import test_costmodel
import test_engine
import test_fingerprint
import test_mckp
from acceptance_log import record

# pinned limits and tolerances
GOLDEN_SECONDS = 1.0
WORKLOADS = 200
WORKLOAD_SECONDS = 120.0
MCKP_INSTANCES = 1000
MCKP_BOUND_INSTANCES = 300
MCKP_SECONDS = 30.0
MICRO_ROWS = 10**6
MICRO_SHARE = 0.25
MICRO_TOLERANCE = 0.05
MICRO_SECONDS = 60.0
WINDOWS = (1, 5, 10, 20)
WINDOW_TRIALS = 20
WINDOW_SECONDS = 300.0
MUTATIONS = 10_000
PROPERTY_SECONDS = 120.0
REFERENCE_PLANS = 250
REFERENCE_SECONDS = 60.0


@contextmanager
def criterion(number: int, title: str):
    """Yields a dict the test fills with ``ok`` and ``detail``; errors count as FAIL."""
    out = {"ok": False, "detail": ""}
    start = time.perf_counter()
    try:
        yield out
    except Exception as exc:
        record(number, title, False, f"error: {type(exc).__name__}: {exc}")
        raise
    out["seconds"] = time.perf_counter() - start
    record(number, title, out["ok"], f"{out['detail']} ({out['seconds']:.2f}s)")


def test_criterion_1_golden_running_example():
    with criterion(1, "running-example golden structure") as c:
        start = time.perf_counter()
        tables = running_tables(employees=400, seed=3)
        stats = {n: collect_stats(r) for n, r in tables.items()}
        plans = plan_queries(RUNNING_SQL, RUNNING_SCHEMAS)
        ses = identify_ses(plans, k=2)
        ces, skipped = build_ces(ses, {p.query_id: p for p in plans}, stats, CostConstants())
        groups = generate_kp_items(ces)
        elapsed = time.perf_counter() - start

        def table(ce):
            return next(n.table for _, n in walk(ce.plan) if isinstance(n, Scan))
        leaf = {table(ce): ce.id for ce in ces if ce.size == 3}
        omega = {1: ces[0].id, 2: leaf.get("employees"), 3: leaf.get("departments"),
                 4: leaf.get("salaries")}
        expected = [[(omega[1],), (omega[2],), (omega[3],), (omega[2], omega[3])], [(omega[4],)]]
        got = [[it.members for it in g.items] for g in groups]
        counts = [se.m for se in ses]
        c["ok"] = (len(ses) == 4 and counts == [2, 3, 2, 2] and not skipped and got == expected
                   and {r.query_id for r in ses[0].members} == {"q1", "q2"}
                   and elapsed < GOLDEN_SECONDS)
        c["detail"] = f"SE counts {counts}, groups {got}, pipeline {elapsed:.3f}s < {GOLDEN_SECONDS}s"
    assert c["ok"], c["detail"]


@lru_cache(maxsize=1)
def _workload_runs():
    """Optimize and execute the random workloads once; shared by criteria 2 and 4."""
    runs = []
    start = time.perf_counter()
    for seed in range(WORKLOADS):
        tables, sql = random_workload(seed, min_queries=2, max_queries=6, min_rows=100, max_rows=10_000)
        catalog = {n: r.schema for n, r in tables.items()}
        stats = {n: collect_stats(r) for n, r in tables.items()}
        queries = plan_queries(sql, catalog)
        size = sum(s.row_count * s.avg_record_size for s in stats.values())
        budget = random.Random(seed).choice([0.02, 0.1, 0.25, 1.0]) * size
        opt = optimize_batch(queries, stats, budget)
        base = run_batch(queries, tables, "baseline")
        ws = run_batch(queries, tables, "worksharing", budget=budget, optimized=opt.optimized)
        mismatched = [q.query_id for q in queries
                      if not same_result(base.results[q.query_id], ws.results[q.query_id])]
        chosen_weight = sum(ce.weight for ce in opt.chosen)
        runs.append({"seed": seed, "queries": len(queries), "budget": budget,
                     "mismatched": mismatched, "selected": len(opt.chosen),
                     "selection_weight": opt.selection.total_weight,
                     "chosen_weight": chosen_weight,
                     "scanned": (base.total.base_table_tuples_scanned,
                                 ws.total.base_table_tuples_scanned)})
    return runs, time.perf_counter() - start


def test_criterion_2_semantic_equivalence():
    with criterion(2, "semantic equivalence on random workloads") as c:
        runs, elapsed = _workload_runs()
        bad = [r["seed"] for r in runs if r["mismatched"]]
        shared = sum(1 for r in runs if r["selected"])
        queries = sum(r["queries"] for r in runs)
        more_scans = [r["seed"] for r in runs if r["scanned"][1] > r["scanned"][0]]
        c["ok"] = (len(runs) >= 200 and not bad and not more_scans and shared > 0
                   and elapsed < WORKLOAD_SECONDS)
        c["detail"] = (f"{len(runs)} workloads, {queries} queries, {shared} with caching, "
                       f"mismatches {bad}, extra scans {more_scans}, {elapsed:.1f}s < {WORKLOAD_SECONDS:.0f}s")
    assert c["ok"], c["detail"]


def test_criterion_3_mckp_exactness():
    with criterion(3, "MCKP exactness and rounding bound") as c:
        start = time.perf_counter()
        exact_bad = test_mckp.exactness(MCKP_INSTANCES, seed=0)
        bound_bad = test_mckp.rounding_bound(MCKP_BOUND_INSTANCES, seed=1, units=4096)
        elapsed = time.perf_counter() - start
        c["ok"] = exact_bad == 0 and bound_bad == 0 and elapsed < MCKP_SECONDS
        c["detail"] = (f"{MCKP_INSTANCES} instances exact, {exact_bad} mismatches; "
                       f"{MCKP_BOUND_INSTANCES} units=4096 bound checks, {bound_bad} violations")
    assert c["ok"], c["detail"]


def test_criterion_4_budget_compliance():
    with criterion(4, "budget compliance") as c:
        runs, _ = _workload_runs()
        over = [r["seed"] for r in runs
                if r["selection_weight"] > r["budget"] or r["chosen_weight"] > r["budget"]]
        c["ok"] = not over
        c["detail"] = f"{len(runs)} workloads, {len(over)} over budget {over}"
    assert c["ok"], c["detail"]


def test_criterion_5_filter_micro_benchmark():
    with criterion(5, "filter micro-benchmark at 10^6 rows") as c:
        start = time.perf_counter()
        r = run_micro("filter", rows=MICRO_ROWS, fmt="csv", seed=0)
        elapsed = time.perf_counter() - start
        base = r["modes"]["baseline"]["total"]["base_table_tuples_scanned"]
        ws = r["modes"]["worksharing"]["total"]["base_table_tuples_scanned"]
        ws_bytes = r["modes"]["worksharing"]["cache_bytes"]
        fc_bytes = r["modes"]["full_cache"]["cache_bytes"]
        share = ws_bytes / fc_bytes
        c["ok"] = (base == 2 * MICRO_ROWS and ws == MICRO_ROWS and ws_bytes < fc_bytes
                   and abs(share - MICRO_SHARE) <= MICRO_TOLERANCE
                   and all(r["equivalent"].values()) and elapsed < MICRO_SECONDS)
        c["detail"] = (f"scanned baseline {base} vs WS {ws}; WS/FC cache bytes "
                       f"{ws_bytes}/{fc_bytes} = {share:.4f} (target {MICRO_SHARE} +/- {MICRO_TOLERANCE})")
    assert c["ok"], c["detail"]


def test_criterion_6_window_study():
    with criterion(6, "window study trend") as c:
        start = time.perf_counter()
        tables = pool_tables(seed=0)
        study = window_study(POOL_SQL, tables, WINDOWS, trials=WINDOW_TRIALS, seed=0)
        elapsed = time.perf_counter() - start
        se_means = [res["se_count"]["mean"] for res in study["results"]]
        ratio_means = [res["ratio"]["mean"] for res in study["results"]]
        trials = study["results"][-1]["rows"]
        c["ok"] = (all(b >= a for a, b in zip(se_means, se_means[1:])) and ratio_means[-1] < 1
                   and len(trials) == WINDOW_TRIALS and elapsed < WINDOW_SECONDS)
        c["detail"] = (f"mean SEs {[round(x, 2) for x in se_means]} for W={list(WINDOWS)}; "
                       f"mean WS/baseline ratio {[round(x, 3) for x in ratio_means]}")
    assert c["ok"], c["detail"]


def test_criterion_7_property_suites():
    with criterion(7, "property suites") as c:
        start = time.perf_counter()
        fp = test_fingerprint.mutation_check(MUTATIONS, seed=0)
        synthetic = generate_synthetic(200_000, seed=11)
        stats = {"synthetic": collect_stats(synthetic)}
        sel_bad = test_costmodel.selectivity_violations(1000)
        eq_bad = test_costmodel.equality_violations(synthetic, stats, samples=100)
        mono_bad = test_costmodel.monotonicity_violations(300)
        elapsed = time.perf_counter() - start
        fp_ok = all(v["violations"] == 0 and v["trials"] >= MUTATIONS for v in fp.values())
        c["ok"] = fp_ok and sel_bad == 0 and eq_bad == 0 and mono_bad == 0 and elapsed < PROPERTY_SECONDS
        c["detail"] = (f"fingerprint {fp}; selectivity bound violations {sel_bad}; "
                       f"equality x2 violations {eq_bad}; value monotonicity violations {mono_bad}")
    assert c["ok"], c["detail"]


def test_criterion_8_engine_vs_reference():
    with criterion(8, "engine vs reference interpreter") as c:
        start = time.perf_counter()
        bad = test_engine.reference_check(REFERENCE_PLANS, seed=0)
        elapsed = time.perf_counter() - start
        c["ok"] = bad == 0 and elapsed < REFERENCE_SECONDS
        c["detail"] = f"{REFERENCE_PLANS} random plans, {bad} multiset mismatches"
    assert c["ok"], c["detail"]
