import pytest

from worksharing.plan import Filter, Or, Project, Scan, walk
from worksharing.workbench import run_micro, run_window, window_csv_rows, window_study
from worksharing.workloads import POOL_SQL, pool_tables


@pytest.fixture(scope="module")
def pool():
    return pool_tables(sales=3000, synthetic_rows=1000, seed=0)


@pytest.fixture(scope="module")
def micro_filter():
    return run_micro("filter", rows=20_000, seed=1)


def _cache_plan(report):
    opt = report["_opt"]
    assert len(opt.optimized.cache_plans) == 1
    return opt.optimized.cache_plans[0].plan.child


def test_filter_micro(micro_filter):
    r = micro_filter
    filters = [n for _, n in walk(_cache_plan(r)) if isinstance(n, Filter)]
    assert len(filters) == 1 and isinstance(filters[0].predicate, Or)
    assert isinstance(filters[0].child, Scan)
    ws, fc, base = (r["modes"][m] for m in ("worksharing", "full_cache", "baseline"))
    assert ws["per_query"]["q2"]["base_table_tuples_scanned"] == 0
    assert ws["per_query"]["q1"]["base_table_tuples_scanned"] == 20_000
    assert base["total"]["base_table_tuples_scanned"] == 40_000
    assert ws["cache_bytes"] < fc["cache_bytes"]
    assert all(r["equivalent"].values())
    assert ws["total"]["proxy_cost"] < base["total"]["proxy_cost"]
    assert r["ratio"]["q2"] < 1 and all(v > 0 for v in r["ratio"].values())


def test_project_micro():
    r = run_micro("project", rows=5000, seed=2)
    plan = _cache_plan(r)
    assert isinstance(plan, Project)
    assert set(plan.columns) == {"n_1", "d_1", "s_1", "n_2", "d_2"}
    assert all(r["equivalent"].values())


def test_mixed_micro_columnar():
    r = run_micro("mixed", rows=5000, fmt="columnar", seed=3)
    assert all(r["equivalent"].values())
    nodes = [type(n) for _, n in walk(_cache_plan(r))]
    assert nodes == [Project, Filter, Scan]
    assert r["modes"]["worksharing"]["cache_bytes"] < r["modes"]["full_cache"]["cache_bytes"]


def test_micro_validation():
    with pytest.raises(ValueError):
        run_micro("filter", rows=10)
    with pytest.raises(ValueError):
        run_micro("nope", rows=5000)
    with pytest.raises(ValueError):
        run_micro("filter", rows=5000, fmt="parquet")


def test_window_one_has_no_sharing(pool):
    r = run_window(POOL_SQL, pool, 1, trials=5, seed=0)
    assert all(row["se_count"] == 0 for row in r["rows"])
    assert all(row["ratio"] == pytest.approx(1.0) for row in r["rows"])


def test_window_full_pool_identical(pool):
    r = run_window(POOL_SQL, pool, len(POOL_SQL), trials=3, seed=0)
    first = {k: v for k, v in r["rows"][0].items() if k != "trial"}
    for row in r["rows"][1:]:
        assert {k: v for k, v in row.items() if k != "trial"} == first


def test_window_summaries(pool):
    r = run_window(POOL_SQL, pool, 5, trials=6, seed=3)
    for key in ("ratio", "se_count"):
        pct = list(r[key]["percentiles"].values())
        assert pct == sorted(pct) and list(r[key]["percentiles"]) == ["5", "25", "50", "75", "95"]
    assert all(row["ratio"] > 0 for row in r["rows"])
    with pytest.raises(ValueError):
        run_window(POOL_SQL, pool, len(POOL_SQL) + 1)


def test_window_reproducible(pool):
    a = window_study(POOL_SQL, pool, (1, 5), trials=3, seed=9)
    b = window_study(POOL_SQL, pool, (1, 5), trials=3, seed=9)
    assert a == b
    rows = window_csv_rows(a)
    assert len(rows) == 6 and set(rows[0]) == {"trial", "window", "ratio", "se_count"}
