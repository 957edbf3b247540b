import random
import warnings

import pytest
from hypothesis import given, settings, strategies as st

from worksharing.covering import SchemaMismatch
from worksharing.engine import (
    CacheStore, CacheWriteTwice, MissingCacheEntry, ParseError, Relation, SpillWarning,
    canonical_rows, execute, generate_synthetic, load_csv, load_native, run_batch, same_result, save_native, write_csv,
)
from worksharing.plan import (
    CacheRead, CacheWrite, DataType, Filter, Join, Project, Scan, Schema, cmp, col,
)
from worksharing.reference import evaluate, result_tuples
from worksharing.workbench import MICRO_SQL
from worksharing.workloads import plan_queries

from plangen import random_plan, small_tables

I, F, S = DataType.INT64, DataType.FLOAT64, DataType.UTF8


def _rel(**cols):
    schema = Schema.of(*[(n, I if isinstance(v[0], int) else F if isinstance(v[0], float) else S)
                         for n, v in cols.items()])
    return Relation(schema, cols)


def test_filter_example():
    rel, m = execute(Filter(cmp(">", "age", 30), Scan("p")), {"p": _rel(age=[25, 31, 40])})
    assert sorted(rel.to_rows()) == [(31,), (40,)]
    assert m.base_table_tuples_scanned == 3


def test_join_example():
    tables = {"l": _rel(a=[1, 2]), "r": _rel(b=[2, 3])}
    rel, _ = execute(Join(cmp("=", "a", col("b")), Scan("l"), Scan("r")), tables)
    assert rel.to_rows() == [(2, 2)]


def test_relation_invariants():
    with pytest.raises(ValueError):
        _rel(a=[1, 2], b=[1])
    r = _rel(a=[1, 2], s=["x", "yz"])
    assert r.row_count == 2 and r.to_rows() == [(1, "x"), (2, "yz")]
    assert r == Relation.from_rows(r.schema, r.to_rows())


def _independent_bytes(rel: Relation) -> int:
    total = 0
    for row in rel.to_rows():
        for c, v in zip(rel.schema, row):
            total += 8 if c.dtype.numeric else len(v.encode("utf-8")) + 4
    return total


def test_cache_accounting_and_spill():
    store = CacheStore(budget=50)
    a = _rel(a=[1, 2, 3], s=["ab", "c", ""])
    assert store.write("x", a) == _independent_bytes(a) == 24 + 3 + 12
    assert store.used_bytes == 39 and store.spills == 0
    with pytest.warns(SpillWarning):
        store.write("y", _rel(b=[1.0, 2.0]))
    assert store.used_bytes == 55 and store.spills == 1
    with pytest.raises(CacheWriteTwice):
        store.write("x", a)
    with pytest.raises(MissingCacheEntry):
        store.read("nope")
    assert store.read("x")[0] is a


def test_cache_operators():
    tables = {"p": _rel(age=[25, 31, 40])}
    store = CacheStore()
    rel, m = execute(CacheWrite("c", Filter(cmp(">", "age", 30), Scan("p"))), tables, store)
    assert m.cache_bytes_written == 16 and rel.row_count == 2
    again, m2 = execute(Project(("age",), CacheRead("c", tables["p"].schema)), tables, store)
    assert same_result(rel, again) and m2.cache_bytes_read == 16
    assert m2.base_table_tuples_scanned == 0
    with pytest.raises(MissingCacheEntry):
        execute(CacheRead("zzz", tables["p"].schema), tables, store)


def test_synthetic():
    rel = generate_synthetic(5000, seed=3)
    assert len(rel.schema) == 30
    n1 = rel.column("n_1")
    assert n1.min() >= 1 and n1.max() <= 1000
    assert rel.column("n_3").max() <= 10**5
    d = rel.column("d_4")
    assert d.min() >= 0 and d.max() <= 1
    s3 = rel.to_rows()[0][22]
    assert len(s3) == 20 and s3.isalpha() and s3.islower()
    assert all(len(v) == 20 for v in rel.column("s_3").tolist())
    assert generate_synthetic(5000, seed=3) == rel
    assert generate_synthetic(5000, seed=4) != rel


def test_csv(tmp_path):
    p = tmp_path / "t.csv"
    p.write_text("a,b\n1,x\n2,y\n")
    rel = load_csv(p, Schema.of(("a", I), ("b", S)))
    assert rel.to_rows() == [(1, "x"), (2, "y")]
    p.write_text("a\nfoo\n")
    with pytest.raises(ParseError) as info:
        load_csv(p, Schema.of(("a", I)))
    assert info.value.line == 2
    with pytest.raises(SchemaMismatch):
        load_csv(p, Schema.of(("b", I)))


def test_csv_round_trip(tmp_path):
    rel = generate_synthetic(300, seed=1)
    write_csv(rel, tmp_path / "s.csv")
    assert load_csv(tmp_path / "s.csv", rel.schema) == rel
    save_native(rel, tmp_path / "s.npz")
    assert load_native(tmp_path / "s.npz") == rel


def _micro(kind="filter", rows=4000):
    tables = {"synthetic": generate_synthetic(rows, seed=2)}
    return tables, plan_queries(MICRO_SQL[kind], {"synthetic": tables["synthetic"].schema})


def test_batch_modes_scan_counts():
    tables, queries = _micro()
    base = run_batch(queries, tables, "baseline")
    assert base.total.base_table_tuples_scanned == 2 * 4000
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        fc = run_batch(queries, tables, "full_cache", budget=10)
    assert fc.total.base_table_tuples_scanned == 4000
    assert fc.cache.spills == 1
    for q in queries:
        assert same_result(base.results[q.query_id], fc.results[q.query_id])
    with pytest.raises(ValueError):
        run_batch(queries, tables, "worksharing")
    with pytest.raises(ValueError):
        run_batch(queries, tables, "bogus")


def _engine_and_reference(seed: int, rows: int = 100):
    rng = random.Random(seed)
    tabs = small_tables(seed, rows)
    catalog = {n: r.schema for n, r in tabs.items()}
    plan = random_plan(rng, catalog, depth=rng.randint(1, 4))
    rel, _ = execute(plan, tabs)
    names, rows_ = evaluate(plan, {n: (r.schema.names, r.to_rows()) for n, r in tabs.items()})
    return rel, tuple(names), result_tuples(names, rows_)


def reference_check(plans: int = 200, seed: int = 0) -> int:
    """Number of random plans where engine and reference results differ as multisets."""
    bad = 0
    for s in range(seed, seed + plans):
        rel, names, expected = _engine_and_reference(s)
        if names != rel.schema.names or \
                canonical_rows(rel.to_rows()) != canonical_rows(expected):
            bad += 1
    return bad


def test_engine_matches_reference():
    assert reference_check(300) == 0


@settings(max_examples=100, deadline=None)
@given(st.integers(0, 10**6))
def test_engine_matches_reference_ordered(seed):
    rel, names, expected = _engine_and_reference(seed, rows=50)
    assert names == rel.schema.names
    assert canonical_rows(rel.to_rows(), ordered=True) == canonical_rows(expected, ordered=True)
