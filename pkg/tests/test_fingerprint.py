import random

from hypothesis import given, settings, strategies as st

from worksharing.fingerprint import (
    OperatorId, canonical_string, fingerprint, fingerprint_all, operator_id, orient,
)
from worksharing.plan import (
    CartesianProduct, Filter, Join, Project, Scan, Union, cmp, col, lit, replace_at, subtree_at,
    walk,
)
from worksharing.workloads import POOL_SQL, plan_queries, pool_tables

from plangen import random_plan, random_predicate, small_tables

CATALOG = {n: r.schema for n, r in small_tables(0, rows=5).items()}
MUTATIONS = 10_000


def test_operator_ids():
    assert operator_id(Filter(cmp(">", "age", 30), Scan("e"))) == OperatorId("Filter")
    j = Join(cmp("=", "dep", col("dept_id")), Scan("e"), Scan("d"))
    assert operator_id(j) == OperatorId("Join", "= col:dep col:dept_id")
    assert operator_id(Scan("employees")) == OperatorId("Scan:employees")
    assert len(fingerprint(Scan("e")).hex) == 32


def test_examples():
    a = Project(("id", "name"), Filter(cmp("=", "gender", lit("F")), Scan("employees")))
    b = Project(("age",), Filter(cmp(">", "age", 30), Scan("employees")))
    assert fingerprint(a) == fingerprint(b)
    ab = Join(cmp("=", "a_k", col("b_k")), Scan("ta"), Scan("tb"))
    ba = Join(cmp("=", "b_k", col("a_k")), Scan("tb"), Scan("ta"))
    assert fingerprint(ab) == fingerprint(ba)
    e, s = Scan("employees"), Scan("salaries")
    assert fingerprint(Join(cmp("=", "dep", col("dept_id")), e, s)) != \
        fingerprint(Join(cmp("=", "id", col("emp_id")), e, s))


def _loose_mutation(rng, node):
    """Change one Filter predicate or Project column list; None if the plan has neither."""
    spots = [(p, n) for p, n in walk(node) if isinstance(n, (Filter, Project))]
    if not spots:
        return None
    path, n = rng.choice(spots)
    if isinstance(n, Filter):
        new = Filter(random_predicate(rng, CATALOG["ta"]), n.child)
    else:
        cols = tuple(rng.sample(["a_k", "a_x", "b_k", "zzz", "c_y"], rng.randint(1, 4)))
        new = Project(cols if cols != n.columns else cols + ("extra",), n.child)
    return replace_at(node, path, new)


def _strict_mutation(rng, node):
    joins = [(p, n) for p, n in walk(node) if isinstance(n, Join)]
    if joins and rng.random() < 0.5:
        path, n = rng.choice(joins)
        new_cond = cmp("=", f"m{rng.randrange(100)}_k", col(f"n{rng.randrange(100)}_k"))
        return replace_at(node, path, Join(new_cond, n.left, n.right))
    path, n = rng.choice([(p, n) for p, n in walk(node) if isinstance(n, Scan)])
    return replace_at(node, path, Scan(n.table + "_other"))


def _swap(rng, node):
    spots = [(p, n) for p, n in walk(node) if isinstance(n, (Join, Union, CartesianProduct))]
    if not spots:
        return None
    path, n = rng.choice(spots)
    if isinstance(n, Join):
        c = n.condition
        return replace_at(node, path, Join(cmp("=", c.rhs, c.lhs), n.right, n.left))
    return replace_at(node, path, n.with_children(n.children[1], n.children[0]))


def mutation_check(count: int = MUTATIONS, seed: int = 0) -> dict:
    """Apply ``count`` mutations per property; returns violation and trial counts."""
    rng = random.Random(seed)
    tally = {"loose": [0, 0], "strict": [0, 0], "iso": [0, 0]}
    while min(t[1] for t in tally.values()) < count:
        plan = random_plan(rng, CATALOG, depth=rng.randint(1, 5))
        fp = fingerprint(plan)
        for kind, mutate, expect_equal in (("loose", _loose_mutation, True),
                                           ("strict", _strict_mutation, False),
                                           ("iso", _swap, True)):
            if tally[kind][1] >= count:
                continue
            mutated = mutate(rng, plan)
            if mutated is None:
                continue
            tally[kind][1] += 1
            if (fingerprint(mutated) == fp) != expect_equal:
                tally[kind][0] += 1
    return {k: {"violations": v, "trials": n} for k, (v, n) in tally.items()}


def test_mutation_properties():
    result = mutation_check()
    for kind, r in result.items():
        assert r["trials"] >= MUTATIONS, kind
        assert r["violations"] == 0, (kind, r)


def test_no_collisions_on_workloads():
    seen: dict = {}
    catalog = {n: r.schema for n, r in pool_tables(sales=100, synthetic_rows=10).items()}
    plans = plan_queries(POOL_SQL, catalog)
    rng = random.Random(1)
    roots = [p.root for p in plans] + [random_plan(rng, CATALOG, 4) for _ in range(300)]
    for root in roots:
        for path, fp in fingerprint_all(root).items():
            s = canonical_string(subtree_at(root, path))
            assert seen.setdefault(fp.digest, s) == s
    assert len(seen) > 100


def test_fingerprint_all_matches_fingerprint(running_plans):
    for plan in running_plans:
        for path, fp in fingerprint_all(plan.root).items():
            assert fingerprint(subtree_at(plan, path)) == fp


@settings(max_examples=100, deadline=None)
@given(st.integers(0, 10**6))
def test_orient_preserves_fingerprint_and_aligns(seed):
    rng = random.Random(seed)
    plan = random_plan(rng, CATALOG, depth=4)
    swapped = _swap(rng, plan)
    assert fingerprint(orient(plan)) == fingerprint(plan)
    if swapped is not None:
        assert [operator_id(n) for _, n in walk(orient(swapped))] == \
            [operator_id(n) for _, n in walk(orient(plan))]
