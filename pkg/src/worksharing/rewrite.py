"""Turn a knapsack selection into cache plans and rewritten consumer queries."""

from __future__ import annotations

from dataclasses import dataclass, field

from .covering import CoveringExpr, SchemaMismatch, extraction_plan
from .fingerprint import fingerprint
from .plan import (
    CacheRead, CacheWrite, LogicalPlan, PlanNode, is_prefix, node_to_json, plan_to_json,
    replace_at, subtree_at, walk,
)


@dataclass(frozen=True)
class CachePlan:
    cache_id: str
    ce_id: str
    plan: PlanNode  # CacheWrite at the root
    estimated_bytes: float
    depends_on: tuple = ()

    def to_json(self) -> dict:
        return {"cache_id": self.cache_id, "ce_id": self.ce_id,
                "estimated_bytes": self.estimated_bytes, "depends_on": list(self.depends_on),
                "plan": node_to_json(self.plan)}


@dataclass(frozen=True)
class Extraction:
    query_id: str
    path: tuple
    cache_id: str
    plan: PlanNode

    def to_json(self) -> dict:
        return {"query_id": self.query_id, "path": list(self.path), "cache_id": self.cache_id,
                "plan": node_to_json(self.plan)}


@dataclass
class OptimizedBatch:
    cache_plans: list = field(default_factory=list)
    queries: list = field(default_factory=list)  # LogicalPlan, input order
    consumers: dict = field(default_factory=dict)  # cache_id -> query ids
    extractions: list = field(default_factory=list)

    def to_json(self) -> dict:
        return {"cache_plans": [c.to_json() for c in self.cache_plans],
                "queries": [plan_to_json(q) for q in self.queries],
                "consumers": {k: list(v) for k, v in sorted(self.consumers.items())},
                "extractions": [e.to_json() for e in self.extractions]}


def cache_id_for(ce: CoveringExpr) -> str:
    return f"cache_{ce.id}"


def selected_ces(selection, groups, ces) -> list[CoveringExpr]:
    """Expand chosen (possibly compound) items into their member CEs."""
    by_id = {c.id: c for c in ces}
    out = []
    for gi, ji in sorted(selection.chosen.items()):
        out.extend(by_id[cid] for cid in groups[gi].items[ji].members)
    return out


def cache_reads(node: PlanNode) -> set:
    return {n.cache_id for _, n in walk(node) if isinstance(n, CacheRead)}


def _substitute(node: PlanNode, available: list, catalog) -> PlanNode:
    """Replace the outermost derivable sub-trees of ``node`` by cache reads."""
    fp = fingerprint(node)
    for ce in available:
        if ce.source.fingerprint == fp:
            try:
                return extraction_plan(node, ce.plan, cache_id_for(ce), catalog)
            except SchemaMismatch:
                continue
    if not node.children:
        return node
    return node.with_children(*[_substitute(c, available, catalog) for c in node.children])


def build_cache_plans(chosen: list[CoveringExpr], catalog) -> list[CachePlan]:
    """One cache plan per chosen CE; smaller chosen CEs feed larger ones."""
    ordered = sorted(chosen, key=CoveringExpr.sort_key)
    plans = []
    for i, ce in enumerate(ordered):
        smaller = [o for o in ordered[i + 1:] if o.size < ce.size]
        body = ce.plan
        if smaller:
            body = body.with_children(*[_substitute(c, smaller, catalog) for c in body.children])
        plans.append(CachePlan(cache_id_for(ce), ce.id, CacheWrite(cache_id_for(ce), body),
                               ce.weight if ce.valuation else 0.0,
                               tuple(sorted(cache_reads(body)))))
    return plans


def rewrite_queries(batch, chosen: list[CoveringExpr], cache_plans: list[CachePlan],
                    catalog) -> OptimizedBatch:
    queries = list(batch)
    by_query: dict = {}
    for ce in chosen:
        for ref in ce.members:
            by_query.setdefault(ref.query_id, []).append((ref.path, ce))

    out, extractions = [], []
    consumers: dict = {}
    for q in queries:
        targets = sorted(by_query.get(q.query_id, []), key=lambda t: (len(t[0]), t[0]))
        done: list = []
        root = q.root
        for path, ce in targets:
            if any(is_prefix(p, path) for p in done):
                continue
            cid = cache_id_for(ce)
            ext = extraction_plan(subtree_at(q, path), ce.plan, cid, catalog)
            root = replace_at(root, path, ext)
            done.append(path)
            extractions.append(Extraction(q.query_id, path, cid, ext))
            consumers.setdefault(cid, []).append(q.query_id)
        out.append(LogicalPlan(q.query_id, root) if done else q)

    # keep only caches that are read, directly or through another cache
    by_id = {c.cache_id: c for c in cache_plans}
    live = set(consumers)
    frontier = list(live)
    while frontier:
        for dep in by_id[frontier.pop()].depends_on:
            if dep not in live:
                live.add(dep)
                frontier.append(dep)
    kept = _dependency_order([c for c in cache_plans if c.cache_id in live])
    return OptimizedBatch(kept, out, consumers, extractions)


def _dependency_order(plans: list[CachePlan]) -> list[CachePlan]:
    by_id = {c.cache_id: c for c in plans}
    seen, order = set(), []

    def visit(c):
        if c.cache_id in seen:
            return
        seen.add(c.cache_id)
        for d in c.depends_on:
            visit(by_id[d])
        order.append(c)

    for c in plans:
        visit(c)
    return order


def schedule(optimized: OptimizedBatch) -> list:
    """Execution steps: each cache plan runs right before its first reader.

    Returns ``("cache", CachePlan)`` and ``("query", LogicalPlan)`` tuples;
    queries keep their input order.
    """
    by_id = {c.cache_id: c for c in optimized.cache_plans}
    emitted: set = set()
    steps = []

    def need(cid):
        if cid in emitted:
            return
        cp = by_id[cid]
        for d in cp.depends_on:
            need(d)
        emitted.add(cid)
        steps.append(("cache", cp))

    for q in optimized.queries:
        for cid in sorted(cache_reads(q.root)):
            need(cid)
        steps.append(("query", q))
    return steps
