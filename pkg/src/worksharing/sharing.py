"""Similar-subexpression identification over a batch of optimized plans."""

from __future__ import annotations

from dataclasses import dataclass

from .fingerprint import Fingerprint, fingerprint_all
from .plan import CartesianProduct, Join, LogicalPlan, PlanNode, Union, node_count, subtree_at

UNFRIENDLY = (Join, CartesianProduct, Union)


@dataclass(frozen=True)
class SubTreeRef:
    query_id: str
    path: tuple
    fingerprint: Fingerprint
    node_count: int

    def to_json(self) -> dict:
        return {"query_id": self.query_id, "path": list(self.path)}


@dataclass(frozen=True)
class SimilarSubexpr:
    fingerprint: Fingerprint
    members: tuple  # SubTreeRef, sorted by (query_id, path)

    @property
    def m(self) -> int:
        return len(self.members)

    @property
    def size(self) -> int:
        return max(r.node_count for r in self.members)

    def to_json(self) -> dict:
        return {"fingerprint": self.fingerprint.hex,
                "members": [r.to_json() for r in self.members], "m": self.m}


def cache_friendly(node: PlanNode) -> bool:
    return not isinstance(node, UNFRIENDLY)


def contains_unfriendly(node: PlanNode) -> bool:
    """True iff some proper descendant is cache-unfriendly."""
    return any(not cache_friendly(c) or contains_unfriendly(c) for c in node.children)


def identify_ses(batch, k: int = 2) -> list[SimilarSubexpr]:
    """Top-down fingerprint-table search for similar subexpressions.

    A visited sub-tree is recorded when its root is cache-friendly; the search
    descends into its children only when the root is unfriendly or something
    below it is. Buckets with at least ``k`` sub-trees are returned.
    """
    if k < 2:
        raise ValueError("threshold k must be at least 2")
    plans: list[LogicalPlan] = list(batch)
    table: dict[Fingerprint, list[SubTreeRef]] = {}
    for plan in plans:
        fps = fingerprint_all(plan.root)
        to_visit = [()]
        while to_visit:
            path = to_visit.pop()
            node = subtree_at(plan, path)
            friendly = cache_friendly(node)
            if friendly:
                ref = SubTreeRef(plan.query_id, path, fps[path], node_count(node))
                table.setdefault(fps[path], []).append(ref)
            if not friendly or contains_unfriendly(node):
                to_visit.extend(path + (i,) for i in range(len(node.children)))
    out = [
        SimilarSubexpr(fp, tuple(sorted(refs, key=lambda r: (r.query_id, r.path))))
        for fp, refs in table.items() if len(refs) >= k
    ]
    out.sort(key=lambda se: (-se.size, se.fingerprint.hex))
    return out
