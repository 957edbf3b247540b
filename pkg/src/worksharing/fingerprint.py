"""Merkle-style structural fingerprints of plan sub-trees.

Filter, Project and Scan use *loose* identifiers (predicates and column lists
are ignored, the scanned table is not); every other operator is *strict* and
hashes its full canonical attributes. Children of commutative binary
operators are hashed in digest order so ``A join B`` and ``B join A`` agree.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass
from typing import Optional

from .plan import (
    Aggregate, CacheRead, CacheWrite, CartesianProduct, ColumnRef, Compare, Filter,
    Join, Limit, PlanNode, Project, Scan, Sort, Union, canonicalize, conjuncts, expr_key,
)

DIGEST_BYTES = 16

LOOSE_OPS = (Filter, Project, Scan)


@dataclass(frozen=True)
class OperatorId:
    label: str
    attrs: Optional[str] = None

    def render(self) -> str:
        return self.label if self.attrs is None else f"{self.label}{{{self.attrs}}}"


@dataclass(frozen=True, order=True)
class Fingerprint:
    digest: bytes

    @property
    def hex(self) -> str:
        return self.digest.hex()

    def __str__(self) -> str:
        return self.hex


def operator_id(node: PlanNode) -> OperatorId:
    if isinstance(node, Scan):
        # the table name is part of the label, otherwise every scan would collide
        return OperatorId(f"Scan:{node.table}")
    if isinstance(node, (Filter, Project)):
        return OperatorId(node.op)
    if isinstance(node, Join):
        return OperatorId("Join", expr_key(canonicalize(node.condition)))
    if isinstance(node, (CartesianProduct, Union)):
        return OperatorId(node.op, "")
    if isinstance(node, Aggregate):
        aggs = ";".join(a.key() for a in node.aggs)
        return OperatorId("Aggregate", f"group=[{','.join(node.group_by)}] aggs=[{aggs}]")
    if isinstance(node, Sort):
        keys = ",".join(f"{k.column} {'desc' if k.descending else 'asc'}" for k in node.keys)
        return OperatorId("Sort", keys)
    if isinstance(node, Limit):
        return OperatorId("Limit", str(node.n))
    if isinstance(node, (CacheRead, CacheWrite)):
        return OperatorId(node.op, node.cache_id)
    raise TypeError(f"unknown plan node {node!r}")


def is_commutative(node: PlanNode) -> bool:
    if isinstance(node, (Union, CartesianProduct)):
        return True
    if isinstance(node, Join):
        # column equalities are side-agnostic once canonicalized
        return all(isinstance(c, Compare) and c.op == "="
                   and isinstance(c.lhs, ColumnRef) and isinstance(c.rhs, ColumnRef)
                   for c in conjuncts(node.condition))
    return False


def _h(data: bytes) -> bytes:
    return hashlib.blake2b(data, digest_size=DIGEST_BYTES).digest()


def _child_order(node: PlanNode, digests: list[bytes]) -> list[int]:
    idx = list(range(len(digests)))
    if len(idx) == 2 and is_commutative(node):
        idx.sort(key=lambda i: digests[i])
    return idx


def fingerprint(node: PlanNode) -> Fingerprint:
    return Fingerprint(_digest(node))


def _digest(node: PlanNode) -> bytes:
    kids = [_digest(c) for c in node.children]
    payload = operator_id(node).render().encode()
    for i in _child_order(node, kids):
        payload += b"|" + kids[i]
    return _h(payload)


def fingerprint_all(node: PlanNode, path=()) -> dict:
    """Fingerprints of every sub-tree, keyed by path; one bottom-up pass."""
    out: dict = {}

    def go(n, p):
        kids = [go(c, p + (i,)) for i, c in enumerate(n.children)]
        payload = operator_id(n).render().encode()
        for i in _child_order(n, kids):
            payload += b"|" + kids[i]
        d = _h(payload)
        out[p] = Fingerprint(d)
        return d

    go(node, tuple(path))
    return out


def canonical_string(node: PlanNode) -> str:
    """The unhashed string the digest stands for (children in digest order).

    Used to audit for collisions: equal digests must mean equal strings.
    """
    kids = list(node.children)
    digests = [_digest(c) for c in kids]
    parts = [canonical_string(kids[i]) for i in _child_order(node, digests)]
    rid = operator_id(node).render()
    return rid if not parts else f"{rid}(" + "|".join(parts) + ")"


def orient(node: PlanNode) -> PlanNode:
    """Reorder commutative children into digest order, recursively.

    Two fingerprint-equal sub-trees become position-aligned after orienting.
    """
    kids = [orient(c) for c in node.children]
    if not kids:
        return node
    order = _child_order(node, [_digest(k) for k in kids])
    return node.with_children(*[kids[i] for i in order])
