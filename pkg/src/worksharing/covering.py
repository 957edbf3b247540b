"""Covering expressions and grouped knapsack candidates.

A covering expression (CE) has the node structure shared by every member of a
similar subexpression; filter predicates are OR-ed and projection lists are
unioned so each member can be re-derived from the CE's output.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Mapping, Optional

from .costmodel import Valuation
from .fingerprint import operator_id, orient
from .plan import (
    Aggregate, CacheRead, Filter, Limit, LogicalPlan, Or, PlanError, PlanNode, Project,
    Union, canonicalize, conj, disjuncts, expr_columns, expr_key,
    is_prefix, node_count, node_to_json, output_schema, subtree_at,
)
from .sharing import SimilarSubexpr

MAX_GROUP_ITEMS = 64
MAX_ENUMERATED = 4096

# operators that do not let a row be traced back to a single input row
ROW_BLOCKING = (Aggregate, Limit, Union)


class InternalShapeMismatch(PlanError):
    """Members of one SE are not aligned; indicates a fingerprint bug."""


class NotCoverable(PlanError):
    """Members differ below an operator that prevents re-deriving them."""


class SchemaMismatch(PlanError):
    """An extraction plan cannot reproduce the original output schema."""


@dataclass(frozen=True)
class CoveringExpr:
    id: str
    plan: PlanNode
    source: SimilarSubexpr
    valuation: Optional[Valuation] = None

    @property
    def value(self) -> float:
        return self.valuation.value

    @property
    def weight(self) -> float:
        return self.valuation.weight

    @property
    def m(self) -> int:
        return self.source.m

    @property
    def members(self):
        return self.source.members

    @property
    def size(self) -> int:
        return node_count(self.plan)

    def sort_key(self):
        return (-self.size, -self.m, self.source.fingerprint.hex)

    def to_json(self) -> dict:
        d = {"id": self.id, "fingerprint": self.source.fingerprint.hex, "m": self.m,
             "members": [r.to_json() for r in self.members],
             "plan": node_to_json(self.plan)}
        if self.valuation is not None:
            d.update(self.valuation.to_json())
        return d


def member_trees(se: SimilarSubexpr, plans: Mapping[str, LogicalPlan]) -> list[PlanNode]:
    return [subtree_at(plans[r.query_id], r.path) for r in se.members]


def build_ce(se: SimilarSubexpr, plans: Mapping[str, LogicalPlan], catalog,
             ce_id: str = "ce") -> CoveringExpr:
    """OR filters and union projections position by position across members."""
    if se.m < 2:
        raise ValueError("a covering expression needs at least two members")
    nodes = [orient(t) for t in member_trees(se, plans)]
    cover, needed = _cover(nodes, catalog)
    try:
        out = output_schema(cover, catalog)
    except PlanError as exc:
        raise NotCoverable(f"covering plan is invalid: {exc}") from exc
    if not needed <= set(out.names):
        raise NotCoverable(f"columns {sorted(needed - set(out.names))} do not reach the output")
    return CoveringExpr(ce_id, cover, se)


def _cover(nodes: list[PlanNode], catalog) -> tuple[PlanNode, set]:
    first = nodes[0]
    if len({operator_id(n) for n in nodes}) != 1 or len({len(n.children) for n in nodes}) != 1:
        raise InternalShapeMismatch(
            f"members disagree at {first.op}: {sorted({operator_id(n).render() for n in nodes})}")
    results = [_cover([n.children[i] for n in nodes], catalog) for i in range(len(first.children))]
    kids = [r[0] for r in results]
    needed: set = set().union(*[r[1] for r in results]) if results else set()

    if isinstance(first, Filter):
        preds = [canonicalize(n.predicate) for n in nodes]
        if len({expr_key(p) for p in preds}) == 1:
            return Filter(preds[0], kids[0]), needed
        for p in preds:
            needed |= expr_columns(p)
        return Filter(canonicalize(Or(tuple(preds))), kids[0]), needed
    if isinstance(first, Project):
        child_schema = output_schema(kids[0], catalog)
        missing = needed - set(child_schema.names)
        if missing:
            raise NotCoverable(f"filter columns {sorted(missing)} are not available below a projection")
        want = set(needed)
        for n in nodes:
            want.update(n.columns)
        return Project(tuple(c for c in child_schema.names if c in want), kids[0]), needed
    if isinstance(first, ROW_BLOCKING) and needed:
        raise NotCoverable(f"members differ in filters below {first.op}")
    return (first.with_children(*kids) if kids else first), needed


# ---------------------------------------------------------------------------
# Extraction

class NotDerivable(PlanError):
    pass


def extraction_predicates(target: PlanNode, cover: PlanNode) -> list:
    """Conjuncts that recover ``target``'s rows from ``cover``'s output.

    Both trees must be oriented. Raises :class:`NotDerivable` when a target
    filter is not implied by the cover's filter at the same position, or when
    a differing filter sits below a row-blocking operator.
    """
    preds: list = []
    _collect(target, cover, preds, blocked=False)
    return preds


def _collect(t: PlanNode, c: PlanNode, preds: list, blocked: bool) -> None:
    if operator_id(t) != operator_id(c) or len(t.children) != len(c.children):
        raise NotDerivable(f"shape differs at {t.op} vs {c.op}")
    if isinstance(t, Filter):
        tp, cp = canonicalize(t.predicate), canonicalize(c.predicate)
        if tp != cp:
            if blocked:
                raise NotDerivable("differing filter below a row-blocking operator")
            cover_terms = {expr_key(d) for d in disjuncts(cp)}
            if not {expr_key(d) for d in disjuncts(tp)} <= cover_terms:
                raise NotDerivable(f"filter {expr_key(tp)} is not implied by {expr_key(cp)}")
            preds.append(tp)
    below = blocked or isinstance(t, ROW_BLOCKING)
    for tc, cc in zip(t.children, c.children):
        _collect(tc, cc, preds, below)


def extraction_plan(target: PlanNode, cover: PlanNode, cache_id: str, catalog) -> PlanNode:
    """Filter + restoring Project over a read of ``cover``'s cached output."""
    cache_schema = output_schema(cover, catalog)
    target_schema = output_schema(target, catalog)
    try:
        preds = extraction_predicates(orient(target), cover)
    except NotDerivable as exc:
        raise SchemaMismatch(str(exc)) from exc
    node: PlanNode = CacheRead(cache_id, cache_schema)
    if preds:
        node = Filter(canonicalize(conj(*preds)), node)
    node = Project(target_schema.names, node)
    try:
        got = output_schema(node, catalog)
    except PlanError as exc:
        raise SchemaMismatch(f"extraction cannot be evaluated on the cache: {exc}") from exc
    if got != target_schema:
        raise SchemaMismatch(f"extraction yields {got.to_json()}, expected {target_schema.to_json()}")
    return node


# ---------------------------------------------------------------------------
# Candidate generation

@dataclass(frozen=True)
class KnapsackItem:
    members: tuple  # CE ids
    value: float
    weight: float

    def to_json(self) -> dict:
        return {"members": list(self.members), "value": self.value, "weight": self.weight}


@dataclass
class KnapsackGroup:
    group_id: int
    items: list = field(default_factory=list)

    def to_json(self) -> dict:
        return {"group_id": self.group_id, "items": [i.to_json() for i in self.items]}


def find_descendants(ce: CoveringExpr, pool) -> list[CoveringExpr]:
    """CEs with a member strictly inside one of ``ce``'s members (same query)."""
    out = []
    for other in pool:
        if other.id == ce.id:
            continue
        if any(a.query_id == b.query_id and len(a.path) < len(b.path) and is_prefix(a.path, b.path)
               for a in ce.members for b in other.members):
            out.append(other)
    return out


def disjoint(a: CoveringExpr, b: CoveringExpr) -> bool:
    """No shared originating sub-tree and no containment between members."""
    for x in a.members:
        for y in b.members:
            if x.query_id == y.query_id and (is_prefix(x.path, y.path) or is_prefix(y.path, x.path)):
                return False
    return True


def _disjoint_compounds(desc: list[CoveringExpr]) -> list[tuple]:
    """Index tuples (size >= 2) of pairwise-disjoint descendants."""
    n = len(desc)
    ok = [[disjoint(desc[i], desc[j]) for j in range(n)] for i in range(n)]
    found: list[tuple] = []

    def extend(chosen: tuple, start: int):
        for j in range(start, n):
            if len(found) >= MAX_ENUMERATED:
                return
            if all(ok[i][j] for i in chosen):
                combo = chosen + (j,)
                if len(combo) >= 2:
                    found.append(combo)
                extend(combo, j + 1)

    extend((), 0)
    found.sort(key=lambda c: (len(c), c))
    return found


def _item(ces) -> KnapsackItem:
    return KnapsackItem(tuple(c.id for c in ces), sum(c.value for c in ces),
                        sum(c.weight for c in ces))


def _trim(items: list[KnapsackItem], limit: int) -> list[KnapsackItem]:
    head, rest = items[0], items[1:]
    kept = [it for it in rest
            if not any(o.weight < it.weight and o.value >= it.value for o in items)]
    if len(kept) + 1 > limit:
        kept.sort(key=lambda it: -(it.value / it.weight))
        kept = kept[: limit - 1]
        order = {id(it): i for i, it in enumerate(rest)}
        kept.sort(key=lambda it: order[id(it)])
    return [head] + kept


def generate_kp_items(ces, max_items: int = MAX_GROUP_ITEMS) -> list[KnapsackGroup]:
    """Group each largest remaining CE with its descendants and their disjoint compounds."""
    pool = sorted(ces, key=CoveringExpr.sort_key)
    groups: list[KnapsackGroup] = []
    while pool:
        top = pool.pop(0)
        desc = sorted(find_descendants(top, pool), key=CoveringExpr.sort_key)
        items = [_item([top])] + [_item([d]) for d in desc]
        items += [_item([desc[i] for i in combo]) for combo in _disjoint_compounds(desc)]
        if len(items) > max_items:
            items = _trim(items, max_items)
        groups.append(KnapsackGroup(len(groups), items))
        taken = {d.id for d in desc}
        pool = [c for c in pool if c.id not in taken]
    return groups


def with_valuation(ce: CoveringExpr, valuation: Valuation) -> CoveringExpr:
    return replace(ce, valuation=valuation)
