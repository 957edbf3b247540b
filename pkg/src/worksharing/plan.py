"""Logical plan IR: schemas, scalar expressions, relational operators.

Plans are immutable trees of frozen dataclasses. Structural equality is plain
``==``; a sub-tree is addressed by a :data:`NodePath` (tuple of child indices
from the root).
"""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass
from enum import Enum
from typing import Any, Iterator, Mapping, Optional, Union as TUnion


class PlanError(Exception):
    """Base class for plan construction and validation errors."""


class UnknownTable(PlanError):
    pass


class UnknownColumn(PlanError):
    pass


class TypeMismatch(PlanError):
    pass


class UnionSchemaMismatch(PlanError):
    pass


class InvalidPath(PlanError):
    pass


class DataType(str, Enum):
    INT64 = "Int64"
    FLOAT64 = "Float64"
    UTF8 = "Utf8"

    @property
    def numeric(self) -> bool:
        return self is not DataType.UTF8


@dataclass(frozen=True)
class Column:
    name: str
    dtype: DataType


@dataclass(frozen=True)
class Schema:
    columns: tuple[Column, ...]

    def __post_init__(self):
        if not self.columns:
            raise PlanError("schema must have at least one column")
        names = [c.name for c in self.columns]
        if len(set(names)) != len(names):
            dupes = sorted({n for n in names if names.count(n) > 1})
            raise PlanError(f"duplicate column names in schema: {dupes}")

    @classmethod
    def of(cls, *pairs: tuple[str, DataType | str]) -> "Schema":
        return cls(tuple(Column(n, DataType(t)) for n, t in pairs))

    @property
    def names(self) -> tuple[str, ...]:
        return tuple(c.name for c in self.columns)

    def __contains__(self, name: str) -> bool:
        return any(c.name == name for c in self.columns)

    def __len__(self) -> int:
        return len(self.columns)

    def __iter__(self) -> Iterator[Column]:
        return iter(self.columns)

    def dtype(self, name: str) -> DataType:
        for c in self.columns:
            if c.name == name:
                return c.dtype
        raise UnknownColumn(f"unknown column {name!r}; available: {list(self.names)}")

    def select(self, names) -> "Schema":
        return Schema(tuple(Column(n, self.dtype(n)) for n in names))

    def concat(self, other: "Schema") -> "Schema":
        return Schema(self.columns + other.columns)

    def to_json(self) -> list:
        return [[c.name, c.dtype.value] for c in self.columns]

    @classmethod
    def from_json(cls, data) -> "Schema":
        return cls.of(*[tuple(p) for p in data])


# ---------------------------------------------------------------------------
# Scalar expressions

COMPARE_OPS = ("=", "!=", "<", "<=", ">", ">=")
MIRROR_OP = {"=": "=", "!=": "!=", "<": ">", "<=": ">=", ">": "<", ">=": "<="}


@dataclass(frozen=True)
class ColumnRef:
    name: str


@dataclass(frozen=True)
class Literal:
    value: Any
    dtype: DataType

    @classmethod
    def of(cls, value) -> "Literal":
        if isinstance(value, bool):
            raise TypeMismatch("boolean literals are not supported")
        if isinstance(value, int):
            return cls(value, DataType.INT64)
        if isinstance(value, float):
            return cls(value, DataType.FLOAT64)
        if isinstance(value, str):
            return cls(value, DataType.UTF8)
        raise TypeMismatch(f"unsupported literal {value!r}")


@dataclass(frozen=True)
class Compare:
    op: str
    lhs: TUnion[ColumnRef, Literal]
    rhs: TUnion[ColumnRef, Literal]

    def __post_init__(self):
        if self.op not in COMPARE_OPS:
            raise PlanError(f"unknown comparison operator {self.op!r}")


@dataclass(frozen=True)
class And:
    children: tuple


@dataclass(frozen=True)
class Or:
    children: tuple


@dataclass(frozen=True)
class Not:
    child: Any


ScalarExpr = TUnion[ColumnRef, Literal, Compare, And, Or, Not]


def col(name: str) -> ColumnRef:
    return ColumnRef(name)


def lit(value) -> Literal:
    return Literal.of(value)


def cmp(op: str, lhs, rhs) -> Compare:
    """Build a comparison; bare strings become column refs, other values literals."""
    def operand(x):
        if isinstance(x, (ColumnRef, Literal)):
            return x
        if isinstance(x, str):
            return ColumnRef(x)
        return Literal.of(x)
    return Compare(op, operand(lhs), operand(rhs))


def conj(*exprs) -> ScalarExpr:
    return exprs[0] if len(exprs) == 1 else And(tuple(exprs))


def disj(*exprs) -> ScalarExpr:
    return exprs[0] if len(exprs) == 1 else Or(tuple(exprs))


def _render_literal(lit_: Literal) -> str:
    if lit_.dtype is DataType.INT64:
        return f"i:{lit_.value}"
    if lit_.dtype is DataType.FLOAT64:
        return f"f:{lit_.value!r}"
    return "s:" + json.dumps(lit_.value, ensure_ascii=False)


def expr_key(expr: ScalarExpr) -> str:
    """Prefix-notation serialization; on canonical forms this is the equality key."""
    if isinstance(expr, ColumnRef):
        return f"col:{expr.name}"
    if isinstance(expr, Literal):
        return _render_literal(expr)
    if isinstance(expr, Compare):
        return f"{expr.op} {expr_key(expr.lhs)} {expr_key(expr.rhs)}"
    if isinstance(expr, (And, Or)):
        tag = "and" if isinstance(expr, And) else "or"
        return f"({tag} " + " ".join(f"({expr_key(c)})" for c in expr.children) + ")"
    if isinstance(expr, Not):
        return f"(not ({expr_key(expr.child)}))"
    raise PlanError(f"not a scalar expression: {expr!r}")


def canonicalize(expr: ScalarExpr) -> ScalarExpr:
    """Flatten, sort and dedupe boolean structure; orient comparisons.

    Idempotent. Two predicates are considered equal iff their canonical forms
    are equal.
    """
    if isinstance(expr, (ColumnRef, Literal)):
        return expr
    if isinstance(expr, Compare):
        lhs, rhs, op = expr.lhs, expr.rhs, expr.op
        swap = False
        if isinstance(lhs, Literal) and isinstance(rhs, ColumnRef):
            swap = True
        elif type(lhs) is type(rhs) and expr_key(rhs) < expr_key(lhs):
            swap = True
        if swap:
            lhs, rhs, op = rhs, lhs, MIRROR_OP[op]
        return Compare(op, lhs, rhs)
    if isinstance(expr, Not):
        inner = canonicalize(expr.child)
        if isinstance(inner, Not):
            return inner.child
        return Not(inner)
    if isinstance(expr, (And, Or)):
        kind = type(expr)
        flat = []
        for child in expr.children:
            c = canonicalize(child)
            if isinstance(c, kind):
                flat.extend(c.children)
            else:
                flat.append(c)
        by_key = {}
        for c in flat:
            by_key.setdefault(expr_key(c), c)
        items = [by_key[k] for k in sorted(by_key)]
        if len(items) == 1:
            return items[0]
        return kind(tuple(items))
    raise PlanError(f"not a scalar expression: {expr!r}")


def conjuncts(expr: Optional[ScalarExpr]) -> list:
    if expr is None:
        return []
    expr = canonicalize(expr)
    return list(expr.children) if isinstance(expr, And) else [expr]


def disjuncts(expr: ScalarExpr) -> list:
    expr = canonicalize(expr)
    return list(expr.children) if isinstance(expr, Or) else [expr]


def expr_columns(expr: Optional[ScalarExpr]) -> set[str]:
    if expr is None:
        return set()
    if isinstance(expr, ColumnRef):
        return {expr.name}
    if isinstance(expr, Literal):
        return set()
    if isinstance(expr, Compare):
        return expr_columns(expr.lhs) | expr_columns(expr.rhs)
    if isinstance(expr, Not):
        return expr_columns(expr.child)
    out: set[str] = set()
    for c in expr.children:
        out |= expr_columns(c)
    return out


def _operand_type(x, schema: Schema) -> DataType:
    if isinstance(x, ColumnRef):
        return schema.dtype(x.name)
    if isinstance(x, Literal):
        return x.dtype
    raise TypeMismatch(f"comparison operands must be columns or literals, got {x!r}")


def check_predicate(expr: ScalarExpr, schema: Schema) -> None:
    """Raise unless ``expr`` is a well-typed boolean expression over ``schema``."""
    if isinstance(expr, Compare):
        lt, rt = _operand_type(expr.lhs, schema), _operand_type(expr.rhs, schema)
        if lt.numeric != rt.numeric:
            raise TypeMismatch(f"cannot compare {lt.value} with {rt.value} in {expr_key(expr)}")
    elif isinstance(expr, Not):
        check_predicate(expr.child, schema)
    elif isinstance(expr, (And, Or)):
        if not expr.children:
            raise PlanError("empty boolean connective")
        for c in expr.children:
            check_predicate(c, schema)
    else:
        raise TypeMismatch(f"not a predicate: {expr!r}")


def expr_to_json(expr: ScalarExpr) -> dict:
    if isinstance(expr, ColumnRef):
        return {"kind": "col", "name": expr.name}
    if isinstance(expr, Literal):
        return {"kind": "lit", "type": expr.dtype.value, "value": expr.value}
    if isinstance(expr, Compare):
        return {"kind": "cmp", "op": expr.op, "lhs": expr_to_json(expr.lhs),
                "rhs": expr_to_json(expr.rhs)}
    if isinstance(expr, (And, Or)):
        return {"kind": "and" if isinstance(expr, And) else "or",
                "children": [expr_to_json(c) for c in expr.children]}
    if isinstance(expr, Not):
        return {"kind": "not", "child": expr_to_json(expr.child)}
    raise PlanError(f"not a scalar expression: {expr!r}")


def expr_from_json(data: dict) -> ScalarExpr:
    kind = data["kind"]
    if kind == "col":
        return ColumnRef(data["name"])
    if kind == "lit":
        dtype = DataType(data["type"])
        value = data["value"]
        value = float(value) if dtype is DataType.FLOAT64 else value
        return Literal(value, dtype)
    if kind == "cmp":
        return Compare(data["op"], expr_from_json(data["lhs"]), expr_from_json(data["rhs"]))
    if kind in ("and", "or"):
        cls = And if kind == "and" else Or
        return cls(tuple(expr_from_json(c) for c in data["children"]))
    if kind == "not":
        return Not(expr_from_json(data["child"]))
    raise PlanError(f"unknown expression kind {kind!r}")


# ---------------------------------------------------------------------------
# Plan nodes

AGG_FUNCS = ("sum", "count", "min", "max")


@dataclass(frozen=True)
class AggSpec:
    func: str
    column: Optional[str]  # None only for count(*)
    output: str
    condition: Optional[ScalarExpr] = None  # lowered CASE WHEN ... THEN col

    def key(self) -> str:
        arg = "*" if self.column is None else f"col:{self.column}"
        s = f"{self.func}({arg})->{self.output}"
        if self.condition is not None:
            s += f" when ({expr_key(canonicalize(self.condition))})"
        return s


@dataclass(frozen=True)
class SortKey:
    column: str
    descending: bool = False


class PlanNode:
    """Mixin for all plan operators; subclasses are frozen dataclasses."""

    arity = 0
    _child_fields: tuple[str, ...] = ()

    @property
    def children(self) -> tuple["PlanNode", ...]:
        return tuple(getattr(self, f) for f in self._child_fields)

    def with_children(self, *children: "PlanNode") -> "PlanNode":
        if len(children) != len(self._child_fields):
            raise PlanError(f"{type(self).__name__} takes {len(self._child_fields)} children")
        return dataclasses.replace(self, **dict(zip(self._child_fields, children)))

    @property
    def op(self) -> str:
        return type(self).__name__


@dataclass(frozen=True)
class Scan(PlanNode):
    table: str


@dataclass(frozen=True)
class CacheRead(PlanNode):
    cache_id: str
    schema: Schema


@dataclass(frozen=True)
class Filter(PlanNode):
    predicate: ScalarExpr
    child: PlanNode
    arity = 1
    _child_fields = ("child",)


@dataclass(frozen=True)
class Project(PlanNode):
    columns: tuple[str, ...]
    child: PlanNode
    arity = 1
    _child_fields = ("child",)


@dataclass(frozen=True)
class Aggregate(PlanNode):
    group_by: tuple[str, ...]
    aggs: tuple[AggSpec, ...]
    child: PlanNode
    arity = 1
    _child_fields = ("child",)


@dataclass(frozen=True)
class Sort(PlanNode):
    keys: tuple[SortKey, ...]
    child: PlanNode
    arity = 1
    _child_fields = ("child",)


@dataclass(frozen=True)
class Limit(PlanNode):
    n: int
    child: PlanNode
    arity = 1
    _child_fields = ("child",)


@dataclass(frozen=True)
class CacheWrite(PlanNode):
    cache_id: str
    child: PlanNode
    arity = 1
    _child_fields = ("child",)


@dataclass(frozen=True)
class Join(PlanNode):
    """Inner equi-join; ``condition`` is a conjunction of column equalities."""
    condition: ScalarExpr
    left: PlanNode
    right: PlanNode
    arity = 2
    _child_fields = ("left", "right")


@dataclass(frozen=True)
class CartesianProduct(PlanNode):
    left: PlanNode
    right: PlanNode
    arity = 2
    _child_fields = ("left", "right")


@dataclass(frozen=True)
class Union(PlanNode):
    """Bag union (UNION ALL)."""
    left: PlanNode
    right: PlanNode
    arity = 2
    _child_fields = ("left", "right")


NodePath = tuple  # tuple[int, ...]


@dataclass(frozen=True)
class LogicalPlan:
    query_id: str
    root: PlanNode


# ---------------------------------------------------------------------------
# Traversal helpers

def walk(node: PlanNode, path: NodePath = ()) -> Iterator[tuple[NodePath, PlanNode]]:
    """Pre-order (path, node) pairs."""
    yield path, node
    for i, c in enumerate(node.children):
        yield from walk(c, path + (i,))


def node_count(node: PlanNode) -> int:
    return 1 + sum(node_count(c) for c in node.children)


def subtree_at(plan: LogicalPlan | PlanNode, path) -> PlanNode:
    node = plan.root if isinstance(plan, LogicalPlan) else plan
    for depth, idx in enumerate(path):
        kids = node.children
        if not 0 <= idx < len(kids):
            raise InvalidPath(f"path {list(path)} invalid at depth {depth}: "
                              f"{node.op} has {len(kids)} children")
        node = kids[idx]
    return node


def replace_at(node: PlanNode, path, new: PlanNode) -> PlanNode:
    if not path:
        return new
    kids = list(node.children)
    if not 0 <= path[0] < len(kids):
        raise InvalidPath(f"cannot descend into child {path[0]} of {node.op}")
    kids[path[0]] = replace_at(kids[path[0]], path[1:], new)
    return node.with_children(*kids)


def is_prefix(a, b) -> bool:
    return len(a) <= len(b) and tuple(b[: len(a)]) == tuple(a)


def join_key_pairs(condition: ScalarExpr) -> list[tuple[str, str]]:
    """Column pairs of an equi-join condition."""
    pairs = []
    for c in conjuncts(condition):
        if not (isinstance(c, Compare) and c.op == "="
                and isinstance(c.lhs, ColumnRef) and isinstance(c.rhs, ColumnRef)):
            raise PlanError(f"join condition must be column equalities, got {expr_key(c)}")
        pairs.append((c.lhs.name, c.rhs.name))
    return pairs


# ---------------------------------------------------------------------------
# Schema inference

Catalog = Mapping[str, Schema]


def output_schema(node: PlanNode, catalog: Catalog) -> Schema:
    return _infer(node, catalog, (), None)


def infer_schema(plan: LogicalPlan | PlanNode, catalog: Catalog) -> dict:
    """Annotate every node with its output schema, keyed by path."""
    root = plan.root if isinstance(plan, LogicalPlan) else plan
    out: dict = {}
    _infer(root, catalog, (), out)
    return out


def _agg_type(spec: AggSpec, schema: Schema) -> DataType:
    if spec.func not in AGG_FUNCS:
        raise PlanError(f"unknown aggregate {spec.func!r}")
    if spec.condition is not None:
        if spec.func not in ("sum", "count"):
            raise PlanError("conditional aggregates support sum and count only")
        check_predicate(spec.condition, schema)
    if spec.column is None:
        if spec.func != "count":
            raise PlanError(f"{spec.func}(*) is not valid")
        return DataType.INT64
    t = schema.dtype(spec.column)
    if spec.func == "count":
        return DataType.INT64
    if spec.func == "sum" and not t.numeric:
        raise TypeMismatch(f"sum over non-numeric column {spec.column!r}")
    return t


def _split_join_pairs(condition, left: Schema, right: Schema):
    out = []
    for a, b in join_key_pairs(condition):
        if a in left and b in right:
            out.append((a, b))
        elif b in left and a in right:
            out.append((b, a))
        else:
            for n in (a, b):
                if n not in left and n not in right:
                    raise UnknownColumn(f"unknown column {n!r} in join condition")
            raise PlanError(f"join condition {a} = {b} must reference one column per side")
        lt, rt = left.dtype(out[-1][0]), right.dtype(out[-1][1])
        if lt.numeric != rt.numeric:
            raise TypeMismatch(f"join keys {a}, {b} have incompatible types")
    return out


def _infer(node: PlanNode, catalog: Catalog, path, out) -> Schema:
    kids = [_infer(c, catalog, path + (i,), out) for i, c in enumerate(node.children)]
    if isinstance(node, Scan):
        if node.table not in catalog:
            raise UnknownTable(f"unknown table {node.table!r}")
        s = catalog[node.table]
    elif isinstance(node, CacheRead):
        s = node.schema
    elif isinstance(node, Filter):
        check_predicate(node.predicate, kids[0])
        s = kids[0]
    elif isinstance(node, Project):
        s = kids[0].select(node.columns)
    elif isinstance(node, Join):
        _split_join_pairs(node.condition, kids[0], kids[1])
        s = kids[0].concat(kids[1])
    elif isinstance(node, CartesianProduct):
        s = kids[0].concat(kids[1])
    elif isinstance(node, Union):
        if kids[0] != kids[1]:
            raise UnionSchemaMismatch(
                f"union inputs differ: {kids[0].to_json()} vs {kids[1].to_json()}")
        s = kids[0]
    elif isinstance(node, Aggregate):
        cols = [Column(g, kids[0].dtype(g)) for g in node.group_by]
        cols += [Column(a.output, _agg_type(a, kids[0])) for a in node.aggs]
        s = Schema(tuple(cols))
    elif isinstance(node, Sort):
        for k in node.keys:
            kids[0].dtype(k.column)
        s = kids[0]
    elif isinstance(node, Limit):
        if node.n < 0:
            raise PlanError("limit must be non-negative")
        s = kids[0]
    elif isinstance(node, CacheWrite):
        s = kids[0]
    else:
        raise PlanError(f"unknown plan node {node!r}")
    if out is not None:
        out[path] = s
    return s


# ---------------------------------------------------------------------------
# JSON serialization: {"op", "attrs", "children"}

def _attrs(node: PlanNode) -> dict:
    if isinstance(node, Scan):
        return {"table": node.table}
    if isinstance(node, CacheRead):
        return {"cache_id": node.cache_id, "schema": node.schema.to_json()}
    if isinstance(node, Filter):
        return {"predicate": expr_to_json(node.predicate)}
    if isinstance(node, Project):
        return {"columns": list(node.columns)}
    if isinstance(node, Join):
        return {"kind": "Inner", "condition": expr_to_json(node.condition)}
    if isinstance(node, Aggregate):
        return {"group_by": list(node.group_by), "aggs": [
            {"func": a.func, "column": a.column, "output": a.output,
             "condition": None if a.condition is None else expr_to_json(a.condition)}
            for a in node.aggs]}
    if isinstance(node, Sort):
        return {"keys": [[k.column, "desc" if k.descending else "asc"] for k in node.keys]}
    if isinstance(node, Limit):
        return {"n": node.n}
    if isinstance(node, CacheWrite):
        return {"cache_id": node.cache_id}
    return {}


def node_to_json(node: PlanNode) -> dict:
    return {"op": node.op, "attrs": _attrs(node),
            "children": [node_to_json(c) for c in node.children]}


def node_from_json(data: dict) -> PlanNode:
    op, a = data["op"], data.get("attrs", {})
    kids = [node_from_json(c) for c in data.get("children", [])]
    if op == "Scan":
        return Scan(a["table"])
    if op == "CacheRead":
        return CacheRead(a["cache_id"], Schema.from_json(a["schema"]))
    if op == "Filter":
        return Filter(expr_from_json(a["predicate"]), *kids)
    if op == "Project":
        return Project(tuple(a["columns"]), *kids)
    if op == "Join":
        return Join(expr_from_json(a["condition"]), *kids)
    if op == "CartesianProduct":
        return CartesianProduct(*kids)
    if op == "Union":
        return Union(*kids)
    if op == "Aggregate":
        aggs = tuple(AggSpec(x["func"], x["column"], x["output"],
                             None if x["condition"] is None else expr_from_json(x["condition"]))
                     for x in a["aggs"])
        return Aggregate(tuple(a["group_by"]), aggs, *kids)
    if op == "Sort":
        return Sort(tuple(SortKey(c, d == "desc") for c, d in a["keys"]), *kids)
    if op == "Limit":
        return Limit(int(a["n"]), *kids)
    if op == "CacheWrite":
        return CacheWrite(a["cache_id"], *kids)
    raise PlanError(f"unknown op {op!r}")


def plan_to_json(plan: LogicalPlan) -> dict:
    return {"query_id": plan.query_id, "plan": node_to_json(plan.root)}


def plan_from_json(data: dict) -> LogicalPlan:
    return LogicalPlan(data["query_id"], node_from_json(data["plan"]))


def dumps(obj) -> str:
    """Deterministic JSON rendering used for dumps and golden files."""
    return json.dumps(obj, sort_keys=True, indent=2, ensure_ascii=False)


def explain(node: PlanNode, indent: int = 0) -> str:
    """Human readable indented tree."""
    a = _attrs(node)
    if isinstance(node, Filter):
        detail = expr_key(canonicalize(node.predicate))
    elif isinstance(node, Join):
        detail = expr_key(canonicalize(node.condition))
    elif isinstance(node, Project):
        detail = ",".join(node.columns)
    elif isinstance(node, Aggregate):
        detail = f"by {list(node.group_by)} " + "; ".join(x.key() for x in node.aggs)
    elif isinstance(node, CacheRead):
        detail = node.cache_id
    else:
        detail = " ".join(f"{k}={v}" for k, v in a.items())
    line = "  " * indent + f"{node.op}[{detail}]" if detail else "  " * indent + node.op
    return "\n".join([line] + [explain(c, indent + 1) for c in node.children])
