"""SQL subset parser and single-query optimizer.

Supported: SELECT [cols | * | SUM/COUNT/MIN/MAX(...)] FROM t1, t2, ...
[WHERE ...] [GROUP BY ...] [ORDER BY ... [ASC|DESC]] [LIMIT n].
``SUM(CASE WHEN cond THEN col [ELSE NULL] END)`` lowers to a conditional
aggregate. Equalities between columns of different tables become join
conditions; the join tree follows FROM order.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

from .plan import (
    AggSpec, Aggregate, And, CartesianProduct, CacheWrite, ColumnRef,
    Compare, Filter, Join, Limit, Literal, LogicalPlan, Not, Or, PlanError, PlanNode,
    Project, node_count, Scan, Sort, SortKey, Union, UnknownColumn, UnknownTable, canonicalize,
    conj, conjuncts, expr_columns, infer_schema, output_schema,
)


class SQLSyntaxError(PlanError):
    def __init__(self, message: str, position: int):
        super().__init__(f"{message} at position {position}")
        self.position = position


class AmbiguousColumn(PlanError):
    pass


KEYWORDS = {
    "select", "from", "where", "group", "by", "order", "limit", "and", "or", "not",
    "asc", "desc", "as", "case", "when", "then", "else", "end", "null",
    "sum", "count", "min", "max",
}

_TOKEN_RE = re.compile(r"""
    (?P<ws>\s+|--[^\n]*)
  | (?P<num>\d+\.\d*|\.\d+|\d+)
  | (?P<str>'(?:[^']|'')*')
  | (?P<ident>[A-Za-z_][A-Za-z0-9_]*)
  | (?P<op><=|>=|<>|!=|=|<|>)
  | (?P<punct>[(),.*;\-])
""", re.VERBOSE)


@dataclass(frozen=True)
class Token:
    kind: str  # num, str, ident, kw, op, punct, eof
    value: str
    pos: int


def tokenize(text: str) -> list[Token]:
    tokens, pos = [], 0
    while pos < len(text):
        m = _TOKEN_RE.match(text, pos)
        if not m:
            raise SQLSyntaxError(f"unexpected character {text[pos]!r}", pos)
        kind = m.lastgroup
        value = m.group()
        if kind == "ident":
            low = value.lower()
            tokens.append(Token("kw" if low in KEYWORDS else "ident", low, pos))
        elif kind == "str":
            tokens.append(Token("str", value[1:-1].replace("''", "'"), pos))
        elif kind != "ws":
            tokens.append(Token(kind, "!=" if value == "<>" else value, pos))
        pos = m.end()
    tokens.append(Token("eof", "", len(text)))
    return tokens


@dataclass
class _SelectItem:
    kind: str  # "star", "col", "agg"
    column: Optional[str] = None
    agg: Optional[AggSpec] = None
    alias: Optional[str] = None
    pos: int = 0


class _Parser:
    def __init__(self, text: str):
        self.toks = tokenize(text)
        self.i = 0

    @property
    def cur(self) -> Token:
        return self.toks[self.i]

    def advance(self) -> Token:
        t = self.toks[self.i]
        self.i += 1
        return t

    def accept(self, kind, value=None) -> Optional[Token]:
        t = self.cur
        if t.kind == kind and (value is None or t.value == value):
            return self.advance()
        return None

    def expect(self, kind, value=None) -> Token:
        t = self.accept(kind, value)
        if t is None:
            want = value or kind
            got = self.cur.value or self.cur.kind
            raise SQLSyntaxError(f"expected {want!r}, found {got!r}", self.cur.pos)
        return t

    def ident(self) -> str:
        t = self.expect("ident")
        if self.accept("punct", "."):
            # qualified name; the qualifier is checked by the translator
            return t.value + "." + self.expect("ident").value
        return t.value

    # statement -----------------------------------------------------------

    def statement(self):
        self.expect("kw", "select")
        items = [self.select_item()]
        while self.accept("punct", ","):
            items.append(self.select_item())
        self.expect("kw", "from")
        tables = [self.table_ref()]
        while self.accept("punct", ","):
            tables.append(self.table_ref())
        where = None
        if self.accept("kw", "where"):
            where = self.expr()
        group_by = []
        if self.accept("kw", "group"):
            self.expect("kw", "by")
            group_by.append(self.ident())
            while self.accept("punct", ","):
                group_by.append(self.ident())
        order_by = []
        if self.accept("kw", "order"):
            self.expect("kw", "by")
            order_by.append(self.order_item())
            while self.accept("punct", ","):
                order_by.append(self.order_item())
        limit = None
        if self.accept("kw", "limit"):
            limit = int(self.expect("num").value)
        self.accept("punct", ";")
        if self.cur.kind != "eof":
            raise SQLSyntaxError(f"unexpected {self.cur.value!r}", self.cur.pos)
        return items, tables, where, group_by, order_by, limit

    def table_ref(self) -> tuple[str, int]:
        t = self.expect("ident")
        return t.value, t.pos

    def order_item(self) -> SortKey:
        name = self.ident()
        desc = False
        if self.accept("kw", "desc"):
            desc = True
        else:
            self.accept("kw", "asc")
        return SortKey(name, desc)

    def alias(self) -> Optional[str]:
        if self.accept("kw", "as"):
            return self.expect("ident").value
        t = self.accept("ident")
        return t.value if t else None

    def select_item(self) -> _SelectItem:
        pos = self.cur.pos
        if self.accept("punct", "*"):
            return _SelectItem("star", pos=pos)
        t = self.cur
        if t.kind == "kw" and t.value in ("sum", "count", "min", "max"):
            self.advance()
            self.expect("punct", "(")
            column, cond = None, None
            if self.accept("punct", "*"):
                if t.value != "count":
                    raise SQLSyntaxError(f"{t.value}(*) is not valid", t.pos)
            elif self.accept("kw", "case"):
                if t.value not in ("sum", "count"):
                    raise SQLSyntaxError("CASE inside aggregates is supported for SUM and COUNT only", t.pos)
                self.expect("kw", "when")
                cond = self.expr()
                self.expect("kw", "then")
                column = self.ident()
                if self.accept("kw", "else"):
                    self.expect("kw", "null")
                self.expect("kw", "end")
            else:
                column = self.ident()
            self.expect("punct", ")")
            alias = self.alias()
            return _SelectItem("agg", agg=AggSpec(t.value, column, alias or "", cond),
                               alias=alias, pos=pos)
        name = self.ident()
        alias = self.alias()
        if alias is not None and alias != name.split(".")[-1]:
            raise SQLSyntaxError("column aliases are not supported (aggregate aliases are)", pos)
        return _SelectItem("col", column=name, pos=pos)

    # expressions ---------------------------------------------------------

    def expr(self):
        parts = [self.and_expr()]
        while self.accept("kw", "or"):
            parts.append(self.and_expr())
        return parts[0] if len(parts) == 1 else Or(tuple(parts))

    def and_expr(self):
        parts = [self.not_expr()]
        while self.accept("kw", "and"):
            parts.append(self.not_expr())
        return parts[0] if len(parts) == 1 else And(tuple(parts))

    def not_expr(self):
        if self.accept("kw", "not"):
            return Not(self.not_expr())
        if self.cur.kind == "punct" and self.cur.value == "(":
            self.advance()
            e = self.expr()
            self.expect("punct", ")")
            return e
        lhs = self.operand()
        op = self.expect("op").value
        rhs = self.operand()
        return Compare(op, lhs, rhs)

    def operand(self):
        t = self.cur
        if t.kind == "num":
            self.advance()
            return Literal.of(float(t.value) if "." in t.value else int(t.value))
        if t.kind == "punct" and t.value == "-":
            self.advance()
            n = self.expect("num").value
            return Literal.of(-float(n) if "." in n else -int(n))
        if t.kind == "str":
            self.advance()
            return Literal.of(t.value)
        if t.kind == "ident":
            return ColumnRef(self.ident())
        raise SQLSyntaxError(f"expected column or literal, found {t.value or t.kind!r}", t.pos)


def _resolve_names(expr, resolve):
    if isinstance(expr, ColumnRef):
        return ColumnRef(resolve(expr.name))
    if isinstance(expr, Literal):
        return expr
    if isinstance(expr, Compare):
        return Compare(expr.op, _resolve_names(expr.lhs, resolve), _resolve_names(expr.rhs, resolve))
    if isinstance(expr, Not):
        return Not(_resolve_names(expr.child, resolve))
    return type(expr)(tuple(_resolve_names(c, resolve) for c in expr.children))


def parse(sql_text: str, catalog, query_id: str = "q") -> LogicalPlan:
    """Parse one statement into an unoptimized :class:`LogicalPlan`."""
    items, tables, where, group_by, order_by, limit = _Parser(sql_text).statement()

    names = [t for t, _ in tables]
    for t, pos in tables:
        if t not in catalog:
            raise UnknownTable(f"unknown table {t!r} at position {pos}")
    if len(set(names)) != len(names):
        raise PlanError("self-joins are not supported")

    owner: dict[str, list[str]] = {}
    for t in names:
        for c in catalog[t].names:
            owner.setdefault(c, []).append(t)

    def table_of(name: str) -> str:
        if "." in name:
            q, c = name.split(".", 1)
            if q not in names:
                raise UnknownTable(f"unknown table qualifier {q!r}")
            if c not in catalog[q]:
                raise UnknownColumn(f"unknown column {name!r}")
            return q
        ts = owner.get(name)
        if not ts:
            raise UnknownColumn(f"unknown column {name!r}")
        if len(ts) > 1:
            raise AmbiguousColumn(f"column {name!r} is ambiguous between {ts}")
        return ts[0]

    def resolve(name: str) -> str:
        table_of(name)
        return name.split(".")[-1]

    # WHERE: split into join equalities and residual filters
    join_preds: list[tuple[frozenset, Compare]] = []
    residual = []
    if where is not None:
        for c in conjuncts(_resolve_names(where, resolve)):
            if (isinstance(c, Compare) and c.op == "=" and isinstance(c.lhs, ColumnRef)
                    and isinstance(c.rhs, ColumnRef)):
                ta, tb = table_of(c.lhs.name), table_of(c.rhs.name)
                if ta != tb:
                    join_preds.append((frozenset((ta, tb)), c))
                    continue
            residual.append(c)

    node: PlanNode = Scan(names[0])
    joined = {names[0]}
    for t in names[1:]:
        conds = [c for ts, c in join_preds if t in ts and ts <= joined | {t}]
        join_preds = [(ts, c) for ts, c in join_preds if not (t in ts and ts <= joined | {t})]
        node = Join(conj(*conds), node, Scan(t)) if conds else CartesianProduct(node, Scan(t))
        joined.add(t)
    residual.extend(c for _, c in join_preds)
    if residual:
        node = Filter(canonicalize(conj(*residual)), node)

    base = output_schema(node, catalog)
    group_by = [resolve(g) for g in group_by]
    aggs = [it for it in items if it.kind == "agg"]
    if aggs or group_by:
        specs, used = [], set(group_by)
        for it in aggs:
            a = it.agg
            column = resolve(a.column) if a.column else None
            cond = _resolve_names(a.condition, resolve) if a.condition is not None else None
            out = a.output or f"{a.func}_{column or 'star'}"
            base_out, n = out, 2
            while out in used:
                out, n = f"{base_out}_{n}", n + 1
            used.add(out)
            specs.append(AggSpec(a.func, column, out, cond))
            it.column = out
        for it in items:
            if it.kind == "star":
                raise SQLSyntaxError("SELECT * cannot be combined with aggregation", it.pos)
            if it.kind == "col":
                it.column = resolve(it.column)
                if it.column not in group_by:
                    raise PlanError(f"column {it.column!r} must appear in GROUP BY")
        node = Aggregate(tuple(group_by), tuple(specs), node)
        select = [it.column for it in items]
    else:
        select = []
        for it in items:
            if it.kind == "star":
                select.extend(base.names)
            else:
                select.append(resolve(it.column))
    node = Project(tuple(select), node)

    if order_by:
        out_schema = output_schema(node, catalog)
        keys = []
        for k in order_by:
            name = k.column.split(".")[-1]
            if name not in out_schema:
                raise UnknownColumn(f"ORDER BY column {k.column!r} is not in the select list")
            keys.append(SortKey(name, k.descending))
        node = Sort(tuple(keys), node)
    if limit is not None:
        node = Limit(limit, node)

    plan = LogicalPlan(query_id, node)
    infer_schema(plan, catalog)
    return plan


def split_statements(text: str) -> list[str]:
    """Split on ``;`` outside string literals; drop empty statements."""
    out, buf, in_str = [], [], False
    for ch in text:
        if ch == "'":
            in_str = not in_str
        if ch == ";" and not in_str:
            out.append("".join(buf))
            buf = []
        else:
            buf.append(ch)
    out.append("".join(buf))
    stripped = []
    for s in out:
        body = "\n".join(l for l in s.splitlines() if not l.strip().startswith("--")).strip()
        if body:
            stripped.append(s.strip())
    return stripped


def load_sql_dir(path) -> list[tuple[str, str]]:
    """(query_id, sql) pairs from ``*.sql`` files in name order.

    A file holding several statements yields ids ``<stem>_1``, ``<stem>_2``...
    """
    path = Path(path)
    files = [path] if path.is_file() else sorted(path.glob("*.sql"))
    out = []
    for f in files:
        stmts = split_statements(f.read_text(encoding="utf-8"))
        if len(stmts) == 1:
            out.append((f.stem, stmts[0]))
        else:
            out.extend((f"{f.stem}_{i}", s) for i, s in enumerate(stmts, 1))
    return out


# ---------------------------------------------------------------------------
# Single-query rewrite rules

def optimize_single(plan: LogicalPlan, catalog) -> LogicalPlan:
    """Apply pushdown, pruning and collapsing to a fixpoint."""
    root = plan.root
    for _ in range(node_count(root) + 4):
        new = _collapse(_prune(_pushdown(root, [], catalog), None, catalog))
        if new == root:
            break
        root = new
    result = LogicalPlan(plan.query_id, root)
    infer_schema(result, catalog)
    return result


def _wrap_filter(node: PlanNode, preds: list) -> PlanNode:
    if not preds:
        return node
    return Filter(canonicalize(conj(*preds)), node)


def _pushdown(node: PlanNode, preds: list, catalog) -> PlanNode:
    """Place each conjunct at the lowest node whose schema covers it."""
    if isinstance(node, Filter):
        return _pushdown(node.child, preds + conjuncts(node.predicate), catalog)
    if isinstance(node, (Project, Sort)):
        return node.with_children(_pushdown(node.children[0], preds, catalog))
    if isinstance(node, (Join, CartesianProduct)):
        ls = output_schema(node.left, catalog)
        rs = output_schema(node.right, catalog)
        lp, rp, keep = [], [], []
        for p in preds:
            cols = expr_columns(p)
            if cols and all(c in ls for c in cols):
                lp.append(p)
            elif cols and all(c in rs for c in cols):
                rp.append(p)
            else:
                keep.append(p)
        new = node.with_children(_pushdown(node.left, lp, catalog),
                                 _pushdown(node.right, rp, catalog))
        return _wrap_filter(new, keep)
    if isinstance(node, Union):
        return node.with_children(_pushdown(node.left, preds, catalog),
                                  _pushdown(node.right, preds, catalog))
    if isinstance(node, Aggregate):
        below = [p for p in preds if expr_columns(p) <= set(node.group_by)]
        above = [p for p in preds if not expr_columns(p) <= set(node.group_by)]
        new = node.with_children(_pushdown(node.child, below, catalog))
        return _wrap_filter(new, above)
    if isinstance(node, (Limit, CacheWrite)):
        return _wrap_filter(node.with_children(_pushdown(node.children[0], [], catalog)), preds)
    # leaves
    return _wrap_filter(node, preds)


def _is_scan_chain(node: PlanNode) -> bool:
    if isinstance(node, Filter):
        node = node.child
    return isinstance(node, Scan)


def _ordered(required, schema) -> tuple[str, ...]:
    cols = tuple(n for n in schema.names if n in required)
    return cols or schema.names[:1]


def _prune(node: PlanNode, required: Optional[set], catalog) -> PlanNode:
    """Narrow column flow to what ancestors need; ``None`` means everything."""
    if _is_scan_chain(node):
        if required is None:
            return node
        return Project(_ordered(required, output_schema(node, catalog)), node)
    if isinstance(node, Project):
        cols = node.columns if required is None else tuple(c for c in node.columns if c in required)
        cols = cols or node.columns[:1]
        return Project(cols, _prune(node.child, set(cols), catalog))
    if isinstance(node, Filter):
        need = None if required is None else required | expr_columns(node.predicate)
        return Filter(node.predicate, _prune(node.child, need, catalog))
    if isinstance(node, (Join, CartesianProduct)):
        ls = output_schema(node.left, catalog)
        rs = output_schema(node.right, catalog)
        if required is None:
            need = set(ls.names) | set(rs.names)
        else:
            need = set(required)
            if isinstance(node, Join):
                need |= expr_columns(node.condition)
        kids = []
        for child, schema in ((node.left, ls), (node.right, rs)):
            side = {c for c in need if c in schema}
            new = _prune(child, side, catalog)
            out = output_schema(new, catalog)
            if not isinstance(new, Project) and set(out.names) - side:
                new = Project(_ordered(side, out), new)
            kids.append(new)
        return node.with_children(*kids)
    if isinstance(node, Aggregate):
        need = set(node.group_by)
        for a in node.aggs:
            if a.column:
                need.add(a.column)
            need |= expr_columns(a.condition)
        return node.with_children(_prune(node.child, need, catalog))
    if isinstance(node, Sort):
        need = None if required is None else required | {k.column for k in node.keys}
        return node.with_children(_prune(node.child, need, catalog))
    if isinstance(node, Limit):
        return node.with_children(_prune(node.child, required, catalog))
    if isinstance(node, (Union, CacheWrite)):
        return node.with_children(*[_prune(c, None, catalog) for c in node.children])
    return node


def _collapse(node: PlanNode) -> PlanNode:
    kids = [_collapse(c) for c in node.children]
    node = node.with_children(*kids) if kids else node
    if isinstance(node, Filter):
        if isinstance(node.child, Filter):
            return Filter(canonicalize(And((node.predicate, node.child.predicate))), node.child.child)
        return Filter(canonicalize(node.predicate), node.child)
    if isinstance(node, Project) and isinstance(node.child, Project):
        return Project(node.columns, node.child.child)
    return node

