"""Naive row-at-a-time interpreter used as an oracle for the columnar engine.

Rows are dicts; every operator is a plain Python loop. It shares the engine's
ordering conventions so Limit without Sort is comparable too.
"""

from __future__ import annotations

from .plan import (
    Aggregate, And, CacheRead, CacheWrite, CartesianProduct, ColumnRef, Compare, Filter, Join,
    Limit, Not, Or, Project, Scan, Sort, Union, join_key_pairs,
)

_OPS = {
    "=": lambda a, b: a == b, "!=": lambda a, b: a != b, "<": lambda a, b: a < b,
    "<=": lambda a, b: a <= b, ">": lambda a, b: a > b, ">=": lambda a, b: a >= b,
}


def _val(x, row):
    return row[x.name] if isinstance(x, ColumnRef) else x.value


def holds(expr, row) -> bool:
    if isinstance(expr, Compare):
        return _OPS[expr.op](_val(expr.lhs, row), _val(expr.rhs, row))
    if isinstance(expr, And):
        return all(holds(c, row) for c in expr.children)
    if isinstance(expr, Or):
        return any(holds(c, row) for c in expr.children)
    if isinstance(expr, Not):
        return not holds(expr.child, row)
    raise TypeError(expr)


def evaluate(node, tables: dict, cache: dict | None = None) -> tuple[list, list[dict]]:
    """Return (column names, rows). ``tables`` maps name -> (names, list of tuples)."""
    cache = {} if cache is None else cache
    names, rows = _eval(node, tables, cache)
    return names, rows


def _eval(node, tables, cache):
    if isinstance(node, Scan):
        names, tuples = tables[node.table]
        return list(names), [dict(zip(names, t)) for t in tuples]
    if isinstance(node, CacheRead):
        return cache[node.cache_id]
    if isinstance(node, CacheWrite):
        out = _eval(node.child, tables, cache)
        cache[node.cache_id] = out
        return out
    if isinstance(node, Filter):
        names, rows = _eval(node.child, tables, cache)
        return names, [r for r in rows if holds(node.predicate, r)]
    if isinstance(node, Project):
        _, rows = _eval(node.child, tables, cache)
        return list(node.columns), [{c: r[c] for c in node.columns} for r in rows]
    if isinstance(node, Join):
        ln, lrows = _eval(node.left, tables, cache)
        rn, rrows = _eval(node.right, tables, cache)
        pairs = [(a, b) if a in ln else (b, a) for a, b in join_key_pairs(node.condition)]
        out = [{**l, **r} for l in lrows for r in rrows if all(l[a] == r[b] for a, b in pairs)]
        return ln + rn, out
    if isinstance(node, CartesianProduct):
        ln, lrows = _eval(node.left, tables, cache)
        rn, rrows = _eval(node.right, tables, cache)
        return ln + rn, [{**l, **r} for l in lrows for r in rrows]
    if isinstance(node, Union):
        names, lrows = _eval(node.left, tables, cache)
        _, rrows = _eval(node.right, tables, cache)
        return names, lrows + rrows
    if isinstance(node, Aggregate):
        _, rows = _eval(node.child, tables, cache)
        groups: dict = {}
        for r in rows:
            groups.setdefault(tuple(r[g] for g in node.group_by), []).append(r)
        out = []
        for key in sorted(groups):
            members = groups[key]
            row = dict(zip(node.group_by, key))
            for a in node.aggs:
                sel = [r for r in members if a.condition is None or holds(a.condition, r)]
                if a.func == "count":
                    row[a.output] = len(sel)
                elif a.func == "sum":
                    total = 0 if not sel or isinstance(sel[0][a.column], int) else 0.0
                    for r in sel:
                        total += r[a.column]
                    row[a.output] = total
                elif a.func == "min":
                    row[a.output] = min(r[a.column] for r in sel)
                else:
                    row[a.output] = max(r[a.column] for r in sel)
            out.append(row)
        return list(node.group_by) + [a.output for a in node.aggs], out
    if isinstance(node, Sort):
        names, rows = _eval(node.child, tables, cache)
        # stable sorts from the least significant key up
        rows = sorted(rows, key=lambda r: tuple(r[n] for n in names))
        for k in reversed(node.keys):
            rows = sorted(rows, key=lambda r: r[k.column], reverse=k.descending)
        return names, rows
    if isinstance(node, Limit):
        names, rows = _eval(node.child, tables, cache)
        return names, rows[: node.n]
    raise TypeError(f"unknown plan node {node!r}")


def result_tuples(names, rows) -> list[tuple]:
    return [tuple(r[n] for n in names) for r in rows]
