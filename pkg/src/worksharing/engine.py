"""In-memory columnar execution engine with a budgeted cache store.

Columns are numpy arrays: int64, float64, and fixed-width bytes for Utf8
(UTF-8 encoded; bytewise order equals code point order). Operator output
order is deterministic: filters preserve order, joins emit (left row, right
row) in ascending order, aggregates emit groups sorted by key, and sorts
break ties on every column.
"""

from __future__ import annotations

import csv
from collections import Counter
import json
import math
import time
import warnings
from dataclasses import asdict, dataclass, fields
from pathlib import Path
from typing import Mapping, Optional

import numpy as np

from .costmodel import NUMERIC_WIDTH, STRING_OVERHEAD, CostConstants
from .covering import SchemaMismatch
from .plan import (
    Aggregate, And, CacheRead, CacheWrite, CartesianProduct, Column, ColumnRef, Compare,
    DataType, Filter, Join, Limit, LogicalPlan, Not, Or, PlanNode,
    Project, Scan, Schema, Sort, Union, expr_columns, join_key_pairs,
)

NP_DTYPE = {DataType.INT64: np.int64, DataType.FLOAT64: np.float64}


class MissingCacheEntry(KeyError):
    pass


class CacheWriteTwice(RuntimeError):
    pass


class SpillWarning(UserWarning):
    pass


class ParseError(ValueError):
    def __init__(self, message: str, line: int):
        super().__init__(f"line {line}: {message}")
        self.line = line


def _empty(dtype: DataType) -> np.ndarray:
    return np.array([], dtype="S1") if dtype == DataType.UTF8 else np.array([], dtype=NP_DTYPE[dtype])


def _coerce(values, dtype: DataType) -> np.ndarray:
    if dtype == DataType.UTF8:
        arr = np.asarray(values)
        if arr.size == 0:
            return _empty(dtype)
        if arr.dtype.kind == "S":
            return arr
        return np.array([v.encode("utf-8") if isinstance(v, str) else bytes(v) for v in arr.tolist()])
    return np.asarray(values, dtype=NP_DTYPE[dtype])


class Relation:
    def __init__(self, schema: Schema, columns: Mapping[str, np.ndarray]):
        self.schema = schema
        self._cols = {c.name: _coerce(columns[c.name], c.dtype) for c in schema}
        lengths = {len(v) for v in self._cols.values()}
        if len(lengths) > 1:
            raise ValueError(f"columns have different lengths: {sorted(lengths)}")
        self.row_count = lengths.pop() if lengths else 0
        self._nbytes: dict = {}

    def column(self, name: str) -> np.ndarray:
        return self._cols[name]

    @property
    def columns(self) -> dict:
        return dict(self._cols)

    def column_nbytes(self, name: str) -> int:
        if name not in self._nbytes:
            dt = self.schema.dtype(name)
            if dt.numeric:
                self._nbytes[name] = NUMERIC_WIDTH * self.row_count
            else:
                v = self._cols[name]
                lens = int(np.char.str_len(v).sum()) if self.row_count else 0
                self._nbytes[name] = lens + STRING_OVERHEAD * self.row_count
        return self._nbytes[name]

    @property
    def nbytes(self) -> int:
        return sum(self.column_nbytes(n) for n in self.schema.names)

    def take(self, idx) -> "Relation":
        return Relation(self.schema, {n: v[idx] for n, v in self._cols.items()})

    def select(self, names) -> "Relation":
        return Relation(self.schema.select(tuple(names)), {n: self._cols[n] for n in names})

    def to_rows(self) -> list[tuple]:
        cols = []
        for c in self.schema:
            v = self._cols[c.name].tolist()
            cols.append([b.decode("utf-8") for b in v] if c.dtype == DataType.UTF8 else v)
        return list(zip(*cols)) if cols else []

    @classmethod
    def from_rows(cls, schema: Schema, rows) -> "Relation":
        rows = list(rows)
        cols = {c.name: [r[i] for r in rows] for i, c in enumerate(schema)}
        return cls(schema, cols)

    def __eq__(self, other) -> bool:
        if not isinstance(other, Relation) or self.schema != other.schema:
            return NotImplemented if not isinstance(other, Relation) else False
        return self.row_count == other.row_count and all(
            np.array_equal(self._cols[n], other._cols[n]) for n in self.schema.names)

    def __repr__(self) -> str:
        return f"Relation({self.schema.names}, rows={self.row_count})"


class CacheStore:
    """Write-once cache; going over budget records a spill instead of failing."""

    def __init__(self, budget: Optional[float] = None):
        self.budget = math.inf if budget is None else float(budget)
        self.entries: dict = {}
        self.used_bytes = 0
        self.spills = 0

    def write(self, cache_id: str, rel: Relation) -> int:
        if cache_id in self.entries:
            raise CacheWriteTwice(f"cache entry {cache_id!r} written twice")
        nbytes = rel.nbytes
        self.entries[cache_id] = (rel, nbytes)
        self.used_bytes += nbytes
        if self.used_bytes > self.budget:
            self.spills += 1
            warnings.warn(f"cache use {self.used_bytes} B exceeds budget {self.budget:.0f} B "
                          f"after writing {cache_id!r}", SpillWarning, stacklevel=2)
        return nbytes

    def read(self, cache_id: str) -> tuple:
        try:
            return self.entries[cache_id]
        except KeyError:
            raise MissingCacheEntry(cache_id) from None

    def __contains__(self, cache_id) -> bool:
        return cache_id in self.entries


@dataclass
class ExecMetrics:
    base_table_tuples_scanned: int = 0
    base_table_bytes_scanned: int = 0
    tuples_processed: int = 0
    cache_bytes_written: int = 0
    cache_bytes_read: int = 0
    wall_time: float = 0.0
    spills: int = 0

    def add(self, other: "ExecMetrics") -> "ExecMetrics":
        for f in fields(self):
            setattr(self, f.name, getattr(self, f.name) + getattr(other, f.name))
        return self

    def proxy_cost(self, consts: CostConstants = CostConstants()) -> float:
        """Deterministic stand-in for runtime, priced with the cost-model constants."""
        return (consts.disk_read_per_byte * self.base_table_bytes_scanned
                + consts.cpu_per_tuple * self.tuples_processed
                + consts.cache_write(self.cache_bytes_written)
                + consts.cache_read(self.cache_bytes_read))

    def to_json(self, consts: CostConstants = CostConstants()) -> dict:
        d = asdict(self)
        d["proxy_cost"] = self.proxy_cost(consts)
        return d


# ---------------------------------------------------------------------------
# Expressions

def _operand(x, rel: Relation):
    if isinstance(x, ColumnRef):
        return rel.column(x.name)
    if x.dtype == DataType.UTF8:
        return x.value.encode("utf-8")
    return x.value


_CMP = {"=": np.equal, "!=": np.not_equal, "<": np.less, "<=": np.less_equal,
        ">": np.greater, ">=": np.greater_equal}


def eval_predicate(expr, rel: Relation) -> np.ndarray:
    n = rel.row_count
    if isinstance(expr, Compare):
        out = _CMP[expr.op](_operand(expr.lhs, rel), _operand(expr.rhs, rel))
        return np.broadcast_to(np.asarray(out, dtype=bool), (n,)).copy()
    if isinstance(expr, And):
        mask = np.ones(n, dtype=bool)
        for c in expr.children:
            mask &= eval_predicate(c, rel)
        return mask
    if isinstance(expr, Or):
        mask = np.zeros(n, dtype=bool)
        for c in expr.children:
            mask |= eval_predicate(c, rel)
        return mask
    if isinstance(expr, Not):
        return ~eval_predicate(expr.child, rel)
    raise TypeError(f"not a predicate: {expr!r}")


# ---------------------------------------------------------------------------
# Operators

def _codes(*arrays, n: int = 0) -> tuple[np.ndarray, int]:
    """Dense group codes ordered by the arrays' values (first array most significant)."""
    if not arrays:
        return np.zeros(n, dtype=np.int64), 1 if n else 0
    n = len(arrays[0])
    ranks = [np.unique(a, return_inverse=True)[1].reshape(-1) for a in arrays]
    if len(ranks) == 1:
        r = ranks[0]
        return r, int(r.max()) + 1 if n else 0
    _, inv = np.unique(np.stack(ranks, axis=1), axis=0, return_inverse=True)
    inv = inv.reshape(-1)
    return inv, int(inv.max()) + 1 if n else 0


def _key_array(a: np.ndarray, b: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    if a.dtype.kind != b.dtype.kind and a.dtype.kind in "if" and b.dtype.kind in "if":
        return a.astype(np.float64), b.astype(np.float64)
    return a, b


def _join_indices(left: Relation, right: Relation, pairs) -> tuple[np.ndarray, np.ndarray]:
    nl = left.row_count
    arrays = []
    for lc, rc in pairs:
        a, b = _key_array(left.column(lc), right.column(rc))
        arrays.append(np.concatenate([a, b]))
    codes, _ = _codes(*arrays)
    lcode, rcode = codes[:nl], codes[nl:]
    order = np.argsort(rcode, kind="stable")
    sorted_r = rcode[order]
    lo = np.searchsorted(sorted_r, lcode, side="left")
    hi = np.searchsorted(sorted_r, lcode, side="right")
    counts = hi - lo
    total = int(counts.sum())
    li = np.repeat(np.arange(nl), counts)
    starts = np.repeat(lo - (np.cumsum(counts) - counts), counts)
    ri = order[starts + np.arange(total)] if total else np.array([], dtype=np.int64)
    return li, ri


def _concat_side(left: Relation, right: Relation, li, ri, schema: Schema) -> Relation:
    cols = {n: left.column(n)[li] for n in left.schema.names}
    cols.update({n: right.column(n)[ri] for n in right.schema.names})
    return Relation(schema, cols)


def _agg_schema(node: Aggregate, child: Schema) -> Schema:
    cols = [Column(g, child.dtype(g)) for g in node.group_by]
    for a in node.aggs:
        t = DataType.INT64 if a.func == "count" else child.dtype(a.column)
        cols.append(Column(a.output, t))
    return Schema(tuple(cols))


def _aggregate(node: Aggregate, rel: Relation, schema: Schema) -> Relation:
    n = rel.row_count
    if n == 0:
        return Relation(schema, {c.name: _empty(c.dtype) for c in schema})
    codes, g = _codes(*[rel.column(c) for c in node.group_by], n=n)
    first = np.full(g, n, dtype=np.int64)
    np.minimum.at(first, codes, np.arange(n))
    out = {c: rel.column(c)[first] for c in node.group_by}
    for spec in node.aggs:
        mask = eval_predicate(spec.condition, rel) if spec.condition is not None else None
        sel = codes if mask is None else codes[mask]
        if spec.func == "count":
            out[spec.output] = np.bincount(sel, minlength=g).astype(np.int64)
            continue
        vals = rel.column(spec.column)
        if mask is not None:
            vals = vals[mask]
        if spec.func == "sum":
            acc = np.zeros(g, dtype=vals.dtype)
            np.add.at(acc, sel, vals)
            out[spec.output] = acc
        else:
            order = np.lexsort((vals, sel))
            s = sel[order]
            if spec.func == "min":
                pick = np.searchsorted(s, np.arange(g), side="left")
            else:
                pick = np.searchsorted(s, np.arange(g), side="right") - 1
            out[spec.output] = vals[order[pick]]
    return Relation(schema, out)


def _sort(node: Sort, rel: Relation) -> Relation:
    if rel.row_count == 0:
        return rel
    keys = []
    for k in node.keys:
        r = np.unique(rel.column(k.column), return_inverse=True)[1].reshape(-1)
        keys.append(-r if k.descending else r)
    # remaining columns make the order total
    for name in rel.schema.names:
        keys.append(np.unique(rel.column(name), return_inverse=True)[1].reshape(-1))
    order = np.lexsort(tuple(reversed(keys)))
    return rel.take(order)


class Executor:
    def __init__(self, tables: Mapping[str, Relation], cache: Optional[CacheStore] = None,
                 columnar_scan: bool = False):
        self.tables = tables
        self.cache = cache if cache is not None else CacheStore()
        self.columnar_scan = columnar_scan
        self.catalog = {t: r.schema for t, r in tables.items()}

    def run(self, node: PlanNode, metrics: ExecMetrics) -> Relation:
        return self._exec(node, metrics, needed=None)

    def _scan(self, table: str, metrics: ExecMetrics, needed) -> Relation:
        rel = self.tables[table]
        metrics.base_table_tuples_scanned += rel.row_count
        names = rel.schema.names if needed is None or not self.columnar_scan else needed
        metrics.base_table_bytes_scanned += sum(rel.column_nbytes(c) for c in names)
        return rel

    def _exec(self, node: PlanNode, m: ExecMetrics, needed) -> Relation:
        if isinstance(node, Scan):
            return self._scan(node.table, m, needed)
        if isinstance(node, CacheRead):
            rel, nbytes = self.cache.read(node.cache_id)
            m.cache_bytes_read += nbytes
            return rel
        if isinstance(node, Project):
            child = node.child
            below = None
            if isinstance(child, Scan):
                below = node.columns
            elif isinstance(child, Filter) and isinstance(child.child, Scan):
                want = set(node.columns) | expr_columns(child.predicate)
                below = tuple(c for c in self.tables[child.child.table].schema.names if c in want)
            rel = self._exec(child, m, below)
            m.tuples_processed += rel.row_count
            return rel.select(node.columns)
        if isinstance(node, Filter):
            rel = self._exec(node.child, m, needed)
            m.tuples_processed += rel.row_count
            return rel.take(np.nonzero(eval_predicate(node.predicate, rel))[0])
        if isinstance(node, CacheWrite):
            rel = self._exec(node.child, m, None)
            m.cache_bytes_written += self.cache.write(node.cache_id, rel)
            return rel
        if isinstance(node, (Join, CartesianProduct)):
            left = self._exec(node.left, m, None)
            right = self._exec(node.right, m, None)
            schema = left.schema.concat(right.schema)
            if isinstance(node, Join):
                pairs = []
                for a, b in join_key_pairs(node.condition):
                    pairs.append((a, b) if a in left.schema else (b, a))
                li, ri = _join_indices(left, right, pairs)
            else:
                li = np.repeat(np.arange(left.row_count), right.row_count)
                ri = np.tile(np.arange(right.row_count), left.row_count)
            out = _concat_side(left, right, li, ri, schema)
            m.tuples_processed += left.row_count + right.row_count + out.row_count
            return out
        if isinstance(node, Union):
            left = self._exec(node.left, m, None)
            right = self._exec(node.right, m, None)
            m.tuples_processed += left.row_count + right.row_count
            return Relation(left.schema, {n: np.concatenate([left.column(n), right.column(n)])
                                          for n in left.schema.names})
        if isinstance(node, Aggregate):
            rel = self._exec(node.child, m, None)
            m.tuples_processed += rel.row_count
            return _aggregate(node, rel, _agg_schema(node, rel.schema))
        if isinstance(node, Sort):
            rel = self._exec(node.child, m, None)
            m.tuples_processed += rel.row_count
            return _sort(node, rel)
        if isinstance(node, Limit):
            rel = self._exec(node.child, m, None)
            m.tuples_processed += min(rel.row_count, node.n)
            return rel.take(np.arange(min(rel.row_count, node.n)))
        raise TypeError(f"unknown plan node {node!r}")


def execute(plan, tables: Mapping[str, Relation], cache: Optional[CacheStore] = None,
            columnar_scan: bool = False) -> tuple[Relation, ExecMetrics]:
    node = plan.root if isinstance(plan, LogicalPlan) else plan
    metrics = ExecMetrics()
    ex = Executor(tables, cache, columnar_scan)
    t0 = time.perf_counter()
    spills_before = ex.cache.spills
    rel = ex.run(node, metrics)
    metrics.wall_time = time.perf_counter() - t0
    metrics.spills = ex.cache.spills - spills_before
    return rel, metrics


# ---------------------------------------------------------------------------
# Batch execution

MODES = ("baseline", "full_cache", "worksharing")


@dataclass
class BatchRun:
    mode: str
    results: dict  # query_id -> Relation
    metrics: dict  # query_id -> ExecMetrics (cache plans charged to their first reader)
    cache: CacheStore

    @property
    def total(self) -> ExecMetrics:
        t = ExecMetrics()
        for m in self.metrics.values():
            t.add(m)
        return t


def full_cache_plans(batch, catalog) -> list[LogicalPlan]:
    """Cache every base table at its first scan and read it back afterwards."""
    seen: set = set()

    def go(node):
        if isinstance(node, Scan):
            cid = f"table:{node.table}"
            if node.table in seen:
                return CacheRead(cid, catalog[node.table])
            seen.add(node.table)
            return CacheWrite(cid, node)
        if not node.children:
            return node
        return node.with_children(*[go(c) for c in node.children])

    return [LogicalPlan(q.query_id, go(q.root)) for q in batch]


def run_batch(batch, tables: Mapping[str, Relation], mode: str = "baseline",
              budget: Optional[float] = None, optimized=None,
              columnar_scan: bool = False) -> BatchRun:
    if mode not in MODES:
        raise ValueError(f"mode must be one of {MODES}")
    cache = CacheStore(budget)
    ex = Executor(tables, cache, columnar_scan)
    results, metrics = {}, {}

    def run_one(node) -> tuple[Relation, ExecMetrics]:
        m = ExecMetrics()
        spills = cache.spills
        t0 = time.perf_counter()
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", SpillWarning)
            rel = ex.run(node, m)
        m.wall_time = time.perf_counter() - t0
        m.spills = cache.spills - spills
        return rel, m

    if mode == "worksharing":
        from .rewrite import schedule
        if optimized is None:
            raise ValueError("worksharing mode needs an optimized batch")
        pending = ExecMetrics()
        for kind, item in schedule(optimized):
            if kind == "cache":
                _, m = run_one(item.plan)
                pending.add(m)
            else:
                rel, m = run_one(item.root)
                results[item.query_id] = rel
                metrics[item.query_id] = m.add(pending)
                pending = ExecMetrics()
        return BatchRun(mode, results, metrics, cache)

    plans = full_cache_plans(batch, ex.catalog) if mode == "full_cache" else list(batch)
    for q in plans:
        rel, m = run_one(q.root)
        results[q.query_id] = rel
        metrics[q.query_id] = m
    return BatchRun(mode, results, metrics, cache)


# ---------------------------------------------------------------------------
# Result comparison

def _norm(v, digits: int = 9):
    if isinstance(v, float):
        if v == 0 or not math.isfinite(v):
            return float(v)
        return float(f"{v:.{digits}g}")
    return v


def canonical_rows(rows, ordered: bool = False, digits: int = 9):
    """Rows with floats rounded to ``digits`` significant digits.

    Returns a list when ``ordered``, otherwise a multiset (Counter).
    """
    out = [tuple(_norm(v, digits) for v in r) for r in rows]
    return out if ordered else Counter(out)


def _canonical_columns(rel: Relation, digits: int) -> list:
    cols = []
    for c in rel.schema:
        v = rel.column(c.name).tolist()
        if c.dtype == DataType.FLOAT64:
            v = [_norm(x, digits) for x in v]
        elif c.dtype == DataType.UTF8:
            v = [b.decode("utf-8") for b in v]
        cols.append(v)
    return cols


def same_result(a: Relation, b: Relation, ordered: bool = False, digits: int = 9) -> bool:
    """Multiset (or, with ``ordered``, list) equality up to float rounding."""
    if a.schema != b.schema or a.row_count != b.row_count:
        return False
    ra = list(zip(*_canonical_columns(a, digits)))
    rb = list(zip(*_canonical_columns(b, digits)))
    return ra == rb if ordered else Counter(ra) == Counter(rb)


# ---------------------------------------------------------------------------
# Data

def generate_synthetic(rows: int, seed: int = 0) -> Relation:
    """30 columns: n_i ints on [1, 10^(i+2)], d_i doubles on [0, 1], s_i 20-letter strings."""
    if rows < 1:
        raise ValueError("rows must be at least 1")
    rng = np.random.default_rng(seed)
    cols, cdefs = {}, []
    for i in range(1, 11):
        cols[f"n_{i}"] = rng.integers(1, 10 ** (i + 2), size=rows, endpoint=True, dtype=np.int64)
        cdefs.append(Column(f"n_{i}", DataType.INT64))
    for i in range(1, 11):
        cols[f"d_{i}"] = rng.random(rows)
        cdefs.append(Column(f"d_{i}", DataType.FLOAT64))
    for i in range(1, 11):
        letters = rng.integers(ord("a"), ord("z") + 1, size=(rows, 20), dtype=np.uint8)
        cols[f"s_{i}"] = letters.view("S20").reshape(rows)
        cdefs.append(Column(f"s_{i}", DataType.UTF8))
    return Relation(Schema(tuple(cdefs)), cols)


def load_csv(path, schema: Schema) -> Relation:
    path = Path(path)
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ParseError("missing header row", 1) from None
        if tuple(header) != schema.names:
            raise SchemaMismatch(f"{path.name}: header {header} does not match {list(schema.names)}")
        convert = [int if c.dtype == DataType.INT64 else float if c.dtype == DataType.FLOAT64
                   else str for c in schema]
        data = [[] for _ in schema]
        for row in reader:
            line = reader.line_num
            if not row:
                continue
            if len(row) != len(convert):
                raise ParseError(f"expected {len(convert)} fields, got {len(row)}", line)
            for i, (f, v) in enumerate(zip(convert, row)):
                try:
                    data[i].append(f(v))
                except ValueError:
                    raise ParseError(f"bad {schema.columns[i].dtype.value} value {v!r} "
                                     f"for column {schema.columns[i].name!r}", line) from None
    return Relation(schema, {c.name: data[i] for i, c in enumerate(schema)})


def write_csv(rel: Relation, path) -> None:
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(rel.schema.names)
        w.writerows((repr(v) if isinstance(v, float) else v for v in r) for r in rel.to_rows())


def save_native(rel: Relation, path) -> None:
    """Debug dump: schema JSON plus raw column vectors."""
    np.savez(path, __schema__=np.array(json.dumps(rel.schema.to_json())),
             **{f"c{i}": rel.column(n) for i, n in enumerate(rel.schema.names)})


def load_native(path) -> Relation:
    with np.load(path) as z:
        schema = Schema.from_json(json.loads(str(z["__schema__"])))
        return Relation(schema, {n: z[f"c{i}"] for i, n in enumerate(schema.names)})
