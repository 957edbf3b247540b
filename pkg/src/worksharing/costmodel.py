"""Table statistics, cardinality estimation and covering-expression valuation.

Costs are abstract units: per-tuple CPU work, per-byte disk reads, per-byte
network transfer (charged on join inputs), and per-byte cache writes/reads.
"""

from __future__ import annotations

import json
import math
import warnings
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Mapping, Optional

import numpy as np

from .plan import (
    Aggregate, And, CacheWrite, CartesianProduct, ColumnRef, Compare, DataType, Filter,
    Join, Limit, Literal, MIRROR_OP, Not, Or, PlanError, PlanNode, Project, Scan, Schema, Sort,
    Union, join_key_pairs,
)

NUMERIC_WIDTH = 8
STRING_OVERHEAD = 4
DEFAULT_BUCKETS = 32
UNKNOWN_RANGE_SELECTIVITY = 1 / 3


class MissingStats(PlanError):
    def __init__(self, table: str):
        super().__init__(f"no statistics for table {table!r}")
        self.table = table


class EmptyRelation(ValueError):
    pass


@dataclass(frozen=True)
class CostConstants:
    cpu_per_tuple: float = 1.0
    disk_read_per_byte: float = 0.5
    net_per_byte: float = 1.0
    cache_write_per_byte: float = 0.25
    cache_read_per_byte: float = 0.05

    def __post_init__(self):
        for k, v in asdict(self).items():
            if not v > 0:
                raise ValueError(f"cost constant {k} must be > 0, got {v}")

    def validate(self, allow_slow_cache: bool = False) -> "CostConstants":
        if self.cache_read_per_byte >= self.disk_read_per_byte:
            msg = ("cache_read_per_byte >= disk_read_per_byte: caching can never pay off "
                   "under these constants")
            if not allow_slow_cache:
                raise ValueError(msg)
            warnings.warn(msg)
        return self

    def cache_write(self, nbytes: float) -> float:
        return self.cache_write_per_byte * nbytes

    def cache_read(self, nbytes: float) -> float:
        return self.cache_read_per_byte * nbytes

    @classmethod
    def from_dict(cls, data: Mapping) -> "CostConstants":
        known = {k: float(v) for k, v in data.items() if k in cls.__dataclass_fields__}
        return cls(**known)


# ---------------------------------------------------------------------------
# Statistics

@dataclass(frozen=True)
class ColumnStats:
    dtype: DataType
    distinct: int
    min: Optional[float] = None
    max: Optional[float] = None
    histogram: tuple = ()  # ((low, high, count), ...)
    avg_len: Optional[float] = None  # strings only

    @property
    def width(self) -> float:
        if self.dtype is DataType.UTF8:
            return (self.avg_len or 0.0) + STRING_OVERHEAD
        return NUMERIC_WIDTH

    def to_json(self) -> dict:
        d = asdict(self)
        d["dtype"] = self.dtype.value
        d["histogram"] = [list(b) for b in self.histogram]
        return d

    @classmethod
    def from_json(cls, d: Mapping) -> "ColumnStats":
        return cls(DataType(d["dtype"]), int(d["distinct"]), d.get("min"), d.get("max"),
                   tuple(tuple(b) for b in d.get("histogram", [])), d.get("avg_len"))


@dataclass(frozen=True)
class TableStats:
    row_count: int
    columns: dict  # name -> ColumnStats, in schema order

    @property
    def avg_record_size(self) -> float:
        return sum(c.width for c in self.columns.values())

    @property
    def schema(self) -> Schema:
        return Schema.of(*[(n, c.dtype) for n, c in self.columns.items()])

    def to_json(self) -> dict:
        return {"row_count": self.row_count, "avg_record_size": self.avg_record_size,
                "columns": {n: c.to_json() for n, c in self.columns.items()}}

    @classmethod
    def from_json(cls, d: Mapping) -> "TableStats":
        return cls(int(d["row_count"]),
                   {n: ColumnStats.from_json(c) for n, c in d["columns"].items()})

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_json(), indent=2, sort_keys=True))

    @classmethod
    def load(cls, path) -> "TableStats":
        return cls.from_json(json.loads(Path(path).read_text()))


def equi_width_histogram(values: np.ndarray, buckets: int) -> tuple:
    lo, hi = float(values.min()), float(values.max())
    if lo == hi:
        return ((lo, hi, int(values.size)),)
    counts, edges = np.histogram(values, bins=buckets, range=(lo, hi))
    return tuple((float(edges[i]), float(edges[i + 1]), int(counts[i])) for i in range(buckets))


def collect_stats(relation, buckets: int = DEFAULT_BUCKETS) -> TableStats:
    """Exact row count, min/max, distinct count and histogram per column."""
    if relation.row_count == 0:
        raise EmptyRelation("cannot collect statistics on an empty relation")
    cols = {}
    for column in relation.schema:
        values = relation.column(column.name)
        distinct = int(np.unique(values).size)
        if column.dtype.numeric:
            cols[column.name] = ColumnStats(
                column.dtype, distinct, float(values.min()), float(values.max()),
                equi_width_histogram(values, buckets))
        else:
            avg_len = float(np.char.str_len(values).mean())
            cols[column.name] = ColumnStats(column.dtype, distinct, avg_len=avg_len)
    return TableStats(relation.row_count, cols)


# ---------------------------------------------------------------------------
# Selectivity

def _mass_below(hist, value: float, inclusive: bool) -> float:
    total = sum(b[2] for b in hist)
    if total == 0:
        return 0.0
    acc = 0.0
    for low, high, count in hist:
        if high < value or (high == value and (inclusive or high > low)):
            acc += count
        elif low > value:
            continue
        elif high > low:
            acc += count * (value - low) / (high - low)
        elif inclusive and value == low:
            acc += count
    return min(1.0, acc / total)


def _range_selectivity(cs: ColumnStats, op: str, value) -> float:
    if not cs.dtype.numeric or not cs.histogram or not isinstance(value, (int, float)):
        return UNKNOWN_RANGE_SELECTIVITY
    v = float(value)
    if op == "<":
        return _mass_below(cs.histogram, v, False)
    if op == "<=":
        return _mass_below(cs.histogram, v, True)
    if op == ">":
        return 1.0 - _mass_below(cs.histogram, v, True)
    return 1.0 - _mass_below(cs.histogram, v, False)


def _eq_selectivity(cs: ColumnStats, value) -> float:
    if cs.dtype.numeric and cs.min is not None:
        if not (cs.min <= float(value) <= cs.max):
            return 0.0
    return 1.0 / max(cs.distinct, 1)


def _const_compare(op, a, b) -> bool:
    return {"=": a == b, "!=": a != b, "<": a < b, "<=": a <= b,
            ">": a > b, ">=": a >= b}[op]


def selectivity(expr, cols: Mapping[str, ColumnStats]) -> float:
    """Estimated fraction of rows satisfying ``expr`` (independence assumed)."""
    if isinstance(expr, Compare):
        lhs, rhs, op = expr.lhs, expr.rhs, expr.op
        if isinstance(lhs, Literal) and isinstance(rhs, ColumnRef):
            lhs, rhs, op = rhs, lhs, MIRROR_OP[op]
        if isinstance(lhs, ColumnRef) and isinstance(rhs, Literal):
            cs = cols[lhs.name]
            if op == "=":
                s = _eq_selectivity(cs, rhs.value)
            elif op == "!=":
                s = 1.0 - _eq_selectivity(cs, rhs.value)
            else:
                s = _range_selectivity(cs, op, rhs.value)
        elif isinstance(lhs, ColumnRef) and isinstance(rhs, ColumnRef):
            d = max(cols[lhs.name].distinct, cols[rhs.name].distinct, 1)
            if op == "=":
                s = 1.0 / d
            elif op == "!=":
                s = 1.0 - 1.0 / d
            else:
                s = UNKNOWN_RANGE_SELECTIVITY
        else:
            s = 1.0 if _const_compare(op, lhs.value, rhs.value) else 0.0
    elif isinstance(expr, And):
        s = 1.0
        for c in expr.children:
            s *= selectivity(c, cols)
    elif isinstance(expr, Or):
        s = 0.0
        for c in expr.children:
            sc = selectivity(c, cols)
            s = s + sc - s * sc
    elif isinstance(expr, Not):
        s = 1.0 - selectivity(expr.child, cols)
    else:
        raise PlanError(f"not a predicate: {expr!r}")
    return min(1.0, max(0.0, s))


# ---------------------------------------------------------------------------
# Cost estimation

@dataclass(frozen=True)
class CostEstimate:
    exec_cost: float
    out_rows: float
    out_row_size: float

    @property
    def out_bytes(self) -> float:
        return self.out_rows * self.out_row_size


@dataclass
class _Est:
    cost: float
    rows: float
    cols: dict = field(default_factory=dict)  # ordered name -> ColumnStats

    @property
    def row_size(self) -> float:
        return sum(c.width for c in self.cols.values())

    def capped(self, rows: float) -> dict:
        cap = max(1, int(math.ceil(rows)))
        return {n: replace(c, distinct=min(c.distinct, cap)) for n, c in self.cols.items()}


def schema_catalog(stats: Mapping[str, TableStats]) -> dict:
    return {t: s.schema for t, s in stats.items()}


def estimate(node: PlanNode, stats: Mapping[str, TableStats],
             consts: CostConstants = CostConstants()) -> CostEstimate:
    e = _estimate(node, stats, consts)
    return CostEstimate(e.cost, e.rows, e.row_size)


def _estimate(node: PlanNode, stats, consts: CostConstants) -> _Est:
    c = consts
    kids = [_estimate(k, stats, c) for k in node.children]
    if isinstance(node, Scan):
        if node.table not in stats:
            raise MissingStats(node.table)
        ts = stats[node.table]
        cols = dict(ts.columns)
        return _Est(c.disk_read_per_byte * ts.row_count * ts.avg_record_size,
                    float(ts.row_count), cols)
    if not kids:
        raise MissingStats(getattr(node, "cache_id", node.op))
    k = kids[0]
    if isinstance(node, Filter):
        rows = k.rows * selectivity(node.predicate, k.cols)
        return _Est(k.cost + c.cpu_per_tuple * k.rows, rows, k.capped(rows))
    if isinstance(node, Project):
        return _Est(k.cost + c.cpu_per_tuple * k.rows, k.rows,
                    {n: k.cols[n] for n in node.columns})
    if isinstance(node, (Join, CartesianProduct)):
        left, right = kids
        rows = left.rows * right.rows
        if isinstance(node, Join):
            for a, b in join_key_pairs(node.condition):
                da = (left.cols.get(a) or right.cols[a]).distinct
                db = (left.cols.get(b) or right.cols[b]).distinct
                rows /= max(da, db, 1)
        moved = left.rows * left.row_size + right.rows * right.row_size
        cost = (left.cost + right.cost + c.cpu_per_tuple * (left.rows + right.rows + rows)
                + c.net_per_byte * moved)
        merged = _Est(cost, rows, {**left.cols, **right.cols})
        merged.cols = merged.capped(rows)
        return merged
    if isinstance(node, Union):
        left, right = kids
        return _Est(left.cost + right.cost, left.rows + right.rows, dict(left.cols))
    if isinstance(node, Aggregate):
        groups = 1.0
        for g in node.group_by:
            groups *= k.cols[g].distinct
        rows = min(k.rows, groups)
        schema = Schema.of(*[(n, cs.dtype) for n, cs in k.cols.items()])
        cols = {g: k.cols[g] for g in node.group_by}
        cap = max(1, int(math.ceil(rows)))
        for a in node.aggs:
            if a.func in ("min", "max"):
                base = k.cols[a.column]
                cols[a.output] = replace(base, distinct=min(base.distinct, cap))
            else:
                dtype = DataType.INT64 if a.func == "count" else schema.dtype(a.column)
                cols[a.output] = ColumnStats(dtype, cap)
        est = _Est(k.cost + c.cpu_per_tuple * k.rows, rows, cols)
        est.cols = est.capped(rows)
        return est
    if isinstance(node, Sort):
        return _Est(k.cost + c.cpu_per_tuple * k.rows * math.log2(k.rows + 1), k.rows, k.cols)
    if isinstance(node, Limit):
        rows = min(float(node.n), k.rows)
        return _Est(k.cost, rows, k.capped(rows))
    if isinstance(node, CacheWrite):
        return k
    raise PlanError(f"cannot estimate {node.op}")


# ---------------------------------------------------------------------------
# Valuation of a covering expression

def se_cost(members, stats, consts: CostConstants = CostConstants()) -> float:
    """Cost of running every member sub-tree separately."""
    members = list(members)
    if not members:
        raise ValueError("a similar subexpression needs at least one member")
    return sum(estimate(m, stats, consts).exec_cost for m in members)


def ce_cost(exec_cost: float, nbytes: float, m: int,
            consts: CostConstants = CostConstants()) -> float:
    """Execute once, write the result to cache, and read it back ``m`` times."""
    if m < 1:
        raise ValueError("a covering expression needs at least one consumer")
    return exec_cost + consts.cache_write(nbytes) + m * consts.cache_read(nbytes)


@dataclass(frozen=True)
class Valuation:
    value: float
    weight: float
    se_cost: float
    ce_cost: float
    exec_cost: float
    out_rows: float
    out_row_size: float

    def to_json(self) -> dict:
        return asdict(self)


def value_weight(cover: PlanNode, members, stats,
                 consts: CostConstants = CostConstants()) -> Valuation:
    """Value = separate cost minus shared cost; weight = estimated cached bytes."""
    members = list(members)
    est = estimate(cover, stats, consts)
    nbytes = est.out_bytes
    separate = se_cost(members, stats, consts)
    shared = ce_cost(est.exec_cost, nbytes, len(members), consts)
    # an item must occupy some space in the knapsack
    weight = max(nbytes, 1.0)
    return Valuation(separate - shared, weight, separate, shared, est.exec_cost,
                     est.out_rows, est.out_row_size)
