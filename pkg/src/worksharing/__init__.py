"""Batch multi-query optimization with cached covering subexpressions."""

__version__ = "0.1.0"

from .costmodel import CostConstants, TableStats, collect_stats
from .engine import Relation, execute, run_batch, same_result
from .pipeline import OptimizationResult, optimize_batch
from .plan import LogicalPlan, Schema, explain
from .sql import optimize_single, parse

__all__ = [
    "CostConstants", "LogicalPlan", "OptimizationResult", "Relation", "Schema", "TableStats",
    "collect_stats", "execute", "explain", "optimize_batch", "optimize_single", "parse",
    "run_batch", "same_result",
]
