"""End-to-end batch optimization: identify, cover, value, select, rewrite."""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Mapping

from .costmodel import CostConstants, TableStats, schema_catalog, value_weight
from .covering import NotCoverable, build_ce, generate_kp_items, member_trees, with_valuation
from .mckp import DEFAULT_UNITS, Selection, solve
from .rewrite import OptimizedBatch, build_cache_plans, rewrite_queries, selected_ces
from .sharing import identify_ses

log = logging.getLogger(__name__)


@dataclass
class OptimizationResult:
    ses: list
    ces: list
    skipped: list  # (SimilarSubexpr, reason)
    groups: list
    selection: Selection
    chosen: list
    optimized: OptimizedBatch
    budget: float

    @property
    def estimated_savings(self) -> float:
        return self.selection.total_value

    def summary(self) -> dict:
        return {
            "se_count": len(self.ses), "ce_count": len(self.ces),
            "skipped_ses": [{"fingerprint": se.fingerprint.hex, "reason": r}
                            for se, r in self.skipped],
            "group_count": len(self.groups),
            "selected_ces": [c.id for c in self.chosen],
            "cache_plans": [c.cache_id for c in self.optimized.cache_plans],
            "selected_weight": self.selection.total_weight,
            "estimated_savings": self.estimated_savings,
            "budget": self.budget,
        }


def build_ces(ses, plans: Mapping, stats: Mapping[str, TableStats],
              consts: CostConstants) -> tuple[list, list]:
    catalog = schema_catalog(stats)
    ces, skipped = [], []
    for se in ses:
        try:
            ce = build_ce(se, plans, catalog, ce_id=f"ce{len(ces) + 1}")
        except NotCoverable as exc:
            log.info("skipping SE %s: %s", se.fingerprint.hex[:8], exc)
            skipped.append((se, str(exc)))
            continue
        members = member_trees(se, plans)
        ces.append(with_valuation(ce, value_weight(ce.plan, members, stats, consts)))
    return ces, skipped


def optimize_batch(batch, stats: Mapping[str, TableStats], budget: float, k: int = 2,
                   units: int = DEFAULT_UNITS,
                   consts: CostConstants = CostConstants()) -> OptimizationResult:
    batch = list(batch)
    if budget < 0:
        raise ValueError("budget must be non-negative")
    plans = {q.query_id: q for q in batch}
    if len(plans) != len(batch):
        raise ValueError("query ids must be unique within a batch")
    catalog = schema_catalog(stats)
    ses = identify_ses(batch, k)
    ces, skipped = build_ces(ses, plans, stats, consts)
    groups = generate_kp_items(ces)
    selection = solve(groups, budget, units)
    chosen = selected_ces(selection, groups, ces)
    cache_plans = build_cache_plans(chosen, catalog)
    optimized = rewrite_queries(batch, chosen, cache_plans, catalog)
    return OptimizationResult(ses, ces, skipped, groups, selection, chosen, optimized, budget)
