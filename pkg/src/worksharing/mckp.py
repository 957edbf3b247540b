"""Multiple-choice 0/1 knapsack: pick at most one item per group under a byte budget.

The solver is a dynamic program over discretized capacity. Weights are
rounded up to multiples of ``ceil(c / units)`` so a selection that fits the
rounded instance always fits the true budget. Ties between equal-value
selections go to the lower true weight, then to the lexicographically
smallest choice vector (abstention sorts before any item).
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

import numpy as np

DEFAULT_UNITS = 4096
BRUTE_FORCE_LIMIT = 10**7

ABSTAIN = -1


class TooLarge(ValueError):
    pass


@dataclass(frozen=True)
class Selection:
    chosen: dict = field(default_factory=dict)  # group index -> item index
    total_value: float = 0.0
    total_weight: float = 0.0

    def to_json(self) -> dict:
        return {"chosen": {str(k): v for k, v in sorted(self.chosen.items())},
                "total_value": self.total_value, "total_weight": self.total_weight}


def _pairs(groups) -> list[list[tuple[float, float]]]:
    """Accept KnapsackGroup objects or plain lists of (value, weight)."""
    out = []
    for g in groups:
        items = getattr(g, "items", g)
        out.append([(float(it[0]), float(it[1])) if isinstance(it, tuple)
                    else (float(it.value), float(it.weight)) for it in items])
    return out


def _check(pairs, capacity) -> None:
    if capacity < 0:
        raise ValueError("capacity must be non-negative")
    for items in pairs:
        for v, w in items:
            if not w > 0:
                raise ValueError(f"item weight must be positive, got {w}")
            if not math.isfinite(v):
                raise ValueError(f"item value must be finite, got {v}")


def _selection(pairs, vector) -> Selection:
    # right fold, matching the order in which the DP accumulates suffix values
    value, weight = 0.0, 0.0
    for i in reversed(range(len(vector))):
        j = vector[i]
        if j != ABSTAIN:
            value = pairs[i][j][0] + value
            weight = pairs[i][j][1] + weight
    chosen = {i: j for i, j in enumerate(vector) if j != ABSTAIN}
    return Selection(chosen, value, weight)


def solve(groups, capacity: float, units: int = DEFAULT_UNITS) -> Selection:
    if units < 1:
        raise ValueError("units must be at least 1")
    pairs = _pairs(groups)
    _check(pairs, capacity)
    if capacity <= 0 or not pairs:
        return Selection()
    step = math.ceil(capacity / units)
    cap = int(capacity // step)
    g = len(pairs)
    caps = np.arange(cap + 1)

    # backward over groups: best[c] is the best suffix using rounded capacity <= c
    val = np.zeros(cap + 1)
    wt = np.zeros(cap + 1)
    choice = np.full((g, cap + 1), ABSTAIN, dtype=np.int32)
    for i in reversed(range(g)):
        nval, nwt = val.copy(), wt.copy()
        for j, (v, w) in enumerate(pairs[i]):
            if v <= 0:
                continue
            rw = math.ceil(w / step)
            if rw > cap:
                continue
            src = caps[rw:] - rw
            cv = v + val[src]
            cw = w + wt[src]
            cur_v, cur_w = nval[rw:], nwt[rw:]
            # items are visited in index order, so only strict improvements replace
            better = (cv > cur_v) | ((cv == cur_v) & (cw < cur_w))
            idx = np.nonzero(better)[0] + rw
            nval[idx] = cv[better]
            nwt[idx] = cw[better]
            choice[i, idx] = j
        val, wt = nval, nwt

    vector, c = [], cap
    for i in range(g):
        j = int(choice[i, c])
        vector.append(j)
        if j != ABSTAIN:
            c -= math.ceil(pairs[i][j][1] / step)
    return _selection(pairs, vector)


def brute_force(groups, capacity: float) -> Selection:
    """Exhaustive enumeration with the solver's tie-break, on true weights."""
    pairs = _pairs(groups)
    _check(pairs, capacity)
    combos = 1
    for items in pairs:
        combos *= len(items) + 1
    if combos > BRUTE_FORCE_LIMIT:
        raise TooLarge(f"{combos} combinations exceed {BRUTE_FORCE_LIMIT}")
    options = [[ABSTAIN] + [j for j, (v, _) in enumerate(items) if v > 0] for items in pairs]
    best, best_key = None, None
    for vector in itertools.product(*options):
        sel = _selection(pairs, vector)
        if sel.total_weight > capacity:
            continue
        key = (-sel.total_value, sel.total_weight, vector)
        if best_key is None or key < best_key:
            best, best_key = sel, key
    return best if best is not None else Selection()
