import math
import random

import pytest
from hypothesis import given, settings, strategies as st

from worksharing.covering import KnapsackGroup, KnapsackItem
from worksharing.mckp import Selection, TooLarge, brute_force, solve


def random_instance(rng: random.Random, max_items: int = 12, max_weight: int = 60):
    """Integer weights, mixed-sign values, at most ``max_items`` items in total."""
    total = rng.randint(1, max_items)
    groups = []
    while total > 0:
        n = rng.randint(1, min(4, total))
        total -= n
        groups.append([(rng.randint(-5, 40), rng.randint(1, max_weight)) for _ in range(n)])
    capacity = rng.randint(0, max_weight * 3)
    return groups, capacity


def exactness(instances: int = 1000, seed: int = 0) -> int:
    """Count of instances where DP at byte granularity disagrees with brute force."""
    rng = random.Random(seed)
    bad = 0
    for _ in range(instances):
        groups, c = random_instance(rng)
        a = solve(groups, c, units=max(c, 1))
        b = brute_force(groups, c)
        if (a.chosen, a.total_value) != (b.chosen, b.total_value):
            bad += 1
    return bad


def rounding_bound(instances: int = 300, seed: int = 1, units: int = 4096) -> int:
    """Count of instances where the coarse DP falls below the shrunk-capacity optimum."""
    rng = random.Random(seed)
    bad = 0
    for _ in range(instances):
        groups, _ = random_instance(rng, max_weight=10**6)
        c = rng.randint(10**5, 3 * 10**6)
        g = len(groups)
        shrunk = c - g * math.ceil(c / units)
        got = solve(groups, c, units=units)
        oracle = brute_force(groups, shrunk).total_value if shrunk >= 0 else 0.0
        true_weight = sum(groups[i][j][1] for i, j in got.chosen.items())
        if got.total_value < oracle or true_weight > c:
            bad += 1
    return bad


def test_examples():
    assert solve([[(5, 3)]], 0) == Selection()
    one = [[(5, 3), (9, 7)]]
    assert solve(one, 6, units=6).chosen == {0: 0}
    two = [[(4, 2), (6, 5)], [(3, 2)]]
    sel = solve(two, 7, units=7)
    assert sel.chosen == {0: 1, 1: 0} and sel.total_value == 9 and sel.total_weight == 7
    assert solve([[(-1, 1), (0, 2)], [(-3, 1)]], 10) == Selection()
    for groups, c in ((one, 6), (two, 7)):
        assert brute_force(groups, c) == solve(groups, c, units=c)
    assert brute_force([], 10) == Selection()
    assert solve([], 10) == Selection()


def test_knapsack_groups_accepted():
    groups = [KnapsackGroup(0, [KnapsackItem(("a",), 5.0, 3.0), KnapsackItem(("b",), 9.0, 7.0)])]
    assert solve(groups, 6, units=6).chosen == {0: 0}


def test_tie_break():
    # equal value: lower weight wins, then the earlier choice vector
    assert solve([[(5, 4), (5, 2)]], 10, units=10).chosen == {0: 1}
    assert solve([[(5, 2)], [(5, 2)]], 2, units=2).chosen == {1: 0}
    assert brute_force([[(5, 2)], [(5, 2)]], 2).chosen == {1: 0}


def test_errors():
    with pytest.raises(ValueError):
        solve([[(1, 0)]], 5)
    with pytest.raises(ValueError):
        solve([[(1, 1)]], -1)
    with pytest.raises(ValueError):
        solve([[(1, 1)]], 5, units=0)
    with pytest.raises(TooLarge):
        brute_force([[(1, 1)] * 9] * 8, 5)


def test_exactness_differential():
    assert exactness(1000) == 0


def test_eight_groups_differential():
    rng = random.Random(8)
    for _ in range(200):
        groups = [[(rng.randint(0, 30), rng.randint(1, 20)) for _ in range(rng.randint(1, 3))]
                  for _ in range(8)]
        c = rng.randint(1, 80)
        assert solve(groups, c, units=c) == brute_force(groups, c)


def test_rounding_bound():
    assert rounding_bound(200) == 0


@settings(max_examples=300, deadline=None)
@given(st.integers(0, 10**6), st.integers(1, 64))
def test_feasible_and_consistent(seed, units):
    groups, c = random_instance(random.Random(seed), max_weight=10**4)
    sel = solve(groups, c, units=units)
    assert len(sel.chosen) <= len(groups)
    assert sel.total_weight <= c
    assert sel.total_value == pytest.approx(sum(groups[i][j][0] for i, j in sel.chosen.items()))
    assert sel.total_weight == pytest.approx(sum(groups[i][j][1] for i, j in sel.chosen.items()))
    assert all(groups[i][j][0] > 0 for i, j in sel.chosen.items())


@settings(max_examples=200, deadline=None)
@given(st.integers(0, 10**6))
def test_monotone_in_capacity(seed):
    rng = random.Random(seed)
    groups, c = random_instance(rng)
    values = [solve(groups, x, units=max(x, 1)).total_value for x in range(0, c + 20, 5)]
    assert values == sorted(values)
