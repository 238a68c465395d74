"""Maximum-cardinality multi-dimensional 0/1 knapsack.

The DP keys states by the capacity-usage vector and keeps, for each state,
the largest number of packages reaching it plus the packages chosen.
"""

from __future__ import annotations

from collections.abc import Hashable, Mapping, Sequence

Contents = Mapping[Hashable, int]


def _state_key(usage: dict[Hashable, int], order: list[Hashable]) -> tuple[int, ...]:
    return tuple(usage[t] for t in order)


def multiple_knapsack(packages: Sequence[Contents], capacities: Contents) -> list[int]:
    """Indices of a largest subset of ``packages`` whose item sums fit ``capacities``.

    Item types missing from ``capacities`` have capacity 0. Ties between
    equally large subsets go to the state discovered first.
    """
    order = sorted(set(capacities) | {t for p in packages for t in p}, key=repr)
    caps = {t: capacities.get(t, 0) for t in order}
    init = _state_key({t: 0 for t in order}, order)
    dp: dict[tuple[int, ...], int] = {init: 0}
    chosen: dict[tuple[int, ...], list[int]] = {init: []}
    for idx, contents in enumerate(packages):
        # iterate a snapshot so a package cannot extend a state it already created
        for key, best, picked in [(k, v, chosen[k]) for k, v in dp.items()]:
            state = dict(zip(order, key))
            valid = True
            for item, count in contents.items():
                new = state[item] + count
                if new > caps[item]:
                    valid = False
                    break
                state[item] = new
            if not valid:
                continue
            new_key = _state_key(state, order)
            value = best + 1
            if new_key not in dp or value > dp[new_key]:
                dp[new_key] = value
                chosen[new_key] = picked + [idx]
    best = max(dp, key=lambda k: dp[k])  # first maximal entry in insertion order
    return chosen[best]


def greedy_knapsack(packages: Sequence[Contents], capacities: Contents) -> list[int]:
    """Smallest-total-first heuristic for large parent sets."""
    order = sorted(range(len(packages)), key=lambda i: (sum(packages[i].values()), i))
    used: dict[Hashable, int] = {}
    out = []
    for i in order:
        if all(used.get(t, 0) + n <= capacities.get(t, 0) for t, n in packages[i].items()):
            for t, n in packages[i].items():
                used[t] = used.get(t, 0) + n
            out.append(i)
    return sorted(out)


def fits(packages: Sequence[Contents], selected: Sequence[int], capacities: Contents) -> bool:
    used: dict[Hashable, int] = {}
    for i in selected:
        for t, n in packages[i].items():
            used[t] = used.get(t, 0) + n
    return all(n <= capacities.get(t, 0) for t, n in used.items())
