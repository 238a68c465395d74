"""Transaction dependency graph: construction, predicted balances, pruning.

Predicted balances are worst-case. For node ``j`` and a key it consumes::

    B̂_j = B0 + Σ_{i ∈ anc(j)} (Δ⁺_i − Δ⁻_i) − Σ_{i concurrent with j} Δ⁻_i

where "concurrent" means neither ancestor nor descendant. Any topological
order runs every ancestor before ``j``, no descendant before it, and some
subset of the concurrent nodes, so ``B̂_j ≥ Δ⁻_j`` guarantees that ``j``
never underflows, whatever order the scheduler picks.
"""

from __future__ import annotations

import json
from collections.abc import Iterable, Mapping
from dataclasses import dataclass, field
from typing import Any

from intentkit.ledger.actions import LendingBorrow, StakeDeposit
from intentkit.optimizer.knapsack import greedy_knapsack, multiple_knapsack
from intentkit.tx import TransactionPlan

BalanceKey = tuple[str, str]  # (wallet, asset)
EXACT_PARENT_LIMIT = 12


@dataclass
class AssetFlowIndex:
    """Producers and consumers per ``(asset, wallet)`` in intent order."""

    inflows: dict[tuple[str, str], list[int]] = field(default_factory=dict)
    outflows: dict[tuple[str, str], list[int]] = field(default_factory=dict)

    def register(self, idx: int, plan: TransactionPlan) -> None:
        for w, a in plan.increases:
            self.inflows.setdefault((a, w), []).append(idx)
        for w, a in plan.decreases:
            self.outflows.setdefault((a, w), []).append(idx)


@dataclass
class PruneRecord:
    node: int
    removed: list[int]
    added: list[tuple[int, int]]


class DependencyGraph:
    def __init__(self, plans: Iterable[TransactionPlan], base_balances: Mapping[BalanceKey, int]) -> None:
        self.plans: list[TransactionPlan] = list(plans)
        n = len(self.plans)
        self.base = dict(base_balances)
        self.parents: list[set[int]] = [set() for _ in range(n)]
        self.children: list[set[int]] = [set() for _ in range(n)]
        self.pinned: set[tuple[int, int]] = set()
        self.flow = AssetFlowIndex()
        self.infeasible: set[int] = set()
        self.history: list[PruneRecord] = []
        self.predicted: list[dict[BalanceKey, int]] = [{} for _ in range(n)]
        self._anc: list[int] = [0] * n
        self._unsafe_at_start: set[int] = set()

    # -- structure ------------------------------------------------------------

    def __len__(self) -> int:
        return len(self.plans)

    def add_edge(self, p: int, c: int, *, pinned: bool = False) -> None:
        if p == c:
            raise ValueError("self loop")
        self.parents[c].add(p)
        self.children[p].add(c)
        if pinned:
            self.pinned.add((p, c))

    def remove_edge(self, p: int, c: int) -> None:
        self.parents[c].discard(p)
        self.children[p].discard(c)

    def edges(self) -> list[tuple[int, int]]:
        return sorted((p, c) for c in range(len(self)) for p in self.parents[c])

    def topological_order(self) -> list[int]:
        """Kahn's algorithm, smallest index first among ready nodes."""
        import heapq

        indeg = [len(ps) for ps in self.parents]
        heap = [i for i, d in enumerate(indeg) if d == 0]
        heapq.heapify(heap)
        out = []
        while heap:
            i = heapq.heappop(heap)
            out.append(i)
            for c in self.children[i]:
                indeg[c] -= 1
                if indeg[c] == 0:
                    heapq.heappush(heap, c)
        if len(out) != len(self):
            raise ValueError("dependency graph has a cycle")
        return out

    def ancestor_masks(self) -> list[int]:
        anc = [0] * len(self)
        for i in self.topological_order():
            m = 0
            for p in self.parents[i]:
                m |= anc[p] | (1 << p)
            anc[i] = m
        return anc

    def reaches(self, src: int, dst: int, anc: list[int] | None = None) -> bool:
        anc = anc if anc is not None else self.ancestor_masks()
        return bool(anc[dst] >> src & 1)

    def critical_path(self) -> int:
        """Longest path length in edges."""
        depth = [0] * len(self)
        for i in self.topological_order():
            for p in self.parents[i]:
                depth[i] = max(depth[i], depth[p] + 1)
        return max(depth, default=0)

    # -- predicted balances -------------------------------------------------------

    def _predict(self, j: int, anc: list[int]) -> dict[BalanceKey, int]:
        bit = 1 << j
        out = {}
        for key in self.plans[j].decreases:
            v = self.base.get(key, 0)
            for i, plan in enumerate(self.plans):
                if i == j:
                    continue
                if anc[j] >> i & 1:
                    v += plan.increases.get(key, 0) - plan.decreases.get(key, 0)
                elif not anc[i] & bit:
                    v -= plan.decreases.get(key, 0)
            out[key] = v
        return out

    def compute_predicted(self) -> list[dict[BalanceKey, int]]:
        """From-scratch predicted balances for every node."""
        anc = self.ancestor_masks()
        return [self._predict(j, anc) for j in range(len(self))]

    def refresh(self) -> None:
        self._anc = self.ancestor_masks()
        self.predicted = [self._predict(j, self._anc) for j in range(len(self))]

    def slack(self, j: int) -> dict[BalanceKey, int]:
        dec = self.plans[j].decreases
        return {k: self.predicted[j].get(k, 0) - dec[k] for k in dec}

    def is_safe(self, j: int, predicted: list[dict[BalanceKey, int]] | None = None) -> bool:
        pred = (predicted or self.predicted)[j]
        return all(pred.get(k, 0) >= n for k, n in self.plans[j].decreases.items())

    # -- pruning ------------------------------------------------------------------

    def _removal_candidates(self, j: int) -> tuple[list[int], list[dict[BalanceKey, int]]]:
        """Prunable parents of ``j`` (as knapsack packages) and what each costs ``j``.

        A parent that is also an ancestor of another parent stays an ancestor
        after its edge goes, so its package is empty. Any other parent turns
        concurrent with ``j``: ``j`` loses its credits and the parent must be
        able to absorb ``j``'s debits.
        """
        anc = self._anc
        consumed = self.plans[j].decreases
        ps = sorted(self.parents[j])
        covered = 0
        for q in ps:
            covered |= anc[q]
        cands, contents = [], []
        for p in ps:
            if (p, j) in self.pinned:
                continue
            if covered >> p & 1:
                cands.append(p)
                contents.append({})
                continue
            sp = self.slack(p)
            if any(v < consumed.get(k, 0) for k, v in sp.items()):
                continue
            cands.append(p)
            contents.append({k: n for k, n in self.plans[p].increases.items() if k in consumed and n > 0})
        return cands, contents

    def prune_node(self, j: int, *, verify: bool = True) -> PruneRecord:
        slack = self.slack(j)
        if any(v < 0 for v in slack.values()):
            self.infeasible.add(j)
            return PruneRecord(j, [], [])
        cands, contents = self._removal_candidates(j)
        if not cands:
            return PruneRecord(j, [], [])
        solver = multiple_knapsack if len(cands) <= EXACT_PARENT_LIMIT else greedy_knapsack
        picked = solver(contents, slack)
        removed = [cands[i] for i in picked]
        if not removed:
            return PruneRecord(j, [], [])
        saved = self._save()
        rec = self.remove_parents(j, removed, {cands[i]: contents[i] for i in picked})
        if verify and not self._consistent():
            self._restore(saved)
            return PruneRecord(j, [], [])
        self.history.append(rec)
        return rec

    def remove_parents(
        self, j: int, removed: list[int], contents: dict[int, dict[BalanceKey, int]] | None = None,
    ) -> PruneRecord:
        """Drop edges ``p -> j`` and rewire so that only ``removed`` leave ``j``'s ancestry."""
        anc = self._anc
        others = 0
        for q in self.parents[j]:
            if q not in removed:
                others |= anc[q] | (1 << q)
        redundant = {p for p in removed if others >> p & 1}
        lost = [p for p in removed if p not in redundant]
        for p in removed:
            self.remove_edge(p, j)
        added: list[tuple[int, int]] = []
        # (1) keep the removed parents' own parents ordered before j
        keep = others
        for p in lost:
            for g in sorted(self.parents[p]):
                if not keep >> g & 1:
                    self.add_edge(g, j)
                    added.append((g, j))
                    keep |= anc[g] | (1 << g)
        # (2) children of j must still follow the removed parents
        for c in sorted(self.children[j]):
            for p in lost:
                cov = 0
                for q in self.parents[c]:
                    cov |= self._anc_of(q) | (1 << q)
                if not cov >> p & 1:
                    self.add_edge(p, c)
                    added.append((p, c))
        self._anc = self.ancestor_masks()
        # (3) only j and the removed parents see their worst case change
        dec_j = self.plans[j].decreases
        for p in lost:
            gain = contents[p] if contents is not None else {
                k: n for k, n in self.plans[p].increases.items() if k in dec_j}
            for k, n in gain.items():
                self.predicted[j][k] -= n
            for k in self.plans[p].decreases:
                self.predicted[p][k] -= dec_j.get(k, 0)
        return PruneRecord(j, sorted(removed), added)

    def _anc_of(self, i: int) -> int:
        m = 0
        stack = list(self.parents[i])
        while stack:
            q = stack.pop()
            if not m >> q & 1:
                m |= 1 << q
                stack.extend(self.parents[q])
        return m

    def _save(self):
        return ([set(s) for s in self.parents], [set(s) for s in self.children],
                [dict(d) for d in self.predicted], list(self._anc))

    def _restore(self, saved) -> None:
        self.parents, self.children, self.predicted, self._anc = saved

    def _consistent(self) -> bool:
        """Incremental balances match a from-scratch pass and no safe node turned unsafe."""
        fresh = self.compute_predicted()
        if fresh != self.predicted:
            return False
        return all(i in self.infeasible or self.is_safe(i) for i in range(len(self))
                   if i not in self._unsafe_at_start)

    def prune(self, *, verify: bool = True) -> "DependencyGraph":
        """Process nodes in reverse topological order, removing redundant parents."""
        self.refresh()
        self._unsafe_at_start = {i for i in range(len(self)) if not self.is_safe(i)}
        for j in reversed(self.topological_order()):
            self.prune_node(j, verify=verify)
        return self

    # -- export -------------------------------------------------------------------

    def to_json(self) -> dict[str, Any]:
        return {
            "nodes": [
                {
                    "id": p.id, "intentIndex": p.intent_index, "kind": p.kind,
                    "parents": sorted(self.plans[q].id for q in self.parents[i]),
                    "predicted": [[w, a, str(v)] for (w, a), v in sorted(self.predicted[i].items())],
                    "infeasible": i in self.infeasible,
                }
                for i, p in enumerate(self.plans)
            ],
            "edges": [[self.plans[p].id, self.plans[c].id] for p, c in self.edges()],
        }

    def to_dot(self) -> str:
        lines = ["digraph tdg {", "  rankdir=LR;"]
        for i, p in enumerate(self.plans):
            style = ", color=red" if i in self.infeasible else ""
            lines.append(f'  n{i} [label="{p.intent_index}: {p.kind}"{style}];')
        for p, c in self.edges():
            attr = " [style=bold]" if (p, c) in self.pinned else ""
            lines.append(f"  n{p} -> n{c}{attr};")
        lines.append("}")
        return "\n".join(lines) + "\n"

    def dumps(self) -> str:
        return json.dumps(self.to_json(), sort_keys=True, separators=(",", ":"))


def _raises_collateral(plan: TransactionPlan, platform: str, wallet: str) -> bool:
    a = plan.action
    return isinstance(a, StakeDeposit) and a.platform == platform and a.wallet == wallet


def build_dependency_graph(
    plans: Iterable[TransactionPlan], base_balances: Mapping[BalanceKey, int],
) -> DependencyGraph:
    """Phase 1: asset-flow edges in intent order plus collateral-before-borrow edges."""
    ordered = sorted(plans, key=lambda p: p.intent_index)
    g = DependencyGraph(ordered, base_balances)
    for j, plan in enumerate(ordered):
        for w, a in sorted(plan.decreases):
            for p in g.flow.inflows.get((a, w), []):
                g.add_edge(p, j)
        if isinstance(plan.action, LendingBorrow):
            for p in range(j):
                if _raises_collateral(ordered[p], plan.action.platform, plan.action.wallet):
                    g.add_edge(p, j, pinned=True)
        g.flow.register(j, plan)
    g.refresh()
    return g


def base_balances_for(plans: Iterable[TransactionPlan], reader) -> dict[BalanceKey, int]:
    """B0 for every key some plan consumes, read from a state or snapshot."""
    keys = sorted({k for p in plans for k in p.decreases})
    return {(w, a): reader.balance(w, a) for w, a in keys}
