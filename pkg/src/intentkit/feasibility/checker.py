"""Mempool-aware success estimation for a signed transaction.

The checker predicts which pending transactions land next, keeps the ones
connected to the target through shared wallets or market objects, and
simulates the target behind seeded random orderings of that set on a
forked state. The live ledger is never touched.
"""

from __future__ import annotations

import hashlib
import random
import time
from collections.abc import Iterable, Sequence
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Any

from intentkit.ledger import actions as A
from intentkit.ledger.execution import apply_transaction, pack
from intentkit.ledger.state import LedgerState, pair_id
from intentkit.tx import SignedTransaction

LOW, WARN, HIGH = "LOW", "WARN", "HIGH"


class SimulationError(Exception):
    pass


@dataclass(frozen=True)
class FeasibilityConfig:
    k: float = 1.0
    contexts: int = 20
    theta_high: float = 0.9
    theta_low: float = 0.5
    seed: int = 0

    def __post_init__(self) -> None:
        if not self.k > 0:
            raise ValueError("K must be positive")
        if self.contexts < 1:
            raise ValueError("need at least one context")
        if not 0 <= self.theta_low <= self.theta_high <= 1:
            raise ValueError("thresholds must satisfy 0 <= low <= high <= 1")

    def classify(self, rho: float) -> str:
        if rho >= self.theta_high:
            return LOW
        if rho < self.theta_low:
            return HIGH
        return WARN


@dataclass(frozen=True)
class ExecutionContext:
    prefix: tuple[str, ...]
    group: int
    seed: int


@dataclass
class FeasibilityVerdict:
    rho: float
    risk: str
    per_context: list[bool]
    interference: int
    latency_ms: float = 0.0
    timings: bool = field(default=False, repr=False)

    @property
    def predicted_success(self) -> bool:
        return self.risk == LOW

    def to_json(self) -> dict[str, Any]:
        out = {"rho": round(self.rho, 6), "risk": self.risk, "perContext": self.per_context,
               "interference": self.interference}
        if self.timings:
            out["latencyMs"] = round(self.latency_ms, 3)
        return out


def predict_next_block(pending: Sequence[SignedTransaction], cfg: FeasibilityConfig,
                       block_gas_limit: int, reserve: int = 0) -> list[SignedTransaction]:
    """Gas-price-ordered pending transactions up to ``K * blockGasLimit - reserve`` of gas.

    ``reserve`` keeps room for the transaction being checked, which has to
    fit in the same horizon.
    """
    return pack(list(pending), max(0, int(cfg.k * block_gas_limit) - reserve))


def touched(action: A.Action) -> set[tuple[str, ...]]:
    """Wallets and market objects an action reads or writes."""
    a = action
    out: set[tuple[str, ...]] = set()
    for f in ("wallet", "from_wallet", "to_wallet", "receiver"):
        w = getattr(a, f, None)
        if w is not None:
            out.add(("wallet", w))
    if isinstance(a, A.DexSwap):
        out.add(("pool", a.platform, pair_id(a.asset_in, a.asset_out)))
    elif isinstance(a, (A.DexMint, A.DexBurn)):
        out.add(("pool", a.platform, pair_id(a.asset_a, a.asset_b)))
    elif isinstance(a, (A.LendingBorrow, A.LendingRepay)):
        out.add(("market", a.platform, a.asset))
    elif isinstance(a, A.StakeDeposit):
        out.add(("stake", a.platform, a.asset))
    elif isinstance(a, (A.NftPurchase, A.NftListing)):
        out.add(("nft", a.collection, a.token))
    return out


class _DisjointSet:
    def __init__(self, n: int) -> None:
        self.parent = list(range(n))

    def find(self, x: int) -> int:
        while self.parent[x] != x:
            self.parent[x] = self.parent[self.parent[x]]
            x = self.parent[x]
        return x

    def union(self, a: int, b: int) -> None:
        ra, rb = self.find(a), self.find(b)
        if ra != rb:
            self.parent[max(ra, rb)] = min(ra, rb)


def interference_set(target: SignedTransaction, block: Sequence[SignedTransaction]) -> list[SignedTransaction]:
    """Members of ``block`` in the target's connected component, in block order."""
    txs = [target, *block]
    ds = _DisjointSet(len(txs))
    owner: dict[tuple[str, ...], int] = {}
    for i, tx in enumerate(txs):
        for obj in touched(tx.plan.action):
            if obj in owner:
                ds.union(owner[obj], i)
            else:
                owner[obj] = i
    root = ds.find(0)
    return [tx for i, tx in enumerate(block, start=1) if ds.find(i) == root]


def _context_seed(seed: int, target_id: str, m: int) -> int:
    h = hashlib.sha256(f"{seed}:{target_id}:{m}".encode()).digest()
    return int.from_bytes(h[:8], "little")


def build_contexts(target: SignedTransaction, block: Sequence[SignedTransaction],
                   cfg: FeasibilityConfig) -> list[ExecutionContext]:
    if any(t.id == target.id for t in block):
        raise ValueError("target is already in the predicted block")
    group = [t.id for t in interference_set(target, block)]
    out = []
    for m in range(cfg.contexts):
        s = _context_seed(cfg.seed, target.id, m)
        perm = list(group)
        random.Random(s).shuffle(perm)
        out.append(ExecutionContext(tuple(perm), len(group), s))
    return out


def simulate(state: LedgerState, prefix: Iterable[SignedTransaction], target: SignedTransaction) -> bool:
    """Apply ``prefix`` then ``target`` on a fork of ``state``; True iff the target succeeds."""
    try:
        view = state.fork()
    except Exception as e:  # pragma: no cover - fork is a dict wrapper
        raise SimulationError(str(e)) from e
    for tx in prefix:
        apply_transaction(view, tx, check_signature=False)
    return apply_transaction(view, target, check_signature=False).ok


def check_feasibility(
    target: SignedTransaction,
    state: LedgerState,
    pending: Sequence[SignedTransaction],
    cfg: FeasibilityConfig | None = None,
    *,
    timings: bool = False,
) -> FeasibilityVerdict:
    """Estimate the target's success rate over randomized near-future contexts.

    ``state`` must not change while the check runs; pass a detached copy of
    a live ledger.
    """
    cfg = cfg or FeasibilityConfig()
    t0 = time.perf_counter()
    others = [t for t in pending if t.id != target.id]
    block = predict_next_block(others, cfg, state.block_gas_limit, reserve=target.gas_limit)
    by_id = {t.id: t for t in block}
    contexts = build_contexts(target, block, cfg)
    seen: dict[tuple[str, ...], bool] = {}
    results = []
    for ctx in contexts:
        if ctx.prefix not in seen:
            seen[ctx.prefix] = simulate(state, (by_id[i] for i in ctx.prefix), target)
        results.append(seen[ctx.prefix])
    rho = float(Fraction(sum(results), len(results)))
    return FeasibilityVerdict(
        rho, cfg.classify(rho), results, contexts[0].group if contexts else 0,
        (time.perf_counter() - t0) * 1000, timings,
    )


def baseline_check(target: SignedTransaction, state: LedgerState) -> bool:
    """Naive prediction: simulate the target alone on the current state."""
    return simulate(state, (), target)


def node_hook(node, cfg: FeasibilityConfig | None = None, *, timings: bool = False):
    """Feasibility hook for the executor, reading the live mempool of ``node``."""
    def hook(tx: SignedTransaction) -> FeasibilityVerdict:
        with node.lock:
            state = node.snapshot_state()
            pending = node.get_pending()
        return check_feasibility(tx, state, pending, cfg, timings=timings)
    return hook
