"""In-process node: serialized transitions, receipts, proofs and a miner.

All mutation goes through one lock, so the apply order is linearizable no
matter how many threads submit. With ``block_interval > 0`` and ``start()``
called, a background thread mines on a wall-clock timer; otherwise callers
drive ``mine()`` themselves.
"""

from __future__ import annotations

import json
import logging
import threading
import time
from collections.abc import Callable, Iterable
from dataclasses import dataclass
from fractions import Fraction
from pathlib import Path
from typing import Any

from intentkit.assets import PRICE_SCALE, nft_asset, to_base_units
from intentkit.ledger.actions import DEFAULT_GAS_SCHEDULE
from intentkit.ledger.execution import (
    Block, Mempool, Receipt, apply_transaction, mine_block, mint_liquidity,
)
from intentkit.ledger.merkle import AbsenceProof, MembershipProof
from intentkit.ledger.state import (
    BLOCK_GAS_LIMIT, MAX_ALLOWANCE, PPM, Key, LedgerState, Value, k_allow, k_bal,
    k_lend_liquidity, k_listing, k_lp_supply, k_nft_stat, k_price, k_reserve, k_stake_pool,
    pair_id,
)
from intentkit.tx import SignedTransaction, signed_from_json

log = logging.getLogger(__name__)


class NodeError(Exception):
    pass


class InvalidTransaction(NodeError):
    pass


class StaleHeight(NodeError):
    pass


@dataclass(frozen=True)
class ServedState:
    """Leaves and proofs as served to a light client."""

    height: int
    timestamp: int
    root: bytes
    leaves: dict[Key, Value]
    proofs: dict[Key, MembershipProof | AbsenceProof]


def _whole(value: Any, asset: str) -> int:
    return to_base_units(Fraction(str(value)), asset)


def _usd(value: Any) -> int:
    return int(Fraction(str(value)) * PRICE_SCALE)


def _ppm(value: Any) -> int:
    return int(Fraction(str(value)) * PPM)


def build_genesis(cfg: dict[str, Any]) -> LedgerState:
    """Build a state from a genesis mapping; human amounts are whole tokens."""
    state = LedgerState(
        genesis_time=int(cfg.get("genesisTime", 1_735_689_600)),
        block_seconds=int(cfg.get("blockSeconds", 12)),
        gas_schedule={**DEFAULT_GAS_SCHEDULE, **cfg.get("gasSchedule", {})},
        block_gas_limit=int(cfg.get("blockGasLimit", BLOCK_GAS_LIMIT)),
    )
    for wallet, holdings in cfg.get("balances", {}).items():
        for asset, amount in holdings.items():
            state.add(k_bal(wallet.lower(), asset), _whole(amount, asset))
    for asset, usd in cfg.get("prices", {}).items():
        state.set(k_price(asset), _usd(usd))
    for p in cfg.get("pools", []):
        (a, b), (ra, rb) = p["assets"], p["reserves"]
        pair = pair_id(a, b)
        ua, ub = _whole(ra, a), _whole(rb, b)
        state.add(k_reserve(p["platform"], pair, a), ua)
        state.add(k_reserve(p["platform"], pair, b), ub)
        state.add(k_lp_supply(p["platform"], pair), mint_liquidity(0, 0, 0, ua, ub))
    for m in cfg.get("lending", []):
        state.add(k_lend_liquidity(m["platform"], m["asset"]), _whole(m["liquidity"], m["asset"]))
    for s in cfg.get("stakingPools", []):
        key = lambda f: k_stake_pool(s["platform"], s["asset"], f)  # noqa: E731
        state.set(key("active"), 1)
        state.set(key("apy_ppm"), _ppm(s["apy"]))
        state.set(key("risk_ppm"), _ppm(s["risk"]))
        state.add(key("depth"), _whole(s.get("depth", 0), s["asset"]))
    for n in cfg.get("nfts", []):
        c, t, owner = n["collection"].lower(), n["token"].lower(), n["owner"].lower()
        state.set(k_bal(owner, nft_asset(c, t)), 1)
        asset = n.get("asset", "ETH")
        state.set(k_nft_stat(c, t, "asset"), asset)
        state.set(k_nft_stat(c, t, "volume"), _whole(n.get("volume", 0), asset))
        state.set(k_nft_stat(c, t, "trend_ppm"), _ppm(n.get("trend", 0)))
        state.set(k_nft_stat(c, t, "holders"), int(n.get("holders", 0)))
        if "lastPrice" in n:
            state.set(k_nft_stat(c, t, "last_price"), _whole(n["lastPrice"], asset))
        if n.get("ask") is not None:
            ask = _whole(n["ask"], asset)
            state.set(k_listing(c, t, "ask"), ask)
            state.set(k_listing(c, t, "asset"), asset)
            state.set(k_listing(c, t, "seller"), owner)
            state.set(k_nft_stat(c, t, "max_ask"), ask)
    for al in cfg.get("allowances", []):
        amount = MAX_ALLOWANCE if al.get("amount") in (None, "max") else _whole(al["amount"], al["asset"])
        state.set(k_allow(al["owner"].lower(), al["spender"], al.get("asset", "*")), amount)
    return state


class LedgerNode:
    def __init__(self, state: LedgerState, *, block_interval: float = 0.0, mempool_capacity: int = 100_000) -> None:
        self.state = state
        self.block_interval = block_interval
        self.mempool = Mempool(mempool_capacity)
        self.lock = threading.RLock()
        self.heads = threading.Condition(self.lock)
        self.blocks: list[Block] = []
        self.receipts: dict[str, Receipt] = {}
        self.roots: dict[bytes, int] = {state.state_root: state.height}
        self.seen: set[str] = set()
        self._subscribers: list[Callable[[Block], None]] = []
        self._stop = threading.Event()
        self._thread: threading.Thread | None = None

    @classmethod
    def from_genesis(cls, cfg: dict[str, Any] | str | Path, **kw: Any) -> "LedgerNode":
        if not isinstance(cfg, dict):
            cfg = json.loads(Path(cfg).read_text())
        kw.setdefault("block_interval", float(cfg.get("blockInterval", 0.0)))
        return cls(build_genesis(cfg), **kw)

    # -- reads -------------------------------------------------------------

    @property
    def height(self) -> int:
        with self.lock:
            return self.state.height

    def state_root(self) -> bytes:
        with self.lock:
            return self.state.state_root

    def snapshot_state(self) -> LedgerState:
        """Detached copy of the current state, safe to fork freely."""
        with self.lock:
            return self.state.copy()

    def balance(self, wallet: str, asset: str) -> int:
        with self.lock:
            return self.state.balance(wallet, asset)

    def price(self, asset: str) -> int:
        with self.lock:
            return self.state.price(asset)

    def get_snapshot(
        self,
        keys: Iterable[Key] = (),
        prefixes: Iterable[tuple[str, ...]] = (),
        height: int | None = None,
    ) -> ServedState:
        """Serve the requested leaves with Merkle proofs at the head.

        Prefix queries add every present leaf under that prefix. Only the
        head can be proved, so a different ``height`` is refused.
        """
        with self.lock:
            if height is not None and height != self.state.height:
                raise StaleHeight(f"requested {height}, head is {self.state.height}")
            wanted = set(keys)
            for pre in prefixes:
                wanted.update(k for k, _ in self.state.items_with_prefix(*pre))
            leaves = {k: self.state.get(k) for k in sorted(wanted)}
            proofs = {k: self.state.prove(k) for k in sorted(wanted)}
            return ServedState(self.state.height, self.state.timestamp, self.state.state_root, leaves, proofs)

    def evaluate(self, cond) -> bool:
        """Evaluate a trigger condition against the head state."""
        from intentkit.icl import EvalContext, evaluate_condition

        with self.lock:
            return evaluate_condition(cond, EvalContext(self.state, self.state.timestamp))

    def get_pending(self) -> list[SignedTransaction]:
        with self.lock:
            return self.mempool.pending()

    def get_receipt(self, tx_id: str) -> Receipt | None:
        with self.lock:
            return self.receipts.get(tx_id)

    # -- writes ------------------------------------------------------------

    def send_raw_transaction(self, tx: SignedTransaction | dict[str, Any]) -> str:
        if isinstance(tx, dict):
            tx = signed_from_json(tx)
        if not tx.verify():
            raise InvalidTransaction("bad signature")
        with self.lock:
            if tx.state_root not in self.roots:
                raise InvalidTransaction("unknown state root")
            if tx.id in self.seen:
                raise InvalidTransaction(f"duplicate transaction {tx.id}")
            self.mempool.add(tx)
            self.seen.add(tx.id)
        return tx.id

    def mine(self) -> Block:
        with self.lock:
            block, receipts = mine_block(self.state, self.mempool, known_roots=self.roots)
            for r in receipts:
                self.receipts[r.tx_id] = r
            self.roots.setdefault(block.state_root, block.height)
            self.blocks.append(block)
            subs = list(self._subscribers)
            self.heads.notify_all()
        for cb in subs:
            try:
                cb(block)
            except Exception:  # subscriber bugs must not stop the chain
                log.exception("head subscriber failed")
        return block

    def apply_now(self, tx: SignedTransaction) -> Receipt:
        """Apply a single transaction outside block packing (admin/testing)."""
        with self.lock:
            r = apply_transaction(self.state, tx, known_roots=self.roots)
            self.receipts[r.tx_id] = r
            self.seen.add(tx.id)
            self.roots.setdefault(self.state.state_root, self.state.height)
            return r

    def approve(self, owner: str, spender: str, asset: str = "*", amount: int = MAX_ALLOWANCE) -> None:
        with self.lock:
            self.state.set(k_allow(owner, spender, asset), amount)
            self.roots.setdefault(self.state.state_root, self.state.height)

    def faucet(self, wallet: str, asset: str, amount: int) -> None:
        with self.lock:
            self.state.add(k_bal(wallet, asset), amount)
            self.roots.setdefault(self.state.state_root, self.state.height)

    def set_price(self, asset: str, micro_usd: int) -> None:
        with self.lock:
            self.state.set(k_price(asset), micro_usd)
            self.roots.setdefault(self.state.state_root, self.state.height)

    def subscribe_heads(self, callback: Callable[[Block], None]) -> None:
        with self.lock:
            self._subscribers.append(callback)

    # -- waiting -------------------------------------------------------------

    def wait_for_height(self, height: int, timeout: float | None = None) -> bool:
        deadline = None if timeout is None else time.monotonic() + timeout
        with self.heads:
            while self.state.height < height:
                left = None if deadline is None else deadline - time.monotonic()
                if left is not None and left <= 0:
                    return False
                self.heads.wait(left)
            return True

    def wait_for_receipt(self, tx_id: str, timeout: float | None = None) -> Receipt | None:
        deadline = None if timeout is None else time.monotonic() + timeout
        with self.heads:
            while tx_id not in self.receipts:
                left = None if deadline is None else deadline - time.monotonic()
                if left is not None and left <= 0:
                    return None
                self.heads.wait(left)
            return self.receipts[tx_id]

    # -- background miner -------------------------------------------------------

    def start(self) -> None:
        if self.block_interval <= 0:
            raise NodeError("live mining needs a positive block interval")
        if self._thread is not None:
            return
        self._stop.clear()
        self._thread = threading.Thread(target=self._run, name="miner", daemon=True)
        self._thread.start()

    def stop(self) -> None:
        self._stop.set()
        if self._thread is not None:
            self._thread.join()
            self._thread = None

    def _run(self) -> None:
        next_at = time.monotonic() + self.block_interval
        while not self._stop.wait(max(0.0, next_at - time.monotonic())):
            self.mine()
            next_at += self.block_interval

    def __enter__(self) -> "LedgerNode":
        if self.block_interval > 0:
            self.start()
        return self

    def __exit__(self, *exc: object) -> None:
        self.stop()
