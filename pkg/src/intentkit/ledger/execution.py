"""Transaction semantics, mempool and block production."""

from __future__ import annotations

import math
from collections.abc import Collection
from dataclasses import dataclass, field
from fractions import Fraction

from intentkit.assets import lp_asset, nft_asset, usd_value
from intentkit.icl.errors import IclError
from intentkit.icl.evaluate import EvalContext, RuntimeObservations, evaluate_condition
from intentkit.ledger import actions as A
from intentkit.ledger.state import (
    MAX_ALLOWANCE, Key, LedgerState, Overlay, k_allow, k_bal, k_debt, k_lend_liquidity,
    k_listing, k_lp_supply, k_nft_stat, k_reserve, k_stake_pool, k_staked, pair_id,
)
from intentkit.tx import SignedTransaction, address_of

SWAP_FEE_NUM, SWAP_FEE_DEN = 997, 1000
COLLATERAL_FACTOR = Fraction(3, 2)

SUCCESS = "SUCCESS"
REVERT = "REVERT"


class Revert(Exception):
    def __init__(self, reason: str) -> None:
        super().__init__(reason)
        self.reason = reason


@dataclass(frozen=True)
class Receipt:
    tx_id: str
    status: str
    reason: str | None
    gas_used: int
    block: int
    deltas: tuple[tuple[str, str, int], ...] = ()
    slippage: Fraction | None = None

    @property
    def ok(self) -> bool:
        return self.status == SUCCESS

    def to_json(self) -> dict:
        return {
            "txId": self.tx_id,
            "status": self.status if self.ok else f"REVERT({self.reason})",
            "gasUsed": self.gas_used,
            "block": self.block,
            "deltas": [[w, a, str(n)] for w, a, n in self.deltas],
            "slippage": None if self.slippage is None else str(self.slippage),
        }


def swap_out(reserve_in: int, reserve_out: int, amount_in: int) -> int:
    """Constant-product output with the 0.3% input fee."""
    if amount_in <= 0 or reserve_in <= 0 or reserve_out <= 0:
        return 0
    num = reserve_out * amount_in * SWAP_FEE_NUM
    return num // (reserve_in * SWAP_FEE_DEN + amount_in * SWAP_FEE_NUM)


def quote_swap(state, platform: str, asset_in: str, asset_out: str, amount_in: int) -> int | None:
    res = state.reserves(platform, asset_in, asset_out)
    if res is None:
        return None
    return swap_out(res[0], res[1], amount_in)


def mint_liquidity(reserve_a: int, reserve_b: int, supply: int, amount_a: int, amount_b: int) -> int:
    if supply == 0:
        return math.isqrt(amount_a * amount_b)
    return min(amount_a * supply // reserve_a, amount_b * supply // reserve_b)


# -- per-action semantics -------------------------------------------------------

class _Exec:
    def __init__(self, view: Overlay, sender: str) -> None:
        self.v = view
        self.sender = sender
        self.sender_addr = address_of(sender) if sender else ""
        self.slippage: Fraction | None = None

    def authorize(self, owner: str, asset: str, amount: int) -> None:
        if owner == self.sender_addr or amount == 0:
            return
        for key in (k_allow(owner, self.sender, asset), k_allow(owner, self.sender, "*")):
            cap = self.v.int_at(key)
            if cap >= amount:
                if cap != MAX_ALLOWANCE:
                    self.v.set(key, cap - amount)
                return
        raise Revert("NotAuthorized")

    def debit(self, wallet: str, asset: str, amount: int) -> None:
        if amount < 0:
            raise Revert("NegativeAmount")
        self.authorize(wallet, asset, amount)
        if self.v.balance(wallet, asset) < amount:
            raise Revert("InsufficientBalance")
        self.v.add(k_bal(wallet, asset), -amount)

    def credit(self, wallet: str, asset: str, amount: int) -> None:
        if amount:
            self.v.add(k_bal(wallet, asset), amount)

    def run(self, a) -> None:
        getattr(self, "do_" + type(a).__name__)(a)

    def do_TokenTransfer(self, a: A.TokenTransfer) -> None:
        self.debit(a.from_wallet, a.asset, a.amount)
        self.credit(a.to_wallet, a.asset, a.amount)

    def do_DexSwap(self, a: A.DexSwap) -> None:
        pair = pair_id(a.asset_in, a.asset_out)
        if a.asset_in == a.asset_out or self.v.int_at(k_lp_supply(a.platform, pair)) <= 0:
            raise Revert("NoPool")
        r_in = self.v.int_at(k_reserve(a.platform, pair, a.asset_in))
        r_out = self.v.int_at(k_reserve(a.platform, pair, a.asset_out))
        out = swap_out(r_in, r_out, a.amount_in)
        if out < a.amount_out_min:
            raise Revert("SlippageExceeded")
        self.debit(a.wallet, a.asset_in, a.amount_in)
        self.v.add(k_reserve(a.platform, pair, a.asset_in), a.amount_in)
        self.v.add(k_reserve(a.platform, pair, a.asset_out), -out)
        self.credit(a.wallet, a.asset_out, out)
        if a.quoted_out > 0:
            self.slippage = max(Fraction(0), Fraction(a.quoted_out - out, a.quoted_out))
        else:
            self.slippage = Fraction(0)

    def _position_value(self, table: str, platform: str, wallet: str) -> Fraction:
        total = Fraction(0)
        for key, v in self.v.items_with_prefix(table, platform, wallet):
            try:
                total += usd_value(int(v), key[3], self.v.price(key[3]))
            except KeyError:
                raise Revert(f"MissingPrice:{key[3]}") from None
        return total

    def do_LendingBorrow(self, a: A.LendingBorrow) -> None:
        liq = k_lend_liquidity(a.platform, a.asset)
        if self.v.int_at(liq) < a.amount:
            raise Revert("InsufficientLiquidity")
        # borrowing moves funds into the wallet, but only an authorized solver may open debt
        self.authorize(a.wallet, a.asset, a.amount)
        self.v.add(liq, -a.amount)
        self.v.add(k_debt(a.platform, a.wallet, a.asset), a.amount)
        self.credit(a.wallet, a.asset, a.amount)
        collateral = self._position_value("staked", a.platform, a.wallet)
        debt = self._position_value("debt", a.platform, a.wallet)
        if collateral < COLLATERAL_FACTOR * debt:
            raise Revert("Undercollateralized")

    def do_LendingRepay(self, a: A.LendingRepay) -> None:
        key = k_debt(a.platform, a.wallet, a.asset)
        if a.amount > self.v.int_at(key):
            raise Revert("RepayExceedsDebt")
        self.debit(a.wallet, a.asset, a.amount)
        self.v.add(key, -a.amount)
        self.v.add(k_lend_liquidity(a.platform, a.asset), a.amount)

    def do_DexMint(self, a: A.DexMint) -> None:
        if a.asset_a == a.asset_b:
            raise Revert("NoPool")
        pair = pair_id(a.asset_a, a.asset_b)
        ra = self.v.int_at(k_reserve(a.platform, pair, a.asset_a))
        rb = self.v.int_at(k_reserve(a.platform, pair, a.asset_b))
        supply = self.v.int_at(k_lp_supply(a.platform, pair))
        minted = mint_liquidity(ra, rb, supply, a.amount_a, a.amount_b)
        if minted <= 0 or minted < a.min_liquidity:
            raise Revert("InsufficientLiquidityMinted")
        self.debit(a.wallet, a.asset_a, a.amount_a)
        self.debit(a.wallet, a.asset_b, a.amount_b)
        self.v.add(k_reserve(a.platform, pair, a.asset_a), a.amount_a)
        self.v.add(k_reserve(a.platform, pair, a.asset_b), a.amount_b)
        self.v.add(k_lp_supply(a.platform, pair), minted)
        self.credit(a.receiver, lp_asset(a.platform, a.asset_a, a.asset_b), minted)

    def do_DexBurn(self, a: A.DexBurn) -> None:
        pair = pair_id(a.asset_a, a.asset_b)
        supply = self.v.int_at(k_lp_supply(a.platform, pair))
        if supply <= 0 or a.asset_a == a.asset_b:
            raise Revert("NoPool")
        if a.liquidity > supply:
            raise Revert("InsufficientLiquidityBurned")
        ra = self.v.int_at(k_reserve(a.platform, pair, a.asset_a))
        rb = self.v.int_at(k_reserve(a.platform, pair, a.asset_b))
        out_a = a.liquidity * ra // supply
        out_b = a.liquidity * rb // supply
        if out_a < a.min_a or out_b < a.min_b:
            raise Revert("SlippageExceeded")
        self.debit(a.wallet, lp_asset(a.platform, a.asset_a, a.asset_b), a.liquidity)
        self.v.add(k_lp_supply(a.platform, pair), -a.liquidity)
        self.v.add(k_reserve(a.platform, pair, a.asset_a), -out_a)
        self.v.add(k_reserve(a.platform, pair, a.asset_b), -out_b)
        self.credit(a.wallet, a.asset_a, out_a)
        self.credit(a.wallet, a.asset_b, out_b)

    def do_StakeDeposit(self, a: A.StakeDeposit) -> None:
        if not self.v.int_at(k_stake_pool(a.platform, a.asset, "active")):
            raise Revert("NoStakingPool")
        self.debit(a.wallet, a.asset, a.amount)
        self.v.add(k_staked(a.platform, a.wallet, a.asset), a.amount)
        self.v.add(k_stake_pool(a.platform, a.asset, "depth"), a.amount)

    def do_NftPurchase(self, a: A.NftPurchase) -> None:
        ask = self.v.int_at(k_listing(a.collection, a.token, "ask"))
        if ask <= 0:
            raise Revert("NotListed")
        if self.v.get(k_listing(a.collection, a.token, "asset")) != a.asset:
            raise Revert("AssetMismatch")
        if ask > a.budget:
            raise Revert("AskAboveBudget")
        seller = str(self.v.get(k_listing(a.collection, a.token, "seller")))
        nft = nft_asset(a.collection, a.token)
        if self.v.balance(seller, nft) < 1:
            raise Revert("NotOwner")
        self.debit(a.wallet, a.asset, ask)
        self.credit(seller, a.asset, ask)
        self.v.add(k_bal(seller, nft), -1)
        self.credit(a.wallet, nft, 1)
        for fld in ("ask", "asset", "seller"):
            self.v.set(k_listing(a.collection, a.token, fld), None)
        self.v.set(k_nft_stat(a.collection, a.token, "last_price"), ask)
        self.v.set(k_nft_stat(a.collection, a.token, "asset"), a.asset)
        self.v.add(k_nft_stat(a.collection, a.token, "volume"), ask)

    def do_NftListing(self, a: A.NftListing) -> None:
        nft = nft_asset(a.collection, a.token)
        if self.v.balance(a.wallet, nft) < 1:
            raise Revert("NotOwner")
        if a.price <= 0:
            raise Revert("InvalidPrice")
        self.authorize(a.wallet, nft, 1)
        self.v.set(k_listing(a.collection, a.token, "ask"), a.price)
        self.v.set(k_listing(a.collection, a.token, "asset"), a.asset)
        self.v.set(k_listing(a.collection, a.token, "seller"), a.wallet)
        peak = k_nft_stat(a.collection, a.token, "max_ask")
        self.v.set(peak, max(self.v.int_at(peak), a.price))


def _realized_deltas(base: LedgerState, writes: dict[Key, object]) -> tuple[tuple[str, str, int], ...]:
    out = []
    for key, v in sorted(writes.items()):
        if key[0] != "bal":
            continue
        diff = (v if isinstance(v, int) else 0) - base.int_at(key)
        if diff:
            out.append((key[1], key[2], diff))
    return tuple(out)


def apply_transaction(
    state: LedgerState,
    tx: SignedTransaction,
    *,
    known_roots: Collection[bytes] | None = None,
    check_signature: bool = True,
) -> Receipt:
    """Apply ``tx`` to ``state`` in place. A revert leaves ``state`` untouched.

    ``known_roots`` restricts which compile-time state roots are acceptable.
    The trigger is not evaluated here; the runtime constraint is, against the
    post-state with the realized slippage and gas.
    """
    plan = tx.plan
    gas = state.gas_schedule.get(plan.kind, 0)
    height = state.height + 1

    def revert(reason: str, used: int = gas) -> Receipt:
        return Receipt(plan.id, REVERT, reason, used, height)

    if check_signature and not tx.verify():
        return revert("BadSignature", 0)
    if known_roots is not None and tx.state_root not in known_roots:
        return revert("UnknownStateRoot", 0)
    if gas > plan.gas_limit:
        return revert("OutOfGas", plan.gas_limit)

    view = Overlay(state)
    ex = _Exec(view, plan.sender)
    try:
        ex.run(plan.action)
    except Revert as r:
        return revert(r.reason)
    if plan.constraint is not None:
        obs = RuntimeObservations(ex.slippage if ex.slippage is not None else Fraction(0), gas)
        now = state.genesis_time + height * state.block_seconds
        ctx = EvalContext(view, now, obs)
        try:
            ok = evaluate_condition(plan.constraint, ctx)
        except (IclError, TypeError) as e:
            return revert(f"ConstraintError:{type(e).__name__}")
        if not ok:
            return revert("ConstraintViolated")
    deltas = _realized_deltas(state, view.writes)
    state.update(view.writes)
    return Receipt(plan.id, SUCCESS, None, gas, height, deltas, ex.slippage)


# -- mempool and blocks -----------------------------------------------------------

class MempoolFull(Exception):
    pass


class DuplicateTransaction(Exception):
    pass


def pack(txs: list[SignedTransaction], gas_budget: int) -> list[SignedTransaction]:
    """Greedy gas-price packing with skip-and-continue.

    ``txs`` must be in insertion order; ties on gas price keep that order.
    """
    order = sorted(range(len(txs)), key=lambda i: (-txs[i].gas_price, i))
    out, used = [], 0
    for i in order:
        g = txs[i].gas_limit
        if used + g <= gas_budget:
            out.append(txs[i])
            used += g
    return out


@dataclass
class Mempool:
    capacity: int = 100_000
    _pending: dict[str, SignedTransaction] = field(default_factory=dict)

    def add(self, tx: SignedTransaction) -> None:
        if tx.id in self._pending:
            raise DuplicateTransaction(tx.id)
        if len(self._pending) >= self.capacity:
            raise MempoolFull(tx.id)
        self._pending[tx.id] = tx

    def remove(self, tx_id: str) -> SignedTransaction | None:
        return self._pending.pop(tx_id, None)

    def pending(self) -> list[SignedTransaction]:
        return list(self._pending.values())

    def __len__(self) -> int:
        return len(self._pending)

    def __contains__(self, tx_id: str) -> bool:
        return tx_id in self._pending


@dataclass(frozen=True)
class Block:
    height: int
    txs: tuple[str, ...]
    gas_used: int
    state_root: bytes
    timestamp: int


def mine_block(
    state: LedgerState,
    mempool: Mempool,
    *,
    known_roots: Collection[bytes] | None = None,
) -> tuple[Block, list[Receipt]]:
    """Pack, apply in packed order, advance the height and commit."""
    chosen = pack(mempool.pending(), state.block_gas_limit)
    receipts = []
    for tx in chosen:
        mempool.remove(tx.id)
        receipts.append(apply_transaction(state, tx, known_roots=known_roots))
    state.height += 1
    block = Block(
        state.height, tuple(t.id for t in chosen), sum(r.gas_used for r in receipts),
        state.state_root, state.timestamp,
    )
    return block, receipts
