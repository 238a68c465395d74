"""Lowering of parsed ICL programs to transaction plans."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Any

from intentkit.assets import from_base_units, lp_asset, nft_asset
from intentkit.compiler.decision import (
    DecisionPolicy, MarketInfo, NoCandidate, decide_nft_purchase, decide_nft_trade, decide_stake,
)
from intentkit.icl import ast, printer
from intentkit.icl.evaluate import top_level_conjuncts
from intentkit.ledger import actions as A
from intentkit.ledger.execution import mint_liquidity, quote_swap
from intentkit.ledger.state import StateReader, k_lend_liquidity, k_listing, k_stake_pool
from intentkit.tx import Deltas, TransactionPlan, make_plan, plan_to_json

DEFAULT_SLIPPAGE = Fraction(1, 100)
DEFAULT_GAS_PRICE = 10


class CompileError(Exception):
    def __init__(self, index: int, cause: str, detail: str = "") -> None:
        super().__init__(f"statement {index}: {cause}" + (f" ({detail})" if detail else ""))
        self.index = index
        self.cause = cause
        self.detail = detail


@dataclass(frozen=True)
class TransactionSet:
    plans: tuple[TransactionPlan, ...]
    provenance: str

    def __len__(self) -> int:
        return len(self.plans)

    def __iter__(self):
        return iter(self.plans)

    def __getitem__(self, i: int) -> TransactionPlan:
        return self.plans[i]

    def to_json(self) -> dict[str, Any]:
        rows = []
        for i, p in enumerate(self.plans, 1):
            rows.append({
                "idx": i,
                "trigger": printer.condition(p.trigger) if p.trigger is not None else None,
                "mainOperation": describe(p.action),
                "constraint": printer.condition(p.constraint) if p.constraint is not None else None,
                "plan": plan_to_json(p),
            })
        return {"provenance": self.provenance, "transactions": rows}

    def dumps(self) -> str:
        return json.dumps(self.to_json(), sort_keys=True, separators=(",", ":"))


def describe(action: A.Action) -> str:
    """One-line human summary of an action."""
    def amt(n: int, asset: str) -> str:
        return f"{_dec(from_base_units(n, asset))} {asset}"

    if isinstance(action, A.TokenTransfer):
        return f"token.transfer({action.from_wallet} -> {action.to_wallet}, {amt(action.amount, action.asset)})"
    if isinstance(action, A.DexSwap):
        return (f"{action.platform}.swapExactIn({amt(action.amount_in, action.asset_in)} -> {action.asset_out}, "
                f"min {amt(action.amount_out_min, action.asset_out)})")
    if isinstance(action, A.LendingBorrow):
        return f"{action.platform}.borrow({amt(action.amount, action.asset)} to {action.wallet})"
    if isinstance(action, A.LendingRepay):
        return f"{action.platform}.repay({amt(action.amount, action.asset)} from {action.wallet})"
    if isinstance(action, A.DexMint):
        return (f"{action.platform}.addLiquidity({amt(action.amount_a, action.asset_a)}, "
                f"{amt(action.amount_b, action.asset_b)} -> {action.receiver})")
    if isinstance(action, A.DexBurn):
        return f"{action.platform}.removeLiquidity({action.liquidity} LP -> {action.wallet})"
    if isinstance(action, A.StakeDeposit):
        return f"{action.platform}.stake({amt(action.amount, action.asset)} from {action.wallet})"
    if isinstance(action, A.NftPurchase):
        return f"market.buy({action.collection}:{action.token}, budget {amt(action.budget, action.asset)})"
    return f"market.list({action.collection}:{action.token} at {amt(action.price, action.asset)})"


def _dec(x: Fraction) -> str:
    """Exact decimal rendering of a fraction with a power-of-ten denominator."""
    if x.denominator == 1:
        return str(x.numerator)
    sign = "-" if x < 0 else ""
    x = abs(x)
    whole, rest = divmod(x.numerator, x.denominator)
    digits = []
    while rest and len(digits) < 40:
        rest *= 10
        d, rest = divmod(rest, x.denominator)
        digits.append(str(d))
    return f"{sign}{whole}." + "".join(digits)


# -- constraint inspection ----------------------------------------------------

def _bound(cond: ast.Condition | None, ref: type) -> Fraction | None:
    """Tightest upper bound ``ref < n`` / ``ref <= n`` among top-level conjuncts."""
    best = None
    flip = {">": "<", ">=": "<=", "<": ">", "<=": ">="}
    for term in top_level_conjuncts(cond):
        if not isinstance(term, ast.Comparison):
            continue
        left, op, right = term.left, term.op, term.right
        if isinstance(right, ref) and isinstance(left, ast.NumberLiteral):
            left, op, right = right, flip.get(op, op), left
        if isinstance(left, ref) and isinstance(right, ast.NumberLiteral) and op in ("<", "<="):
            v = right.value
            best = v if best is None else min(best, v)
    return best


def max_slippage(constraint: ast.Condition | None) -> Fraction:
    b = _bound(constraint, ast.SlippageRef)
    return DEFAULT_SLIPPAGE if b is None else b


def fee_gas_limit(constraint: ast.Condition | None) -> int | None:
    b = _bound(constraint, ast.FeeRef)
    return None if b is None else b.numerator // b.denominator


def apply_tolerance(quote: int, slippage: Fraction) -> int:
    keep = max(Fraction(0), 1 - slippage)
    v = quote * keep
    return v.numerator // v.denominator


# -- deltas ---------------------------------------------------------------------

def estimate_deltas(action: A.Action, snapshot: StateReader | None = None) -> tuple[Deltas, Deltas]:
    """``(increases, decreases)``: guaranteed credits and maximal debits."""
    inc: Deltas = {}
    dec: Deltas = {}

    def put(d: Deltas, w: str, a: str, n: int) -> None:
        if n > 0:
            d[(w, a)] = d.get((w, a), 0) + n

    if isinstance(action, A.TokenTransfer):
        put(dec, action.from_wallet, action.asset, action.amount)
        put(inc, action.to_wallet, action.asset, action.amount)
    elif isinstance(action, A.DexSwap):
        put(dec, action.wallet, action.asset_in, action.amount_in)
        put(inc, action.wallet, action.asset_out, action.amount_out_min)
    elif isinstance(action, A.LendingBorrow):
        put(inc, action.wallet, action.asset, action.amount)
    elif isinstance(action, A.LendingRepay):
        put(dec, action.wallet, action.asset, action.amount)
    elif isinstance(action, A.DexMint):
        put(dec, action.wallet, action.asset_a, action.amount_a)
        put(dec, action.wallet, action.asset_b, action.amount_b)
        put(inc, action.receiver, lp_asset(action.platform, action.asset_a, action.asset_b), action.min_liquidity)
    elif isinstance(action, A.DexBurn):
        put(dec, action.wallet, lp_asset(action.platform, action.asset_a, action.asset_b), action.liquidity)
        put(inc, action.wallet, action.asset_a, action.min_a)
        put(inc, action.wallet, action.asset_b, action.min_b)
    elif isinstance(action, A.StakeDeposit):
        put(dec, action.wallet, action.asset, action.amount)
    elif isinstance(action, A.NftPurchase):
        put(dec, action.wallet, action.asset, action.budget)
        put(inc, action.wallet, nft_asset(action.collection, action.token), 1)
    elif isinstance(action, A.NftListing):
        # listing moves nothing, but it needs the token in hand
        put(dec, action.wallet, nft_asset(action.collection, action.token), 1)
    return inc, dec


# -- statements -----------------------------------------------------------------

def _units(amount: ast.Amount) -> int:
    return amount.base_units()


def lower_statement(
    stmt: ast.Statement,
    constraint: ast.Condition | None,
    snapshot: StateReader,
    market: MarketInfo,
    policy: DecisionPolicy,
    index: int,
) -> A.Action:
    def fail(cause: str, detail: str = "") -> CompileError:
        return CompileError(index, cause, detail)

    if isinstance(stmt, ast.Transfer):
        return A.TokenTransfer(stmt.amount.asset, _units(stmt.amount), stmt.from_wallet, stmt.to_wallet)
    if isinstance(stmt, ast.Borrow):
        asset = stmt.amount.asset
        if snapshot.int_at(k_lend_liquidity(stmt.platform, asset)) <= 0:
            raise fail("NoLendingMarket", f"{stmt.platform} {asset}")
        return A.LendingBorrow(stmt.platform, stmt.wallet, asset, _units(stmt.amount))
    if isinstance(stmt, ast.Repay):
        return A.LendingRepay(stmt.platform, stmt.wallet, stmt.amount.asset, _units(stmt.amount))
    if isinstance(stmt, ast.Swap):
        a_in, n_in = stmt.amount.asset, _units(stmt.amount)
        quote = quote_swap(snapshot, stmt.platform, a_in, stmt.to_asset, n_in) if a_in != stmt.to_asset else None
        if quote is None:
            raise fail("QuoteUnavailable", f"{stmt.platform} {a_in}/{stmt.to_asset}")
        min_out = apply_tolerance(quote, max_slippage(constraint))
        return A.DexSwap(stmt.platform, stmt.wallet, a_in, n_in, stmt.to_asset, min_out, quote)
    if isinstance(stmt, ast.AddLiquidity):
        a, b = stmt.amount_a, stmt.amount_b
        if a.asset == b.asset:
            raise fail("QuoteUnavailable", "pair needs two distinct assets")
        na, nb = _units(a), _units(b)
        res = snapshot.reserves(stmt.platform, a.asset, b.asset)
        supply = snapshot.lp_supply(stmt.platform, a.asset, b.asset)
        expected = mint_liquidity(res[0], res[1], supply, na, nb) if res else mint_liquidity(0, 0, 0, na, nb)
        min_lp = apply_tolerance(expected, max_slippage(constraint))
        return A.DexMint(stmt.platform, stmt.receiver, stmt.receiver, a.asset, na, b.asset, nb, min_lp)
    if isinstance(stmt, ast.RemoveLiquidity):
        a, b = stmt.amount_a, stmt.amount_b
        if snapshot.reserves(stmt.platform, a.asset, b.asset) is None:
            raise fail("QuoteUnavailable", f"{stmt.platform} {a.asset}/{b.asset}")
        return A.DexBurn(stmt.platform, stmt.wallet, a.asset, _units(a), b.asset, _units(b),
                         int(stmt.liquidity), stmt.token_key or "")
    if isinstance(stmt, ast.Stake):
        strat = stmt.strategy
        try:
            pool = decide_stake(market, stmt.amount.asset, strat.risk if strat else None,
                                strat.term if strat else None, policy)
        except NoCandidate as e:
            raise fail("NoCandidate", str(e)) from None
        return A.StakeDeposit(pool.platform, stmt.amount.asset, _units(stmt.amount), stmt.wallet)
    if isinstance(stmt, ast.SimpleStake):
        if not snapshot.int_at(k_stake_pool(stmt.platform, stmt.amount.asset, "active")):
            raise fail("NoStakingPool", f"{stmt.platform} {stmt.amount.asset}")
        return A.StakeDeposit(stmt.platform, stmt.amount.asset, _units(stmt.amount), stmt.wallet)
    if isinstance(stmt, ast.BuyNft):
        try:
            pick = decide_nft_purchase(market, _units(stmt.budget), stmt.budget.asset, stmt.qualifiers, policy)
        except NoCandidate as e:
            raise fail("NoCandidate", str(e)) from None
        return A.NftPurchase(pick.collection, pick.token, stmt.wallet, stmt.budget.asset,
                             _units(stmt.budget), pick.ask)
    if isinstance(stmt, ast.SimpleBuyNft):
        ask = snapshot.int_at(k_listing(stmt.collection_key, stmt.nft_key, "ask"))
        if ask <= 0 or snapshot.get(k_listing(stmt.collection_key, stmt.nft_key, "asset")) != stmt.budget.asset:
            raise fail("NoCandidate", f"{stmt.collection_key}:{stmt.nft_key} is not listed in {stmt.budget.asset}")
        return A.NftPurchase(stmt.collection_key, stmt.nft_key, stmt.wallet, stmt.budget.asset,
                             _units(stmt.budget), ask)
    if isinstance(stmt, ast.SellNft):
        try:
            price, asset = decide_nft_trade(snapshot, nft=(stmt.collection_key, stmt.nft_key),
                                            strategy=stmt.strategy, policy=policy)
        except NoCandidate as e:
            raise fail("NoCandidate", str(e)) from None
        return A.NftListing(stmt.collection_key, stmt.nft_key, stmt.wallet, asset, price)
    if isinstance(stmt, ast.SimpleSellNft):
        return A.NftListing(stmt.collection_key, stmt.nft_key, stmt.wallet, stmt.min_amount.asset,
                            _units(stmt.min_amount))
    raise fail("Unsupported", type(stmt).__name__)


@dataclass
class CompileOptions:
    gas_price: int = DEFAULT_GAS_PRICE
    nonce_base: int = 0
    gas_schedule: dict[str, int] = field(default_factory=lambda: dict(A.DEFAULT_GAS_SCHEDULE))


def compile_statement(
    ts: ast.TriggerStatement,
    snapshot: StateReader,
    policy: DecisionPolicy,
    sender: str,
    *,
    market: MarketInfo | None = None,
    options: CompileOptions | None = None,
) -> TransactionPlan:
    opts = options or CompileOptions()
    market = market if market is not None else MarketInfo.from_state(snapshot)
    action = lower_statement(ts.statement, ts.constraint, snapshot, market, policy, ts.index)
    gas_limit = fee_gas_limit(ts.constraint)
    if gas_limit is None:
        gas_limit = opts.gas_schedule.get(A.kind(action), 0)
    if gas_limit <= 0:
        raise CompileError(ts.index, "InvalidGasLimit", str(gas_limit))
    inc, dec = estimate_deltas(action, snapshot)
    return make_plan(
        intent_index=ts.index, action=action, sender=sender, gas_limit=gas_limit,
        gas_price=opts.gas_price, increases=inc, decreases=dec, trigger=ts.trigger,
        constraint=ts.constraint, nonce=opts.nonce_base + ts.index,
    )


def compile_program(
    program: ast.Program,
    snapshot: StateReader,
    policy: DecisionPolicy | None = None,
    sender: str = "",
    *,
    provenance: str = "",
    options: CompileOptions | None = None,
    skip_failed: bool = False,
) -> tuple[TransactionSet, list[CompileError]]:
    """Compile every statement in order.

    With ``skip_failed`` the failing statements are dropped and returned as
    errors; otherwise the first failure is raised.
    """
    policy = policy or DecisionPolicy()
    market = MarketInfo.from_state(snapshot)
    plans, errors = [], []
    for ts in program.statements:
        try:
            plans.append(compile_statement(ts, snapshot, policy, sender, market=market, options=options))
        except CompileError as e:
            if not skip_failed:
                raise
            errors.append(e)
    return TransactionSet(tuple(plans), provenance), errors
