from __future__ import annotations

from fractions import Fraction

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import SENDER_PK, SENDER_SK, approved_state
from intentkit.compiler import (
    CompileError, CompileOptions, DecisionPolicy, MarketInfo, NoCandidate, compile_program,
    compile_statement, decide_nft_purchase, decide_stake, estimate_deltas, fee_gas_limit,
    max_slippage,
)
from intentkit.compiler.decision import decide_nft_price, qualifier_filter
from intentkit.compiler.lowering import apply_tolerance
from intentkit.icl import parse, parse_condition, print_program
from intentkit.icl import printer
from intentkit.ledger import actions as A
from intentkit.ledger.execution import apply_transaction
from intentkit.ledger.state import NftListing, StakingPool
from intentkit.tx import sign_plan
from intentkit.workbench.genesis import motivating_genesis

USDC = 10**6
ETH = 10**18


def compile_src(src, state, policy=None):
    txset, _ = compile_program(parse(src), state, policy or DecisionPolicy(), SENDER_PK)
    return txset


# -- bundled example -----------------------------------------------------------------

def test_example_table_structure(example_source, genesis):
    state = approved_state(genesis)
    txset = compile_src(example_source, state)
    assert [p.kind for p in txset] == ["DexSwap", "DexSwap", "NftPurchase", "DexMint", "StakeDeposit"]
    assert [p.intent_index for p in txset] == [1, 2, 3, 4, 5]
    swap1, swap2, nft, mint, stake = txset.plans
    assert (swap1.action.asset_in, swap1.action.asset_out) == ("USDC", "USDT")
    assert (swap2.action.asset_in, swap2.action.asset_out) == ("USDC", "ETH")
    assert swap2.gas_limit == 150_000
    assert swap1.gas_limit == A.DEFAULT_GAS_SCHEDULE["DexSwap"]
    assert nft.action.budget == 80 * ETH
    assert printer.condition(mint.trigger) == "balance wallet[0xa] > 400000 USDT"
    assert printer.condition(stake.constraint) == "price ETH > 4000"
    assert [p.trigger is not None for p in txset] == [False, False, False, True, False]
    # the source ICL bounds slippage at 0.005 on both swaps
    assert max_slippage(swap1.constraint) == max_slippage(swap2.constraint) == Fraction(5, 1000)
    rows = txset.to_json()["transactions"]
    assert [r["idx"] for r in rows] == [1, 2, 3, 4, 5]
    assert rows[4]["constraint"] == "price ETH > 4000"


def test_trigger_and_constraint_pass_through(example_source, genesis):
    program = parse(example_source)
    txset = compile_src(example_source, approved_state(genesis))
    for ts, plan in zip(program.statements, txset):
        assert plan.trigger == ts.trigger
        assert plan.constraint == ts.constraint


def test_compile_is_deterministic(example_source, genesis):
    a = compile_src(example_source, approved_state(genesis)).dumps()
    b = compile_src(print_program(parse(example_source)), approved_state(genesis)).dumps()
    assert a == b


def test_example_stake_picks_low_risk_pool(example_source, genesis):
    stake = compile_src(example_source, approved_state(genesis))[4]
    assert stake.action.platform == "Aave"
    assert stake.decreases == {("0xa", "ETH"): 160 * ETH}


def test_example_nft_pick(example_source, genesis):
    nft = compile_src(example_source, approved_state(genesis))[2]
    # only 0xc1 is both popular (volume >= median) and price-increasing
    assert (nft.action.collection, nft.action.token) == ("0xc1", "0x1")


# -- swap lowering ------------------------------------------------------------------

def _pool_for_quote(quote: int, amount_in: int, reserve_in: int) -> int:
    """Smallest output reserve whose constant-product quote is exactly ``quote``."""
    num, den = amount_in * 997, reserve_in * 1000 + amount_in * 997
    return -(-quote * den // num)


def test_swap_min_out_from_quote():
    quote = 399_800 * USDC
    r_in = 10_000_000 * USDC
    r_out = _pool_for_quote(quote, 400_000 * USDC, r_in)
    cfg = {"balances": {"0xa": {"USDC": "1000000"}}, "prices": {"USDC": "1", "USDT": "1"},
           "pools": [{"platform": "Uniswap", "assets": ["USDC", "USDT"],
                      "reserves": [str(Fraction(r_in, USDC)), str(Fraction(r_out, USDC))]}]}
    state = approved_state(cfg)
    txset = compile_src("swap 400000 USDC from wallet[0xA] for USDT on Uniswap checking slippage < 0.005;", state)
    a = txset[0].action
    assert a.quoted_out == quote
    assert a.amount_out_min == 397_801 * USDC
    assert txset[0].decreases == {("0xa", "USDC"): 400_000 * USDC}
    assert txset[0].increases == {("0xa", "USDT"): 397_801 * USDC}


def test_default_slippage_is_one_percent():
    assert max_slippage(None) == Fraction(1, 100)
    assert max_slippage(parse_condition("price ETH > 1")) == Fraction(1, 100)
    assert apply_tolerance(1000, Fraction(1, 100)) == 990


def test_tightest_slippage_bound_wins():
    c = parse_condition("slippage < 0.02 and slippage <= 0.01 and 0.05 > slippage")
    assert max_slippage(c) == Fraction(1, 100)


def test_fee_constraint_sets_gas_limit():
    assert fee_gas_limit(parse_condition("fee < 150000")) == 150_000
    assert fee_gas_limit(parse_condition("slippage < 0.1")) is None


def test_missing_pool_is_quote_unavailable(genesis):
    state = approved_state(genesis)
    with pytest.raises(CompileError) as e:
        compile_src("swap 1 ETH from wallet[0xA] for DAI on Curve;", state)
    assert (e.value.index, e.value.cause) == (1, "QuoteUnavailable")


def test_skip_failed_collects_errors(genesis):
    src = ("transfer 1 USDC from wallet[0xA] to wallet[0xB];\n"
           "swap 1 ETH from wallet[0xA] for DAI on Curve;\n")
    txset, errors = compile_program(parse(src), approved_state(genesis), DecisionPolicy(), SENDER_PK,
                                    skip_failed=True)
    assert len(txset) == 1
    assert [e.index for e in errors] == [2]


# -- transfers and deltas ---------------------------------------------------------------

def test_single_transfer(genesis):
    (plan,) = compile_src("transfer 100 USDC from wallet[0xA] to wallet[0xB];", approved_state(genesis))
    assert plan.action == A.TokenTransfer("USDC", 100 * USDC, "0xa", "0xb")
    assert plan.trigger is None and plan.constraint is None
    assert plan.increases == {("0xb", "USDC"): 100 * USDC}
    assert plan.decreases == {("0xa", "USDC"): 100 * USDC}


def test_zero_transfer_has_no_deltas(genesis):
    (plan,) = compile_src("transfer 0 USDC from wallet[0xA] to wallet[0xB];", approved_state(genesis))
    assert plan.action.amount == 0
    assert (plan.increases, plan.decreases) == ({}, {})


def test_listing_declares_no_fungible_credit():
    inc, dec = estimate_deltas(A.NftListing("0xc5", "0x3", "0xa", "ETH", 98 * ETH // 10))
    assert inc == {}
    assert all(asset.startswith("nft:") for _, asset in dec)


def test_borrow_credits_borrowed_amount():
    inc, dec = estimate_deltas(A.LendingBorrow("Aave", "0xa", "USDC", 5))
    assert inc == {("0xa", "USDC"): 5} and dec == {}


def test_intent_order_strictly_increasing(genesis):
    src = "".join(f"transfer {i} USDC from wallet[0xA] to wallet[0xB];" for i in range(1, 6))
    txset = compile_src(src, approved_state(genesis))
    idx = [p.intent_index for p in txset]
    assert idx == sorted(set(idx))


# -- decision module -------------------------------------------------------------------

def _pool(platform, apy, risk, depth=100, asset="ETH"):
    return StakingPool(platform, asset, Fraction(apy), depth, Fraction(risk))


def _score(pool, pools, w_apy, w_depth, w_risk):
    top_apy = max(p.apy for p in pools)
    top_depth = max(p.depth for p in pools)
    return w_apy * pool.apy / top_apy + w_depth * Fraction(pool.depth, top_depth) - w_risk * pool.risk


def test_stake_low_risk_long_term():
    pools = [_pool("Aave", "0.03", "0.1"), _pool("Yearn", "0.09", "0.8")]
    pick = decide_stake(MarketInfo(tuple(pools)), "ETH", "low", "long")
    oracle = max(pools, key=lambda p: _score(p, pools, Fraction(3, 5), Fraction(1, 5), Fraction(4, 5)))
    assert pick == oracle == pools[0]


def test_stake_single_pool():
    p = _pool("Curve", "0.01", "0.9")
    assert decide_stake(MarketInfo((p,)), "ETH", "low", "long") == p


def test_stake_high_risk_short_term_exhaustive():
    pools = [_pool("Aave", "0.03", "0.1", 500), _pool("Compound", "0.05", "0.3", 200),
             _pool("Yearn", "0.12", "0.8", 100)]
    pick = decide_stake(MarketInfo(tuple(pools)), "ETH", "high", "short")
    # high-risk: w_risk 0.1; short-term doubles the depth weight
    scores = {p.platform: _score(p, pools, Fraction(2, 5), Fraction(2, 5), Fraction(1, 10)) for p in pools}
    assert pick.platform == max(scores, key=scores.get)


def test_stake_tie_breaks_on_platform_name():
    pools = [_pool("Yearn", "0.05", "0.2"), _pool("Compound", "0.05", "0.2")]
    assert decide_stake(MarketInfo(tuple(pools)), "ETH", None, None).platform == "Compound"


def test_stake_no_pool():
    with pytest.raises(NoCandidate):
        decide_stake(MarketInfo(()), "ETH", None, None)


def _listing(coll, ask, volume, trend, holders):
    return NftListing(coll, "0x1", "0xs", "ETH", ask * ETH, volume * ETH, Fraction(trend), holders)


def test_nft_filters_to_single_listing():
    listings = (_listing("0xc1", 75, 1200, "0.12", 3000), _listing("0xc2", 60, 200, "0.05", 800),
                _listing("0xc3", 70, 1500, "-0.03", 5000))
    quals = ("popular", "price-increasing")
    passing = [x for x in listings if x.volume >= 1200 * ETH and x.trend > 0]
    assert qualifier_filter(list(listings), quals) == passing
    pick = decide_nft_purchase(MarketInfo((), listings), 80 * ETH, "ETH", quals)
    assert pick == passing[0]


def test_nft_budget_below_every_ask():
    listings = (_listing("0xc1", 75, 1, "0", 1), _listing("0xc2", 60, 1, "0", 1))
    with pytest.raises(NoCandidate):
        decide_nft_purchase(MarketInfo((), listings), 10 * ETH, "ETH", ())


def test_time_saving_sale_price():
    assert decide_nft_price(10 * ETH, 12 * ETH, ("time-saving",)) == 98 * ETH // 10
    assert decide_nft_price(10 * ETH, 12 * ETH, ("profitable",)) == 12 * ETH


def test_sell_statement_lists_at_discount(genesis):
    (plan,) = compile_src("sell NFT [0x3] in collection [0xC5] from wallet[0xA] using time-saving strategy;",
                          approved_state(genesis))
    assert plan.action.price == 98 * ETH // 10


def test_policy_rejects_negative_weight():
    with pytest.raises(ValueError):
        DecisionPolicy(weights={"apy": Fraction(-1)})


# -- conservatism against the simulator ---------------------------------------------

_STMTS = st.one_of(
    st.builds(lambda n, tol: f"swap {n} USDC from wallet[0xA] for ETH on Uniswap checking slippage < {tol};",
              st.integers(1, 500_000), st.sampled_from(["0.0001", "0.001", "0.01", "0.05"])),
    st.builds(lambda n: f"swap {n} ETH from wallet[0xA] for USDC on Sushiswap;", st.integers(1, 150)),
    st.builds(lambda n: f"transfer {n} USDC from wallet[0xA] to wallet[0xB];", st.integers(0, 900_000)),
    st.builds(lambda a, b: f"add {a} USDC, {b} USDT to Uniswap receiving liquidity token to wallet[0xA];",
              st.integers(1, 100_000), st.integers(1, 100_000)),
    st.builds(lambda n: f"stake {n} ETH from wallet[0xA] on Aave;", st.integers(1, 200)),
)


@settings(max_examples=150, deadline=None)
@given(_STMTS)
def test_realized_deltas_respect_declared(src):
    cfg = motivating_genesis()
    cfg["balances"]["0xa"]["USDT"] = "1000000"
    state = approved_state(cfg)
    (plan,) = compile_src(src, state)
    before = {k: state.balance(*k) for k in {*plan.increases, *plan.decreases}}
    tx = sign_plan(plan, SENDER_SK, state.state_root)
    receipt = apply_transaction(state, tx)
    assert receipt.ok, receipt.reason
    for key in before:
        change = state.balance(*key) - before[key]
        assert change >= plan.increases.get(key, 0) - plan.decreases.get(key, 0)
        debit = max(0, -change)
        assert debit <= plan.decreases.get(key, 0)
    for w, a, d in receipt.deltas:
        if d < 0:
            assert -d <= plan.decreases.get((w, a), 0)


def test_options_set_gas_price_and_nonce(genesis):
    program = parse("transfer 1 USDC from wallet[0xA] to wallet[0xB];")
    plan = compile_statement(program.statements[0], approved_state(genesis), DecisionPolicy(), SENDER_PK,
                             options=CompileOptions(gas_price=42, nonce_base=100))
    assert (plan.gas_price, plan.nonce) == (42, 101)
    assert plan.id == plan.derived_id()
