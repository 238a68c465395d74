from __future__ import annotations

import random

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import SENDER_PK, SENDER_SK, approved_state
from intentkit.compiler import DecisionPolicy, compile_program
from intentkit.icl import parse
from intentkit.icl.parser import parse_condition
from intentkit.ledger import actions as A
from intentkit.ledger.node import LedgerNode
from intentkit.optimizer import executor as X
from intentkit.optimizer import graph as G
from intentkit.optimizer.graph import DependencyGraph, base_balances_for, build_dependency_graph
from intentkit.optimizer.knapsack import fits, greedy_knapsack, multiple_knapsack
from intentkit.tx import make_plan, sign_plan
from intentkit.workbench.genesis import EXAMPLE_PROGRAM, motivating_genesis
from intentkit.workbench.pipeline import PipelineOptions, run_pipeline
from oracles import brute_force_knapsack, graphs_for, pruning_safety_case, random_transfer_set

USDC = 10**6


# -- knapsack -----------------------------------------------------------------

def test_knapsack_empty():
    assert multiple_knapsack([], {"A": 5}) == []


def test_knapsack_single_type_example():
    pk = [{"A": 3}, {"A": 2}, {"A": 4}]
    got = multiple_knapsack(pk, {"A": 5})
    assert sorted(got) == [0, 1]


def test_knapsack_two_type_example():
    pk = [{"A": 1, "B": 2}, {"A": 2, "B": 1}, {"A": 2, "B": 2}]
    assert sorted(multiple_knapsack(pk, {"A": 3, "B": 3})) == [0, 1]


def test_knapsack_zero_capacity_takes_only_empty_packages():
    pk = [{"A": 1}, {}, {"A": 0}, {"B": 2}]
    assert sorted(multiple_knapsack(pk, {"A": 0, "B": 0})) == [1, 2]


def test_knapsack_missing_type_has_zero_capacity():
    assert multiple_knapsack([{"Z": 1}], {"A": 9}) == []


def _instances():
    return st.integers(1, 3).flatmap(lambda k: st.tuples(
        st.lists(st.dictionaries(st.sampled_from("ABC"[:k]), st.integers(0, 6), max_size=k), max_size=12),
        st.fixed_dictionaries({t: st.integers(0, 12) for t in "ABC"[:k]}),
    ))


@settings(max_examples=300, deadline=None)
@given(_instances())
def test_knapsack_matches_brute_force(inst):
    packages, caps = inst
    got = multiple_knapsack(packages, caps)
    assert len(set(got)) == len(got)
    assert fits(packages, got, caps)
    assert len(got) == brute_force_knapsack(packages, caps)


@settings(max_examples=200, deadline=None)
@given(_instances())
def test_greedy_fits_and_never_beats_exact(inst):
    packages, caps = inst
    got = greedy_knapsack(packages, caps)
    assert fits(packages, got, caps)
    assert len(got) <= len(multiple_knapsack(packages, caps))


def test_knapsack_random_batch_against_brute_force():
    rng = random.Random(7)
    for _ in range(500):
        k = rng.randint(1, 3)
        types = "ABC"[:k]
        pk = [{t: rng.randint(0, 5) for t in types if rng.random() < 0.8} for _ in range(rng.randint(0, 12))]
        caps = {t: rng.randint(0, 15) for t in types}
        got = multiple_knapsack(pk, caps)
        assert fits(pk, got, caps) and len(got) == brute_force_knapsack(pk, caps)


# -- graph construction -------------------------------------------------------

@pytest.fixture
def example_graph():
    state = approved_state(motivating_genesis())
    txset, errors = compile_program(parse(EXAMPLE_PROGRAM), state, DecisionPolicy(), SENDER_PK)
    assert errors == []
    return build_dependency_graph(txset.plans, base_balances_for(txset.plans, state))


def _edges_by_intent(g):
    return sorted((g.plans[p].intent_index, g.plans[c].intent_index) for p, c in g.edges())


def test_example_edges(example_graph):
    assert _edges_by_intent(example_graph) == [(1, 4), (2, 3), (2, 5)]


def test_example_predicted_usdc_for_liquidity(example_graph):
    j = next(i for i, p in enumerate(example_graph.plans) if p.intent_index == 4)
    # 1,000,000 minus the two concurrent USDC spends (400,000 and 200,000)
    assert example_graph.predicted[j][("0xa", "USDC")] == 400_000 * USDC


def test_example_pruning_keeps_needed_edges(example_graph):
    example_graph.prune()
    assert _edges_by_intent(example_graph) == [(1, 4), (2, 3), (2, 5)]
    assert example_graph.infeasible == set()


def test_parents_have_smaller_intent_index(example_graph):
    for p, c in example_graph.edges():
        assert example_graph.plans[p].intent_index < example_graph.plans[c].intent_index


def _plan(i, src, dst, asset, amt):
    return make_plan(intent_index=i, action=A.TokenTransfer(asset, amt, src, dst), sender=SENDER_PK,
                     gas_limit=50_000, gas_price=1, increases={(dst, asset): amt},
                     decreases={(src, asset): amt}, nonce=i)


def test_disjoint_transfers_have_no_edges():
    plans = [_plan(1, "0xa", "0xb", "USDC", 5), _plan(2, "0xc", "0xd", "USDC", 5)]
    g = build_dependency_graph(plans, {("0xa", "USDC"): 5, ("0xc", "USDC"): 5})
    assert g.edges() == []


def test_borrow_gets_pinned_collateral_edge():
    stake = make_plan(intent_index=1, action=A.StakeDeposit("Aave", "ETH", 10, "0xa"), sender=SENDER_PK,
                      gas_limit=1, gas_price=1, decreases={("0xa", "ETH"): 10})
    borrow = make_plan(intent_index=2, action=A.LendingBorrow("Aave", "0xa", "USDC", 5), sender=SENDER_PK,
                       gas_limit=1, gas_price=1, increases={("0xa", "USDC"): 5})
    g = build_dependency_graph([stake, borrow], {("0xa", "ETH"): 10})
    assert g.edges() == [(0, 1)] and (0, 1) in g.pinned
    g.prune()
    assert g.edges() == [(0, 1)]


def test_predicted_matches_definition():
    rng = random.Random(3)
    for _ in range(50):
        _, plans, base, _ = random_transfer_set(rng, rng.randint(1, 8))
        g = build_dependency_graph(plans, base)
        anc = g.ancestor_masks()
        for j, pj in enumerate(plans):
            for key in pj.decreases:
                want = base.get(key, 0)
                for i, pi in enumerate(plans):
                    if i == j:
                        continue
                    if anc[j] >> i & 1:
                        want += pi.increases.get(key, 0) - pi.decreases.get(key, 0)
                    elif not anc[i] >> j & 1:
                        want -= pi.decreases.get(key, 0)
                assert g.predicted[j][key] == want


# -- pruning ------------------------------------------------------------------

def test_single_parent_removed_when_pairs_do_not_fit():
    # j consumes 6 USDC from 0xa; base 10 and each producer adds 4, so slack is 10+4+4+4-6 = 16
    # with all three as ancestors. Make slack 4: base 2.
    producers = [_plan(i, f"0x{w}", "0xa", "USDC", 4) for i, w in ((1, "b"), (2, "c"), (3, "d"))]
    consumer = _plan(4, "0xa", "0xe", "USDC", 10)
    base = {("0xb", "USDC"): 4, ("0xc", "USDC"): 4, ("0xd", "USDC"): 4, ("0xa", "USDC"): 2}
    g = build_dependency_graph(producers + [consumer], base)
    assert g.slack(3) == {("0xa", "USDC"): 4}
    g.prune()
    assert len(g.parents[3]) == 2
    assert g.is_safe(3)


def test_zero_slack_removes_nothing():
    producers = [_plan(1, "0xb", "0xa", "USDC", 3), _plan(2, "0xc", "0xa", "USDC", 3)]
    consumer = _plan(3, "0xa", "0xe", "USDC", 6)
    g = build_dependency_graph(producers + [consumer],
                               {("0xb", "USDC"): 3, ("0xc", "USDC"): 3, ("0xa", "USDC"): 0})
    g.prune()
    assert g.parents[2] == {0, 1}


def test_redundant_parent_prunes_and_chain_stays_ordered():
    # A -> B -> C plus a direct A -> C; the direct edge is implied and goes away
    a = _plan(1, "0xb", "0xa", "USDC", 5)
    b = _plan(2, "0xa", "0xc", "USDC", 5)
    c = _plan(3, "0xc", "0xa", "USDC", 5)
    d = _plan(4, "0xa", "0xd", "USDC", 5)
    g = build_dependency_graph([a, b, c, d], {("0xb", "USDC"): 5, ("0xa", "USDC"): 0, ("0xc", "USDC"): 0})
    assert (0, 3) in g.edges() and (2, 3) in g.edges()
    g.prune()
    assert (0, 3) not in g.edges()
    anc = g.ancestor_masks()
    assert g.reaches(0, 3, anc) and g.reaches(1, 3, anc)


def test_slack_parent_pruned_with_rewiring():
    # B has enough of its own USDC, so its edge to A can go; C must still follow A.
    a = _plan(1, "0xb", "0xa", "USDC", 5)
    b = _plan(2, "0xa", "0xc", "USDC", 5)
    c = _plan(3, "0xa", "0xd", "USDC", 5)
    g = build_dependency_graph([a, b, c], {("0xb", "USDC"): 5, ("0xa", "USDC"): 5})
    g.prune()
    for j in range(3):
        assert g.is_safe(j)
    assert g.compute_predicted() == g.predicted


def test_maximality_against_brute_force(monkeypatch):
    calls = []
    real = multiple_knapsack

    def spy(packages, caps):
        got = real(packages, caps)
        calls.append((list(packages), dict(caps), got))
        return got

    monkeypatch.setattr(G, "multiple_knapsack", spy)
    rng = random.Random(11)
    for _ in range(150):
        _, plans, base, _ = random_transfer_set(rng, rng.randint(2, 9), max_balance=20)
        build_dependency_graph(plans, base).prune()
    assert calls
    for packages, caps, got in calls:
        assert len(got) == brute_force_knapsack(packages, caps)


def test_incremental_predicted_equals_recompute_every_step(monkeypatch):
    checked = 0
    real = DependencyGraph.prune_node

    def checked_prune(self, j, *, verify=True):
        nonlocal checked
        rec = real(self, j, verify=verify)
        assert self.predicted == self.compute_predicted()
        checked += 1
        return rec

    monkeypatch.setattr(DependencyGraph, "prune_node", checked_prune)
    rng = random.Random(5)
    for _ in range(100):
        _, plans, base, _ = random_transfer_set(rng, rng.randint(1, 10))
        build_dependency_graph(plans, base).prune()
    assert checked > 0


def test_unverified_pruning_is_still_consistent():
    rng = random.Random(8)
    for _ in range(100):
        _, plans, base, _ = random_transfer_set(rng, rng.randint(1, 10))
        g = build_dependency_graph(plans, base).prune(verify=False)
        assert g.predicted == g.compute_predicted()


def test_critical_path_never_grows():
    rng = random.Random(9)
    for _ in range(200):
        _, plans, base, _ = random_transfer_set(rng, rng.randint(1, 12))
        before, after = graphs_for(plans, base)
        assert after.critical_path() <= before.critical_path()
        after.topological_order()  # still acyclic


def test_pruning_removes_some_edges_overall():
    rng = random.Random(10)
    removed = 0
    for _ in range(100):
        _, plans, base, _ = random_transfer_set(rng, rng.randint(3, 8), max_balance=20)
        before, after = graphs_for(plans, base)
        removed += len(before.edges()) - len(after.edges())
    assert removed > 0


def test_infeasible_node_flagged():
    g = build_dependency_graph([_plan(1, "0xa", "0xb", "USDC", 5)], {("0xa", "USDC"): 1})
    g.prune()
    assert g.infeasible == {0}
    assert g.to_json()["nodes"][0]["infeasible"] is True


@pytest.mark.parametrize("seed", range(4))
def test_pruning_safety_all_orders(seed):
    rng = random.Random(seed)
    total_orders = 0
    for _ in range(40):
        r = pruning_safety_case(rng, rng.randint(1, 7), exhaustive=True)
        assert r["violations"] == []
        assert r["lost_safety"] == []
        total_orders += r["orders"]
    assert total_orders > 40


def test_pruning_safety_random_orders_large():
    rng = random.Random(99)
    for n in (20, 50, 100):
        r = pruning_safety_case(rng, n, exhaustive=False, random_orders=20)
        assert r["violations"] == []
        assert r["lost_safety"] == []


def test_dot_and_json_export(example_graph):
    dot = example_graph.to_dot()
    assert dot.startswith("digraph") and dot.count("->") == 3
    assert example_graph.dumps() == build_dependency_graph(example_graph.plans, example_graph.base).dumps()


# -- executor -----------------------------------------------------------------

def _transfer_node(n_transfers, *, approve=True, amount=1):
    node = LedgerNode.from_genesis({"balances": {f"0x{i:02x}": {"USDC": "100"} for i in range(n_transfers)}},
                                   block_interval=0.1)
    if approve:
        for i in range(n_transfers):
            node.approve(f"0x{i:02x}", SENDER_PK)
    plans = [_plan(i + 1, f"0x{i:02x}", "0xff", "USDC", amount * USDC) for i in range(n_transfers)]
    root = node.state_root()
    txs = [sign_plan(p, SENDER_SK, root) for p in plans]
    base = base_balances_for(plans, node.state)
    return node, build_dependency_graph(plans, base).prune(), txs


def test_independent_transfers_parallel_vs_serial():
    node, g, txs = _transfer_node(10)
    par = X.execute_graph(g, txs, node, config=X.ExecutorConfig(workers=8))
    assert par.counts()["EXECUTED"] == 10
    assert par.blocks == 2
    assert par.wall_clock == pytest.approx(0.2)
    node2, g2, txs2 = _transfer_node(10)
    ser = X.execute_graph(g2, txs2, node2, config=X.ExecutorConfig(serial=True))
    assert ser.counts()["EXECUTED"] == 10
    assert ser.blocks == 10
    assert ser.wall_clock == pytest.approx(1.0)
    for o in par.nodes:
        assert o.submitted_block < o.confirmed_block


def _chain(node_approved=False):
    node = LedgerNode.from_genesis({"balances": {"0xa": {"USDC": "10"}}}, block_interval=0.1)
    if node_approved:
        node.approve("0xa", SENDER_PK)
    for w in ("0xb", "0xc"):
        node.approve(w, SENDER_PK)
    plans = [_plan(1, "0xa", "0xb", "USDC", 5 * USDC), _plan(2, "0xb", "0xc", "USDC", 5 * USDC),
             _plan(3, "0xc", "0xd", "USDC", 5 * USDC)]
    txs = [sign_plan(p, SENDER_SK, node.state_root()) for p in plans]
    g = build_dependency_graph(plans, base_balances_for(plans, node.state)).prune()
    return node, g, txs


def test_chain_executes_in_order():
    node, g, txs = _chain(node_approved=True)
    rep = X.execute_graph(g, txs, node)
    assert rep.statuses() == ["EXECUTED"] * 3
    blocks = [o.confirmed_block for o in rep.nodes]
    assert blocks == sorted(blocks) and len(set(blocks)) == 3


def test_parent_revert_skips_descendants():
    node, g, txs = _chain(node_approved=False)
    rep = X.execute_graph(g, txs, node)
    assert rep.statuses() == ["FAILED", "SKIPPED", "SKIPPED"]
    assert rep.nodes[0].reason == "NotAuthorized"
    for o in rep.nodes[1:]:
        assert o.receipt is None and o.submitted_block is None
        assert node.get_receipt(o.tx_id) is None


def test_always_deny_terminates_with_skips():
    node, g, txs = _chain(node_approved=True)
    rep = X.execute_graph(g, txs, node, confirm_hook=lambda summary, verdict: False)
    assert rep.statuses() == ["SKIPPED"] * 3
    assert rep.nodes[0].reason == "Declined"
    assert {o.reason for o in rep.nodes[1:]} == {"ParentNotExecuted"}


class _Verdict:
    def __init__(self, risk):
        self.risk = risk

    def to_json(self):
        return {"risk": self.risk}


def test_high_risk_skipped_unless_forced():
    node, g, txs = _transfer_node(2)
    rep = X.execute_graph(g, txs, node, feasibility_hook=lambda tx: _Verdict("HIGH"))
    assert rep.statuses() == ["SKIPPED", "SKIPPED"] and rep.nodes[0].reason == "HighRisk"
    node, g, txs = _transfer_node(2)
    rep = X.execute_graph(g, txs, node, feasibility_hook=lambda tx: _Verdict("HIGH"),
                          config=X.ExecutorConfig(force=True))
    assert rep.statuses() == ["EXECUTED", "EXECUTED"]
    assert rep.nodes[0].feasibility == {"risk": "HIGH"}


def test_trigger_deadline():
    node = LedgerNode.from_genesis({"balances": {"0xa": {"USDC": "10"}}, "prices": {"ETH": "4000"}},
                                   block_interval=0.1)
    node.approve("0xa", SENDER_PK)
    p = make_plan(intent_index=1, action=A.TokenTransfer("USDC", 1, "0xa", "0xb"), sender=SENDER_PK,
                  gas_limit=50_000, gas_price=1, increases={("0xb", "USDC"): 1},
                  decreases={("0xa", "USDC"): 1}, trigger=parse_condition("price ETH > 100000"))
    tx = sign_plan(p, SENDER_SK, node.state_root())
    g = build_dependency_graph([p], base_balances_for([p], node.state))
    rep = X.execute_graph(g, [tx], node, config=X.ExecutorConfig(trigger_deadline=3))
    assert rep.statuses() == ["SKIPPED"] and rep.nodes[0].reason == "DeadlineExceeded"
    assert rep.blocks == 3


def test_trigger_fires_after_price_moves():
    node = LedgerNode.from_genesis({"balances": {"0xa": {"USDC": "10"}}, "prices": {"ETH": "4000"}},
                                   block_interval=0.1)
    node.approve("0xa", SENDER_PK)
    p = make_plan(intent_index=1, action=A.TokenTransfer("USDC", 1, "0xa", "0xb"), sender=SENDER_PK,
                  gas_limit=50_000, gas_price=1, increases={("0xb", "USDC"): 1},
                  decreases={("0xa", "USDC"): 1}, trigger=parse_condition("price ETH > 4500"))
    tx = sign_plan(p, SENDER_SK, node.state_root())
    g = build_dependency_graph([p], base_balances_for([p], node.state))
    polls = {"n": 0}

    def feas(t):
        return None

    real_mine = node.mine

    def mine():
        polls["n"] += 1
        if polls["n"] == 2:
            node.set_price("ETH", 5000 * 10**6)  # micro-USD
        return real_mine()

    node.mine = mine
    rep = X.execute_graph(g, [tx], node, feasibility_hook=feas)
    assert rep.statuses() == ["EXECUTED"]
    assert rep.nodes[0].submitted_block >= 2


def test_example_trigger_waits_for_swap():
    res = run_pipeline(EXAMPLE_PROGRAM, motivating_genesis(), PipelineOptions(seed=0))
    by_idx = {o.intent_index: o for o in res.report.nodes}
    assert all(o.status == "EXECUTED" for o in by_idx.values())
    assert by_idx[4].submitted_block >= by_idx[1].confirmed_block
    assert by_idx[4].confirmed_block > by_idx[1].confirmed_block


def test_every_node_gets_one_terminal_status():
    rng = random.Random(21)
    for _ in range(20):
        state, plans, base, txs = random_transfer_set(rng, rng.randint(1, 12))
        node = LedgerNode(state.copy(), block_interval=0.0)
        g = build_dependency_graph(plans, base).prune()
        rep = X.execute_graph(g, txs, node, config=X.ExecutorConfig(workers=rng.randint(1, 8)))
        assert all(s in X.TERMINAL for s in rep.statuses())
        for o in rep.nodes:
            if o.status == "SKIPPED":
                assert o.receipt is None
            if o.status == "EXECUTED":
                assert o.receipt is not None
