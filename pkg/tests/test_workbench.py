from __future__ import annotations

import pytest

from intentkit.icl import parse
from intentkit.ledger.node import LedgerNode
from intentkit.workbench.evaluation import (
    CheckerWorkload, Confusion, EvalMetrics, evaluate_checker, evaluate_speedup,
)
from intentkit.feasibility import FeasibilityConfig
from intentkit.workbench.generate import (
    FlowConfig, FlowGenerator, GenerationExhausted, GeneratorConfig, generate_program,
)
from intentkit.workbench.genesis import EXAMPLE_PROGRAM, motivating_genesis, workbench_genesis
from intentkit.workbench.pipeline import PipelineError, PipelineOptions, Session, run_pipeline


# -- program generator --------------------------------------------------------

@pytest.mark.parametrize("seed", range(5))
def test_di_zero_has_no_dependencies(seed):
    prog = generate_program(GeneratorConfig(n=50, di=0.0, seed=seed, workers=50))
    assert prog.depends_on == [None] * 50
    assert prog.dependency_fraction() == 0.0


@pytest.mark.parametrize("seed", range(5))
def test_di_one_depends_everywhere(seed):
    prog = generate_program(GeneratorConfig(n=50, di=1.0, seed=seed, workers=50))
    assert prog.depends_on[0] is None
    assert all(d is not None and d < x for x, d in enumerate(prog.depends_on[1:], start=2))
    assert prog.dependency_fraction() == 1.0


def test_di_half_concentrates():
    prog = generate_program(GeneratorConfig(n=1000, di=0.5, seed=7, workers=1000))
    assert 0.45 <= prog.dependency_fraction() <= 0.55


def test_generator_is_deterministic():
    a = generate_program(GeneratorConfig(n=40, di=0.5, seed=3, workers=40))
    b = generate_program(GeneratorConfig(n=40, di=0.5, seed=3, workers=40))
    assert a.to_json() == b.to_json()
    c = generate_program(GeneratorConfig(n=40, di=0.5, seed=4, workers=40))
    assert c.source != a.source


@pytest.mark.parametrize("di", [0.0, 0.5, 1.0])
@pytest.mark.parametrize("seed", range(4))
def test_generated_programs_parse_and_compile(di, seed):
    n = 40
    prog = generate_program(GeneratorConfig(n=n, di=di, seed=seed, workers=n))
    program = parse(prog.source)
    assert len(program.statements) == n
    session = Session(LedgerNode.from_genesis(workbench_genesis(n)), PipelineOptions(seed=seed))
    session.attest()
    txset, signed, _ = session.compile(program)
    assert len(txset.plans) == n and len(signed) == n


def test_generated_program_executes_fully():
    n = 30
    prog = generate_program(GeneratorConfig(n=n, di=1.0, seed=2, workers=n))
    res = run_pipeline(prog.source, workbench_genesis(n), PipelineOptions(seed=2, feasibility=None))
    assert res.report.counts()["EXECUTED"] == n


def test_dependency_edges_follow_drawn_producers():
    n = 30
    prog = generate_program(GeneratorConfig(n=n, di=0.7, seed=5, workers=n))
    res = run_pipeline(prog.source, workbench_genesis(n),
                       PipelineOptions(seed=5, feasibility=None, prune=False))
    g = res.graph
    idx = {p.intent_index: i for i, p in enumerate(g.plans)}
    for x, dep in enumerate(prog.depends_on, start=1):
        parents = {g.plans[p].intent_index for p in g.parents[idx[x]]}
        if dep is None:
            assert parents == set()
        else:
            assert dep in parents


def test_mix_restricts_families():
    prog = generate_program(GeneratorConfig(n=30, di=0.0, seed=1, workers=30, mix={"transfer": 1.0}))
    assert set(prog.families) == {"transfer"}


def test_generator_validation():
    with pytest.raises(ValueError):
        GeneratorConfig(di=1.5)
    with pytest.raises(ValueError):
        GeneratorConfig(n=0)
    with pytest.raises(ValueError):
        GeneratorConfig(mix={"teleport": 1.0})
    with pytest.raises(GenerationExhausted):
        generate_program(GeneratorConfig(n=10, di=0.0, workers=3))


# -- flows --------------------------------------------------------------------

def test_rate_zero_submits_nothing():
    node = LedgerNode.from_genesis(motivating_genesis())
    flows = FlowGenerator(node, FlowConfig(rate=0))
    for _ in range(3):
        assert flows.step() == []
    assert node.get_pending() == []


def test_swap_only_mix():
    node = LedgerNode.from_genesis(motivating_genesis())
    flows = FlowGenerator(node, FlowConfig(rate=12, mix={"swap": 1.0}, seed=2))
    for _ in range(3):
        flows.step()
        node.mine()
    assert flows.kinds and set(flows.kinds) == {"DexSwap"}


def test_overload_grows_backlog():
    g = motivating_genesis()
    g["blockGasLimit"] = 8 * 110_793  # about eight swaps per block
    node = LedgerNode.from_genesis(g)
    flows = FlowGenerator(node, FlowConfig(rate=16, mix={"swap": 1.0}, seed=1))
    backlog = []
    for _ in range(8):
        flows.step()
        node.mine()
        backlog.append(len(node.get_pending()))
    assert all(b > a for a, b in zip(backlog, backlog[1:]))
    assert backlog[-1] >= 7 * 8 * 0.8


def test_flows_deterministic():
    roots = []
    for _ in range(2):
        node = LedgerNode.from_genesis(motivating_genesis())
        flows = FlowGenerator(node, FlowConfig(rate=10, seed=9))
        for _ in range(4):
            flows.step()
            node.mine()
        roots.append(node.state_root())
    assert roots[0] == roots[1]


# -- metrics ------------------------------------------------------------------

def test_confusion_metrics():
    m = EvalMetrics("x")
    for p, a in [(True, True)] * 6 + [(True, False)] * 1 + [(False, True)] * 2 + [(False, False)] * 1:
        m.confusion.add(p, a)
    assert m.confusion.total == 10
    assert m.accuracy == pytest.approx(0.7)
    assert m.precision == pytest.approx(6 / 7)
    assert m.recall == pytest.approx(6 / 8)
    assert set(m.to_json()) == {"label", "n", "tp", "fp", "tn", "fn", "accuracy", "precision", "recall"}


def test_empty_confusion_is_not_a_division_error():
    assert EvalMetrics("e").accuracy == 1.0 and Confusion().total == 0


def test_uncongested_checker_is_perfect():
    w = CheckerWorkload(candidates=25, seed=1)
    w.flows.rate = 0
    res = evaluate_checker(w, [FeasibilityConfig(k=1.0)])
    assert res.by_label("K=1").accuracy == 1.0
    assert res.by_label("baseline").accuracy == 1.0
    assert res.baseline.confusion.total == 25


def test_speedup_small_run_is_sane():
    res = evaluate_speedup([0.0, 1.0], range(2), n=16)
    assert len(res.rows) == 4
    for r in res.rows:
        assert r["parallelWallClock"] <= r["serialWallClock"]
    means = res.mean_by_di()
    assert means[0.0] >= means[1.0]


# -- pipeline -----------------------------------------------------------------

def test_example_pipeline_reports_all_terminal():
    res = run_pipeline(EXAMPLE_PROGRAM, motivating_genesis(), PipelineOptions(seed=0))
    assert res.report.statuses() == ["EXECUTED"] * 5
    doc = res.to_json()
    assert doc["attestation"]["verified"] is True
    assert len(doc["execution"]["nodes"]) == 5


def test_serial_keeps_statuses_and_takes_longer():
    par = run_pipeline(EXAMPLE_PROGRAM, motivating_genesis(), PipelineOptions(seed=0)).report
    ser = run_pipeline(EXAMPLE_PROGRAM, motivating_genesis(), PipelineOptions(seed=0, serial=True)).report
    assert par.statuses() == ser.statuses()
    assert ser.wall_clock > par.wall_clock


def test_declined_node_skips_descendants():
    def confirm(summary, verdict):
        return not summary.startswith("#2 ")

    res = run_pipeline(EXAMPLE_PROGRAM, motivating_genesis(), PipelineOptions(seed=0), confirm=confirm)
    by_idx = {o.intent_index: o for o in res.report.nodes}
    assert by_idx[2].status == "SKIPPED" and by_idx[2].reason == "Declined"
    assert by_idx[3].status == by_idx[5].status == "SKIPPED"
    assert by_idx[1].status == by_idx[4].status == "EXECUTED"


def test_pipeline_errors_name_their_stage():
    with pytest.raises(PipelineError) as e:
        run_pipeline("swap 1 USDC from wallet[0xA] for", motivating_genesis())
    assert e.value.stage == "parse"
    with pytest.raises(PipelineError) as e:
        run_pipeline("swap 1 ETH from wallet[0xA] for DAI on Curve;", motivating_genesis())
    assert e.value.stage == "compile"
