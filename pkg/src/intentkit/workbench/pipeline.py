"""End-to-end composition: enclave session, dependency graph, execution."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any

from intentkit.compiler import CompileError, CompileOptions, DecisionPolicy, TransactionSet
from intentkit.enclave import (
    AttestationVerifier, Enclave, HardwareRoot, build_digest, config_bytes, measure,
)
from intentkit.feasibility import FeasibilityConfig, node_hook
from intentkit.icl import IclError, ast, parse
from intentkit.ledger.node import LedgerNode
from intentkit.optimizer import (
    DependencyGraph, ExecutionReport, ExecutorConfig, auto_confirm, base_balances_for,
    build_dependency_graph, execute_graph,
)
from intentkit.tx import SignedTransaction


class PipelineError(Exception):
    def __init__(self, stage: str, cause: BaseException | str) -> None:
        super().__init__(f"{stage}: {cause}")
        self.stage = stage
        self.cause = cause


@dataclass
class PipelineOptions:
    seed: int = 0
    workers: int = 8
    serial: bool = False
    mode: str = "sim"
    trigger_deadline: int = 64
    block_interval: float | None = None
    feasibility: FeasibilityConfig | None = field(default_factory=FeasibilityConfig)
    force: bool = False
    prune: bool = True
    timings: bool = False
    gas_price: int = 10
    policy: DecisionPolicy = field(default_factory=DecisionPolicy)


@dataclass
class PipelineResult:
    node: LedgerNode
    attestation: dict[str, Any]
    state_root: str
    txset: TransactionSet
    signed: list[SignedTransaction]
    graph: DependencyGraph
    report: ExecutionReport

    def to_json(self) -> dict[str, Any]:
        return {
            "attestation": self.attestation,
            "stateRoot": self.state_root,
            "transactions": self.txset.to_json(),
            "graph": self.graph.to_json(),
            "execution": self.report.to_json(),
        }


def program_wallets(program: ast.Program) -> list[str]:
    """Every wallet a program names; the user approves the enclave key on each."""
    out = set()
    for ts in program.statements:
        s = ts.statement
        for f in ("wallet", "from_wallet", "to_wallet", "receiver"):
            w = getattr(s, f, None)
            if w is not None:
                out.add(w)
    return sorted(out)


class Session:
    """One attested enclave bound to one node, reusable for compile-only work."""

    def __init__(self, node: LedgerNode, opts: PipelineOptions) -> None:
        self.node = node
        self.opts = opts
        options = CompileOptions(gas_price=opts.gas_price)
        self.hardware = HardwareRoot(f"hw:{opts.seed}".encode())
        self.enclave = Enclave(self.hardware, policy=opts.policy, options=options,
                               key_seed=f"eoa:{opts.seed}".encode())
        expected = measure(build_digest(), config_bytes(opts.policy, options))
        self.verifier = AttestationVerifier(self.hardware.public_key, expected, seed=opts.seed)
        self.pk = ""
        self.attestation: dict[str, Any] = {}

    def attest(self) -> None:
        nonce = self.verifier.fresh_nonce()
        report = self.enclave.attest(nonce)
        if not self.verifier.verify(report):
            raise PipelineError("attest", "attestation report did not verify")
        self.pk = report.pk
        self.attestation = {**report.to_json(), "verified": True}

    def compile(self, program: ast.Program) -> tuple[TransactionSet, list[SignedTransaction], str]:
        for w in program_wallets(program):
            self.node.approve(w, self.pk)
        try:
            served = self.enclave.acquire(self.node, program)
        except Exception as e:
            raise PipelineError("acquire", e) from e
        try:
            signed = self.enclave.compile_and_sign(program)
        except CompileError as e:
            raise PipelineError("compile", e) from e
        except Exception as e:
            raise PipelineError("sign", e) from e
        txset = TransactionSet(tuple(s.plan for s in signed), served["stateRoot"])
        return txset, signed, served["stateRoot"]


def parse_program(source: str) -> ast.Program:
    try:
        return parse(source)
    except IclError as e:
        raise PipelineError("parse", e) from e


def run_pipeline(source: str | ast.Program, genesis: dict[str, Any], opts: PipelineOptions | None = None,
                 *, confirm=None, node: LedgerNode | None = None) -> PipelineResult:
    opts = opts or PipelineOptions()
    program = parse_program(source) if isinstance(source, str) else source
    if node is None:
        node = LedgerNode.from_genesis(genesis)
    session = Session(node, opts)
    session.attest()
    txset, signed, root = session.compile(program)
    base = base_balances_for(txset.plans, node.snapshot_state())
    graph = build_dependency_graph(txset.plans, base)
    if opts.prune:
        graph.prune()
    cfg = ExecutorConfig(workers=opts.workers, trigger_deadline=opts.trigger_deadline, mode=opts.mode,
                         serial=opts.serial, force=opts.force, block_interval=opts.block_interval,
                         timings=opts.timings)
    hook = node_hook(node, opts.feasibility, timings=opts.timings) if opts.feasibility is not None else None
    try:
        report = execute_graph(graph, signed, node, hook, confirm or auto_confirm, cfg)
    except Exception as e:
        raise PipelineError("execute", e) from e
    return PipelineResult(node, session.attestation, root, txset, signed, graph, report)
