"""Concurrent execution of a pruned dependency graph.

Two drivers share the same per-node logic:

* ``sim`` runs in lockstep with the chain. Each round dispatches ready
  nodes to free workers, lets every in-flight node take one step (trigger
  poll, feasibility, confirm, submit), mines exactly one block and collects
  receipts. Wall clock is ``blocks * block_interval``, so reports are
  reproducible.
* ``live`` runs nodes on a thread pool against a node whose background
  miner produces blocks in real time.
"""

from __future__ import annotations

import json
import threading
import time
from collections.abc import Callable, Mapping, Sequence
from concurrent.futures import FIRST_COMPLETED, ThreadPoolExecutor, wait
from dataclasses import dataclass, field
from typing import Any, Protocol

from intentkit.compiler.lowering import describe
from intentkit.icl import IclError
from intentkit.ledger.node import LedgerNode, NodeError
from intentkit.optimizer.graph import DependencyGraph
from intentkit.tx import SignedTransaction

PENDING, READY, EXECUTED, FAILED, SKIPPED = "PENDING", "READY", "EXECUTED", "FAILED", "SKIPPED"
TERMINAL = frozenset({EXECUTED, FAILED, SKIPPED})
DEFAULT_TRIGGER_DEADLINE = 64


class Verdict(Protocol):
    risk: str

    def to_json(self) -> dict[str, Any]: ...


FeasibilityHook = Callable[[SignedTransaction], "Verdict | None"]
ConfirmHook = Callable[[str, "Verdict | None"], bool]


def auto_confirm(summary: str, verdict: Verdict | None) -> bool:
    return True


@dataclass
class ExecutorConfig:
    workers: int = 8
    trigger_deadline: int = DEFAULT_TRIGGER_DEADLINE
    mode: str = "sim"
    serial: bool = False
    force: bool = False  # submit HIGH-risk nodes anyway
    block_interval: float | None = None  # defaults to the node's
    receipt_timeout_blocks: int = 16
    timings: bool = False

    def __post_init__(self) -> None:
        if self.workers < 1:
            raise ValueError("workers must be at least 1")
        if self.mode not in ("sim", "live"):
            raise ValueError(f"unknown mode {self.mode!r}")


@dataclass
class NodeOutcome:
    index: int
    tx_id: str
    intent_index: int
    kind: str
    status: str = PENDING
    reason: str | None = None
    receipt: dict[str, Any] | None = None
    feasibility: dict[str, Any] | None = None
    queued_block: int | None = None
    submitted_block: int | None = None
    confirmed_block: int | None = None
    queued_at: float | None = None
    submitted_at: float | None = None
    confirmed_at: float | None = None

    def to_json(self, timings: bool = False) -> dict[str, Any]:
        out = {
            "id": self.tx_id, "intentIndex": self.intent_index, "kind": self.kind,
            "status": self.status, "reason": self.reason, "receipt": self.receipt,
            "feasibility": self.feasibility, "queuedBlock": self.queued_block,
            "submittedBlock": self.submitted_block, "confirmedBlock": self.confirmed_block,
        }
        if timings:
            out.update(queuedAt=self.queued_at, submittedAt=self.submitted_at, confirmedAt=self.confirmed_at)
        return out


@dataclass
class ExecutionReport:
    nodes: list[NodeOutcome]
    mode: str
    workers: int
    blocks: int
    wall_clock: float
    start_height: int
    end_height: int
    edges: list[tuple[str, str]] = field(default_factory=list)
    infeasible: list[str] = field(default_factory=list)
    timings: bool = False
    speedup_vs_serial: float | None = None

    def statuses(self) -> list[str]:
        return [n.status for n in self.nodes]

    def counts(self) -> dict[str, int]:
        out = {EXECUTED: 0, FAILED: 0, SKIPPED: 0}
        for n in self.nodes:
            out[n.status] = out.get(n.status, 0) + 1
        return out

    def to_json(self) -> dict[str, Any]:
        out: dict[str, Any] = {
            "mode": self.mode, "workers": self.workers, "blocks": self.blocks,
            "startHeight": self.start_height, "endHeight": self.end_height,
            "counts": self.counts(), "edges": [list(e) for e in self.edges],
            "infeasible": self.infeasible,
            "nodes": [n.to_json(self.timings) for n in self.nodes],
        }
        if self.mode == "sim" or self.timings:
            out["wallClock"] = round(self.wall_clock, 6)
        if self.speedup_vs_serial is not None:
            out["speedupVsSerial"] = round(self.speedup_vs_serial, 6)
        return out

    def dumps(self) -> str:
        return json.dumps(self.to_json(), sort_keys=True, indent=2)


# -- shared per-node logic -------------------------------------------------------

class _Run:
    def __init__(self, graph, txs, node, feasibility, confirm, cfg) -> None:
        self.g: DependencyGraph = graph
        self.node: LedgerNode = node
        self.feasibility = feasibility
        self.confirm = confirm or auto_confirm
        self.cfg = cfg
        self.workers = 1 if cfg.serial else cfg.workers
        by_id = {t.id: t for t in txs}
        self.txs: list[SignedTransaction] = []
        for p in graph.plans:
            if p.id not in by_id:
                raise KeyError(f"no signed transaction for plan {p.id}")
            self.txs.append(by_id[p.id])
        self.out = [NodeOutcome(i, p.id, p.intent_index, p.kind) for i, p in enumerate(graph.plans)]
        self.lock = threading.Lock()
        self.confirm_lock = threading.Lock()
        self.t0 = time.monotonic()

    def now(self) -> float:
        return round(time.monotonic() - self.t0, 6)

    def ready(self) -> list[int]:
        """Pending nodes whose parents are all terminal, in intent order.

        A node with a failed or skipped parent is skipped on the spot.
        """
        out = []
        changed = True
        while changed:
            changed = False
            for i, o in enumerate(self.out):
                if o.status != PENDING:
                    continue
                ps = self.g.parents[i]
                if any(self.out[p].status in (FAILED, SKIPPED) for p in ps):
                    self.finish(i, SKIPPED, "ParentNotExecuted")
                    changed = True
                elif i in self.g.infeasible:
                    self.finish(i, SKIPPED, "PredictedInfeasible")
                    changed = True
        for i, o in enumerate(self.out):
            if o.status == PENDING and all(self.out[p].status == EXECUTED for p in self.g.parents[i]):
                out.append(i)
        return out

    def finish(self, i: int, status: str, reason: str | None = None, receipt=None) -> None:
        o = self.out[i]
        o.status, o.reason = status, reason
        if receipt is not None:
            o.receipt = receipt.to_json()
            o.confirmed_block = receipt.block
            o.confirmed_at = self.now()

    def trigger_fired(self, i: int) -> bool:
        cond = self.g.plans[i].trigger
        return cond is None or self.node.evaluate(cond)

    def gate(self, i: int) -> str | None:
        """Feasibility and confirmation. Returns a skip reason or None to submit."""
        tx = self.txs[i]
        verdict = self.feasibility(tx) if self.feasibility is not None else None
        if verdict is not None:
            self.out[i].feasibility = verdict.to_json()
            if verdict.risk == "HIGH" and not self.cfg.force:
                return "HighRisk"
        with self.confirm_lock:
            ok = self.confirm(f"#{tx.plan.intent_index} {describe(tx.plan.action)}", verdict)
        return None if ok else "Declined"

    def submit(self, i: int) -> str | None:
        try:
            self.node.send_raw_transaction(self.txs[i])
        except NodeError as e:
            return f"Rejected:{e}"
        o = self.out[i]
        o.submitted_block = self.node.height
        o.submitted_at = self.now()
        return None

    def report(self, start: int, blocks: int, wall: float) -> ExecutionReport:
        ids = [p.id for p in self.g.plans]
        return ExecutionReport(
            self.out, self.cfg.mode, self.workers, blocks, wall, start, self.node.height,
            edges=[(ids[p], ids[c]) for p, c in self.g.edges()],
            infeasible=sorted(ids[i] for i in self.g.infeasible),
            timings=self.cfg.timings,
        )


# -- lockstep driver ----------------------------------------------------------------

def _run_sim(r: _Run) -> ExecutionReport:
    node, cfg = r.node, r.cfg
    start = node.height
    interval = cfg.block_interval if cfg.block_interval is not None else node.block_interval
    waited: dict[int, int] = {}
    inflight: list[int] = []  # dispatched, in dispatch order
    submitted: dict[int, int] = {}  # node -> height at submission
    blocks = 0
    while True:
        for i in r.ready():
            if len(inflight) >= r.workers:
                break
            r.out[i].status = READY
            r.out[i].queued_block = node.height
            r.out[i].queued_at = r.now()
            inflight.append(i)
        if not inflight:
            break
        for i in list(inflight):
            if i in submitted:
                continue
            try:
                fired = r.trigger_fired(i)
            except (IclError, KeyError, TypeError) as e:
                r.finish(i, FAILED, f"TriggerError:{type(e).__name__}")
                inflight.remove(i)
                continue
            if not fired:
                waited[i] = waited.get(i, 0) + 1
                if waited[i] > cfg.trigger_deadline:
                    r.finish(i, SKIPPED, "DeadlineExceeded")
                    inflight.remove(i)
                continue
            reason = r.gate(i) or r.submit(i)
            if reason is not None:
                r.finish(i, SKIPPED if reason in ("HighRisk", "Declined") else FAILED, reason)
                inflight.remove(i)
            else:
                submitted[i] = node.height
        if not inflight:
            continue
        node.mine()
        blocks += 1
        for i in list(inflight):
            if i not in submitted:
                continue
            rc = node.get_receipt(r.txs[i].id)
            if rc is not None:
                r.finish(i, EXECUTED if rc.ok else FAILED, rc.reason, rc)
                inflight.remove(i)
            elif node.height - submitted[i] > cfg.receipt_timeout_blocks:
                r.finish(i, FAILED, "NotIncluded")
                inflight.remove(i)
    return r.report(start, blocks, blocks * interval)


# -- threaded driver ----------------------------------------------------------------

def _process_live(r: _Run, i: int) -> tuple[str, str | None, Any]:
    node, cfg = r.node, r.cfg
    h = node.height
    polls = 0
    while not r.trigger_fired(i):
        polls += 1
        if polls > cfg.trigger_deadline:
            return SKIPPED, "DeadlineExceeded", None
        h += 1
        node.wait_for_height(h)
    reason = r.gate(i)
    if reason is not None:
        return SKIPPED, reason, None
    reason = r.submit(i)
    if reason is not None:
        return FAILED, reason, None
    timeout = max(cfg.receipt_timeout_blocks * node.block_interval, 1.0)
    rc = node.wait_for_receipt(r.txs[i].id, timeout=timeout)
    if rc is None:
        return FAILED, "NotIncluded", None
    return (EXECUTED if rc.ok else FAILED), rc.reason, rc


def _run_live(r: _Run) -> ExecutionReport:
    node = r.node
    start = node.height
    own_miner = node._thread is None
    if own_miner:
        node.start()
    t0 = time.monotonic()
    try:
        with ThreadPoolExecutor(max_workers=r.workers) as pool:
            running: dict[Any, int] = {}
            while True:
                for i in r.ready():
                    if len(running) >= r.workers:
                        break
                    o = r.out[i]
                    o.status, o.queued_block, o.queued_at = READY, node.height, r.now()
                    running[pool.submit(_process_live, r, i)] = i
                if not running:
                    break
                done, _ = wait(running, return_when=FIRST_COMPLETED)
                for f in done:
                    i = running.pop(f)
                    try:
                        status, reason, rc = f.result()
                    except Exception as e:  # a hook or trigger blew up
                        status, reason, rc = FAILED, f"{type(e).__name__}:{e}", None
                    r.finish(i, status, reason, rc)
    finally:
        if own_miner:
            node.stop()
    wall = time.monotonic() - t0
    return r.report(start, node.height - start, wall)


def execute_graph(
    graph: DependencyGraph,
    txs: Sequence[SignedTransaction] | Mapping[str, SignedTransaction],
    node: LedgerNode,
    feasibility_hook: FeasibilityHook | None = None,
    confirm_hook: ConfirmHook | None = None,
    config: ExecutorConfig | None = None,
) -> ExecutionReport:
    """Run every node of ``graph`` to a terminal status and report."""
    cfg = config or ExecutorConfig()
    if isinstance(txs, Mapping):
        txs = list(txs.values())
    r = _Run(graph, txs, node, feasibility_hook, confirm_hook, cfg)
    return _run_sim(r) if cfg.mode == "sim" else _run_live(r)
