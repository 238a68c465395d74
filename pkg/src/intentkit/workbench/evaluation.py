"""Evaluation harnesses: feasibility-checker accuracy and parallel speedup."""

from __future__ import annotations

import random
import statistics
from collections.abc import Sequence
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Any

from intentkit.assets import format_units, to_base_units
from intentkit.compiler import CompileOptions, compile_statement
from intentkit.feasibility import (
    FeasibilityConfig, baseline_check, check_feasibility, predict_next_block,
)
from intentkit.icl import parse
from intentkit.ledger.execution import pack
from intentkit.ledger.node import LedgerNode
from intentkit.tx import address_of, keypair_from_seed, sign_plan
from intentkit.workbench.generate import FlowConfig, FlowGenerator, GeneratorConfig, generate_program
from intentkit.workbench.genesis import motivating_genesis, workbench_genesis
from intentkit.workbench.pipeline import PipelineOptions, run_pipeline


@dataclass
class Confusion:
    tp: int = 0
    fp: int = 0
    tn: int = 0
    fn: int = 0

    def add(self, predicted: bool, actual: bool) -> None:
        if predicted and actual:
            self.tp += 1
        elif predicted:
            self.fp += 1
        elif actual:
            self.fn += 1
        else:
            self.tn += 1

    @property
    def total(self) -> int:
        return self.tp + self.fp + self.tn + self.fn


@dataclass
class EvalMetrics:
    label: str
    confusion: Confusion = field(default_factory=Confusion)
    latencies_ms: list[float] = field(default_factory=list)

    @staticmethod
    def _ratio(a: int, b: int) -> float:
        return a / b if b else 1.0

    @property
    def accuracy(self) -> float:
        c = self.confusion
        return self._ratio(c.tp + c.tn, c.total)

    @property
    def precision(self) -> float:
        return self._ratio(self.confusion.tp, self.confusion.tp + self.confusion.fp)

    @property
    def recall(self) -> float:
        return self._ratio(self.confusion.tp, self.confusion.tp + self.confusion.fn)

    @property
    def mean_latency_ms(self) -> float:
        return statistics.fmean(self.latencies_ms) if self.latencies_ms else 0.0

    @property
    def max_latency_ms(self) -> float:
        return max(self.latencies_ms, default=0.0)

    def to_json(self, timings: bool = False) -> dict[str, Any]:
        c = self.confusion
        out: dict[str, Any] = {
            "label": self.label, "n": c.total, "tp": c.tp, "fp": c.fp, "tn": c.tn, "fn": c.fn,
            "accuracy": round(self.accuracy, 6), "precision": round(self.precision, 6),
            "recall": round(self.recall, 6),
        }
        if timings:
            out["meanLatencyMs"] = round(self.mean_latency_ms, 3)
            out["maxLatencyMs"] = round(self.max_latency_ms, 3)
        return out


# -- feasibility checker -------------------------------------------------------------

@dataclass
class CheckerWorkload:
    candidates: int = 500
    flows: FlowConfig = field(default_factory=lambda: FlowConfig(
        rate=17, mix={"swap": 0.85, "transfer": 0.1, "liquidity": 0.05}, buy_bias=1.0,
        min_swap=5_000, max_swap=50_000, arbitrage=True))
    block_gas_limit: int = 2_000_000
    warmup_blocks: int = 4
    min_tolerance: Fraction = Fraction(1, 1000)
    max_tolerance: Fraction = Fraction(40, 1000)
    seed: int = 0


@dataclass
class CheckerResult:
    metrics: list[EvalMetrics]
    baseline: EvalMetrics
    successes: int
    timings: bool = False

    def by_label(self, label: str) -> EvalMetrics:
        for m in [*self.metrics, self.baseline]:
            if m.label == label:
                return m
        raise KeyError(label)

    def to_json(self) -> dict[str, Any]:
        return {
            "candidates": self.baseline.confusion.total,
            "actualSuccesses": self.successes,
            "checker": [m.to_json(self.timings) for m in self.metrics],
            "baseline": self.baseline.to_json(self.timings),
        }


def _label(cfg: FeasibilityConfig) -> str:
    return f"K={cfg.k:g}"


def evaluate_checker(workload: CheckerWorkload, cfgs: Sequence[FeasibilityConfig], *,
                     timings: bool = False) -> CheckerResult:
    """Predict each candidate under every config and the baseline, then submit it for the label.

    Candidates buy ETH on the same pool the flows trade on, priced at the
    cheapest gas price that still gets them into the next block.
    """
    genesis = motivating_genesis()
    genesis["blockGasLimit"] = workload.block_gas_limit
    node = LedgerNode.from_genesis(genesis, block_interval=0.0)
    flows = FlowGenerator(node, FlowConfig(**{**workload.flows.__dict__, "seed": workload.seed}))
    rng = random.Random(workload.seed)
    sk, pk = keypair_from_seed(f"candidate:{workload.seed}".encode())
    wallet = address_of(pk)
    node.faucet(wallet, "USDC", to_base_units(10**9, "USDC"))
    horizon = FeasibilityConfig(k=1.0)
    metrics = [EvalMetrics(_label(c)) for c in cfgs]
    baseline = EvalMetrics("baseline")
    successes = 0
    for _ in range(workload.warmup_blocks):
        flows.step()
        node.mine()
        flows.rebalance()
    lo = int(workload.min_tolerance * 10_000)
    hi = int(workload.max_tolerance * 10_000)
    for c in range(workload.candidates):
        flows.step()
        state = node.snapshot_state()
        pending = node.get_pending()
        # cheapest price at which the candidate lands in the next block
        cand_gas = state.gas_schedule["DexSwap"]
        block = predict_next_block(pending, horizon, state.block_gas_limit, reserve=cand_gas)
        price = min((t.gas_price for t in block), default=1)
        tol = Fraction(rng.randint(lo, hi), 10_000)
        amount = rng.randint(20_000, 200_000)
        src = (f"swap {amount} USDC from wallet[{wallet}] for ETH on Uniswap "
               f"checking slippage < {format_units(int(tol * 10**6), 'USDC')};")
        stmt = parse(src).statements[0]
        while True:
            plan = compile_statement(stmt, state, None, pk,
                                     options=CompileOptions(gas_price=price, nonce_base=c * 2))
            tx = sign_plan(plan, sk, state.state_root)
            if tx in pack([*pending, tx], state.block_gas_limit):
                break
            price += 1
        predictions = []
        for cfg, m in zip(cfgs, metrics):
            v = check_feasibility(tx, state, pending, cfg, timings=True)
            m.latencies_ms.append(v.latency_ms)
            predictions.append(v.rho >= cfg.theta_high)
        base_ok = baseline_check(tx, state)
        node.send_raw_transaction(tx)
        receipt = None
        for _ in range(8):
            node.mine()
            flows.rebalance()
            receipt = node.get_receipt(tx.id)
            if receipt is not None:
                break
        actual = receipt is not None and receipt.ok
        successes += actual
        for m, predicted in zip(metrics, predictions):
            m.confusion.add(predicted, actual)
        baseline.confusion.add(base_ok, actual)
    return CheckerResult(metrics, baseline, successes, timings)


# -- parallel speedup ------------------------------------------------------------------

@dataclass
class SpeedupResult:
    rows: list[dict[str, Any]]

    def mean_by_di(self) -> dict[float, float]:
        out: dict[float, list[float]] = {}
        for r in self.rows:
            out.setdefault(r["di"], []).append(r["speedup"])
        return {di: statistics.fmean(v) for di, v in sorted(out.items())}

    def to_json(self) -> dict[str, Any]:
        return {"runs": self.rows,
                "meanSpeedup": {f"{di:g}": round(v, 6) for di, v in self.mean_by_di().items()}}


def evaluate_speedup(dis: Sequence[float] = (0.0, 0.5, 1.0), seeds: Sequence[int] = range(20), *,
                     n: int = 50, workers: int = 8, block_interval: float = 0.1,
                     mode: str = "sim") -> SpeedupResult:
    """Wall clock of parallel against serial execution of generated programs."""
    rows = []
    genesis = workbench_genesis(n)
    for di in dis:
        for seed in seeds:
            prog = generate_program(GeneratorConfig(n=n, di=di, seed=seed, workers=n))
            runs = {}
            for serial in (False, True):
                opts = PipelineOptions(seed=seed, workers=workers, serial=serial, mode=mode,
                                       block_interval=block_interval, feasibility=None)
                genesis["blockInterval"] = block_interval
                runs[serial] = run_pipeline(prog.source, genesis, opts).report
            par, ser = runs[False], runs[True]
            rows.append({
                "di": di, "seed": seed, "dependencyFraction": round(prog.dependency_fraction(), 6),
                "parallelBlocks": par.blocks, "serialBlocks": ser.blocks,
                "parallelWallClock": round(par.wall_clock, 6), "serialWallClock": round(ser.wall_clock, 6),
                "speedup": round(ser.wall_clock / par.wall_clock, 6) if par.wall_clock else 0.0,
                "statuses": par.counts(),
            })
    return SpeedupResult(rows)
