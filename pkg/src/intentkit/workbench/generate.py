"""Workload generators: ICL programs with a dependency index, and mempool flows."""

from __future__ import annotations

import random
from math import isqrt
import threading
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Any

from intentkit.assets import decimals, format_units, lp_asset, to_base_units
from intentkit.compiler.lowering import DEFAULT_SLIPPAGE, apply_tolerance
from intentkit.ledger import actions as A
from intentkit.ledger.execution import mint_liquidity, quote_swap
from intentkit.ledger.node import LedgerNode, NodeError, build_genesis
from intentkit.ledger.state import LedgerState
from intentkit.tx import address_of, keypair_from_seed, make_plan, sign_plan
from intentkit.workbench.genesis import (
    DEFAULT_WORKERS, WORKER_FUNDING, worker_assets, worker_wallet, workbench_genesis,
)

SWAP_PLATFORMS = {
    ("USDC", "USDT"): ("Uniswap", "Sushiswap"),
    ("ETH", "USDC"): ("Uniswap", "Sushiswap"),
    ("ETH", "USDT"): ("Uniswap",),
    ("DAI", "USDC"): ("Curve",),
}
STAKE_PLATFORMS = {"ETH": ("Aave", "Compound", "Yearn"), "USDC": ("Aave", "Curve")}
# families whose output a later transfer, swap or stake can spend; an add only
# yields LP tokens, whose removal pays nothing the generator tracks
PRODUCERS = ("transfer", "swap")
DEFAULT_MIX = {"transfer": 1.0, "swap": 2.0, "add": 0.5, "stake": 1.0}


class GenerationExhausted(Exception):
    pass


def _platforms(a: str, b: str) -> tuple[str, ...]:
    return SWAP_PLATFORMS.get(tuple(sorted((a, b))), ())


@dataclass
class GeneratorConfig:
    n: int = 50
    di: float = 0.0
    mix: dict[str, float] = field(default_factory=lambda: dict(DEFAULT_MIX))
    seed: int = 0
    workers: int = DEFAULT_WORKERS

    def __post_init__(self) -> None:
        if self.n < 1:
            raise ValueError("n must be positive")
        if not 0.0 <= self.di <= 1.0:
            raise ValueError("DI must lie in [0, 1]")
        unknown = set(self.mix) - set(DEFAULT_MIX)
        if unknown:
            raise ValueError(f"unknown statement families {sorted(unknown)}")


@dataclass
class GeneratedProgram:
    source: str
    families: list[str]
    depends_on: list[int | None]  # 1-based index of the producing statement
    workers_used: int

    def dependency_fraction(self) -> float:
        tail = self.depends_on[1:]
        return sum(d is not None for d in tail) / len(tail) if tail else 0.0

    def to_json(self) -> dict[str, Any]:
        return {"source": self.source, "families": self.families, "dependsOn": self.depends_on,
                "dependencyFraction": round(self.dependency_fraction(), 6),
                "workersUsed": self.workers_used}


class _Gen:
    def __init__(self, cfg: GeneratorConfig, state: LedgerState) -> None:
        self.cfg = cfg
        self.rng = random.Random(cfg.seed)
        self.state = state
        self.next_worker = 0
        self.next_sink = 0
        self.lines: list[str] = []
        self.families: list[str] = []
        self.deps: list[int | None] = []
        # producer index -> [wallet, asset, remaining base units]
        self.outputs: dict[int, list[Any]] = {}
        # every (wallet, asset) some statement spends from or pays into
        self.keys: set[tuple[str, str]] = set()

    def worker(self) -> int:
        if self.next_worker >= self.cfg.workers:
            raise GenerationExhausted(f"ran out of worker wallets after {self.cfg.workers}")
        self.next_worker += 1
        return self.next_worker - 1

    def sink(self) -> str:
        self.next_sink += 1
        return f"0x{0xe0000 + self.next_sink:x}"

    def amount(self, asset: str) -> int:
        if asset == "ETH":
            return to_base_units(Fraction(self.rng.randint(5, 200), 100), asset)
        return to_base_units(self.rng.randint(100, 5000), asset)

    def emit(self, family: str, text: str, dep: int | None, out: tuple[str, str, int] | None,
             spent: tuple[tuple[str, str], ...] = ()) -> None:
        self.keys.update(spent)
        if out is not None:
            self.keys.add((out[0], out[1]))
        self.lines.append(text)
        self.families.append(family)
        self.deps.append(dep)
        if out is not None and out[2] > 1:
            self.outputs[len(self.lines)] = list(out)

    # -- statement builders ---------------------------------------------------

    def transfer(self, w: str, asset: str, n: int, dep: int | None) -> None:
        to = self.sink()
        self.emit("transfer", f"transfer {format_units(n, asset)} {asset} from wallet[{w}] to wallet[{to}];",
                  dep, (to, asset, n), ((w, asset),))

    def swap(self, w: str, a: str, b: str, n: int, dep: int | None) -> None:
        platform = self.rng.choice(_platforms(a, b))
        quote = quote_swap(self.state, platform, a, b, n) or 0
        out = apply_tolerance(quote, DEFAULT_SLIPPAGE)
        self.emit("swap", f"swap {format_units(n, a)} {a} from wallet[{w}] for {b} on {platform};",
                  dep, (w, b, out), ((w, a),))

    def stake(self, w: str, asset: str, n: int, dep: int | None) -> None:
        platform = self.rng.choice(STAKE_PLATFORMS[asset])
        self.emit("stake", f"stake {format_units(n, asset)} {asset} from wallet[{w}] on {platform};", dep, None,
                  ((w, asset),))

    def add(self, w: str, a: str, b: str, dep: int | None) -> None:
        platform = self.rng.choice(_platforms(a, b))
        ra, rb = self.state.reserves(platform, a, b)
        na = self.amount(a)
        nb = na * rb // ra
        if nb > to_base_units(WORKER_FUNDING[b], b):
            nb = to_base_units(WORKER_FUNDING[b], b) // 2
            na = nb * ra // rb
        nb = self._round(nb, b)
        supply = self.state.lp_supply(platform, a, b)
        lp = apply_tolerance(mint_liquidity(ra, rb, supply, na, nb), DEFAULT_SLIPPAGE)
        self.emit("add", f"add {format_units(na, a)} {a}, {format_units(nb, b)} {b} to {platform} "
                  f"receiving liquidity token to wallet[{w}];", dep, (w, lp_asset(platform, a, b), lp),
                  ((w, a), (w, b)))

    def remove(self, w: str, lp: str, n: int, dep: int) -> None:
        _, platform, pair = lp.split(":")
        a, b = pair.split("/")
        self.emit("remove", f"remove 0 {a}, 0 {b} from {platform} returning {n} liquidity from wallet[{w}];",
                  dep, None, ((w, lp),))

    @staticmethod
    def _round(n: int, asset: str) -> int:
        """Drop dust below 1e-6 of a token so literals stay short."""
        q = 10 ** max(0, decimals(asset) - 6)
        return n // q * q

    # -- drawing ------------------------------------------------------------------

    def independent(self, index: int) -> None:
        mix = self.cfg.mix
        if index == 1:
            mix = {f: w for f, w in mix.items() if f in PRODUCERS and w > 0} or mix
        fams = [f for f, w in sorted(mix.items()) if w > 0]
        if not fams:
            raise GenerationExhausted("mix leaves no usable statement family")
        fam = self.rng.choices(fams, weights=[mix[f] for f in fams])[0]
        i = self.worker()
        w, (a, b) = worker_wallet(i), worker_assets(i)
        if fam == "transfer":
            asset = self.rng.choice((a, b))
            self.transfer(w, asset, self.amount(asset), None)
        elif fam == "swap":
            options = [(x, y) for x in (a, b) for y in ("USDC", "USDT", "ETH", "DAI")
                       if y not in (a, b) and _platforms(x, y)]
            x, y = self.rng.choice(options)
            self.swap(w, x, y, self.amount(x), None)
        elif fam == "add":
            self.add(w, a, b, None)
        else:
            asset = self.rng.choice([x for x in (a, b) if x in STAKE_PLATFORMS])
            self.stake(w, asset, self.amount(asset), None)

    def dependent(self) -> bool:
        live = sorted(k for k, v in self.outputs.items() if v[2] >= 2)
        if not live:
            return False
        y = self.rng.choice(live)
        w, asset, rem = self.outputs[y]
        take = self._round(rem // 2, asset) or rem // 2
        self.outputs[y][2] = rem - take
        if asset.startswith("lp:"):
            self.remove(w, asset, take, y)
            return True
        fams = ["transfer"]
        # a swap may only pay into a key no other statement uses, so the one
        # producer of every consumed key is the statement it was drawn from
        targets = [c for c in ("USDC", "USDT", "ETH", "DAI")
                   if c != asset and _platforms(asset, c) and (w, c) not in self.keys]
        if targets:
            fams.append("swap")
        if asset in STAKE_PLATFORMS:
            fams.append("stake")
        fams = [f for f in fams if self.cfg.mix.get(f, 0) > 0] or ["transfer"]
        fam = self.rng.choices(fams, weights=[self.cfg.mix.get(f, 1.0) for f in fams])[0]
        if fam == "transfer":
            self.transfer(w, asset, take, y)
        elif fam == "swap":
            self.swap(w, asset, self.rng.choice(targets), take, y)
        else:
            self.stake(w, asset, take, y)
        return True


def generate_program(cfg: GeneratorConfig, state: LedgerState | None = None) -> GeneratedProgram:
    """Random program where each statement after the first depends on an earlier one with probability DI.

    Every independent statement spends from a fresh worker wallet, so the
    only asset flows between statements are the intended dependencies.
    """
    state = state if state is not None else build_genesis(workbench_genesis(0))
    g = _Gen(cfg, state)
    for x in range(1, cfg.n + 1):
        if x > 1 and g.rng.random() < cfg.di and g.dependent():
            continue
        g.independent(x)
    return GeneratedProgram("\n".join(g.lines) + "\n", g.families, g.deps, g.next_worker)


# -- flows ----------------------------------------------------------------------------

@dataclass
class FlowConfig:
    rate: float = 16.0  # transactions per block
    mix: dict[str, float] = field(default_factory=lambda: {"swap": 0.8, "transfer": 0.1, "liquidity": 0.1})
    buy_bias: float = 0.7  # share of swaps buying ETH with USDC
    duration: int = 0  # blocks, 0 for unbounded
    seed: int = 0
    wallets: int = 32
    platform: str = "Uniswap"
    max_gas_price: int = 100
    min_tolerance_bp: int = 500  # flow swap slippage bounds, basis points
    max_tolerance_bp: int = 1500
    min_swap: int = 20_000  # USDC per flow swap
    max_swap: int = 250_000
    arbitrage: bool = False  # back-run each block with a swap pulling the pool to the oracle

    def __post_init__(self) -> None:
        if self.rate < 0:
            raise ValueError("rate must be non-negative")


class FlowGenerator:
    """Seeded submitter of background traffic. Each flow wallet signs its own transactions."""

    def __init__(self, node: LedgerNode, cfg: FlowConfig) -> None:
        self.node = node
        self.cfg = cfg
        self.rng = random.Random(cfg.seed)
        self.keys = [keypair_from_seed(f"flow:{cfg.seed}:{i}".encode()) for i in range(cfg.wallets)]
        self.wallets = [address_of(pk) for _, pk in self.keys]
        self.submitted: list[str] = []
        self.kinds: list[str] = []
        self.rejected = 0
        self._nonce = 0
        self._stop = threading.Event()
        self._thread: threading.Thread | None = None
        for w in self.wallets:
            node.faucet(w, "USDC", to_base_units(50_000_000, "USDC"))
            node.faucet(w, "ETH", to_base_units(10_000, "ETH"))
        self.arb_key = keypair_from_seed(f"arb:{cfg.seed}".encode())
        self.arb_wallet = address_of(self.arb_key[1])
        if cfg.arbitrage:
            node.faucet(self.arb_wallet, "USDC", to_base_units(10**10, "USDC"))
            node.faucet(self.arb_wallet, "ETH", to_base_units(10**7, "ETH"))

    def _count(self) -> int:
        whole = int(self.cfg.rate)
        return whole + (1 if self.rng.random() < self.cfg.rate - whole else 0)

    def _action(self, i: int, state: LedgerState) -> A.Action:
        w = self.wallets[i]
        fams = sorted(self.cfg.mix)
        fam = self.rng.choices(fams, weights=[self.cfg.mix[f] for f in fams])[0]
        p = self.cfg.platform
        if fam == "transfer":
            to = self.wallets[self.rng.randrange(len(self.wallets))]
            return A.TokenTransfer("USDC", to_base_units(self.rng.randint(100, 10_000), "USDC"), w, to)
        if fam == "liquidity":
            ra, rb = state.reserves(p, "USDC", "ETH")
            na = to_base_units(self.rng.randint(10_000, 100_000), "USDC")
            nb = na * rb // ra
            return A.DexMint(p, w, w, "USDC", na, "ETH", nb, 0)
        if self.rng.random() < self.cfg.buy_bias:
            a, b, n = "USDC", "ETH", to_base_units(self.rng.randint(self.cfg.min_swap, self.cfg.max_swap), "USDC")
        else:
            usd = self.rng.randint(self.cfg.min_swap, self.cfg.max_swap)
            a, b, n = "ETH", "USDC", to_base_units(Fraction(usd, 4200), "ETH")
        quote = quote_swap(state, p, a, b, n) or 0
        tol = Fraction(self.rng.randint(self.cfg.min_tolerance_bp, self.cfg.max_tolerance_bp), 10_000)
        return A.DexSwap(p, w, a, n, b, apply_tolerance(quote, tol), quote)

    def _arbitrage(self, state: LedgerState) -> A.Action | None:
        """Swap that moves the pool price back to the oracle price, ignoring fees."""
        p = self.cfg.platform
        res = state.reserves(p, "USDC", "ETH")
        if res is None:
            return None
        ru, re = res
        price = state.price("ETH")  # micro-USD per ETH, USDC base units per ETH
        scale = 10 ** 18
        target_eth = isqrt(ru * re * scale // price)
        if target_eth > re:
            a, b, n = "ETH", "USDC", target_eth - re
        else:
            target_usdc = isqrt(ru * re * price // scale)
            a, b, n = "USDC", "ETH", target_usdc - ru
        if n <= 0:
            return None
        return A.DexSwap(p, self.arb_wallet, a, n, b, 0, quote_swap(state, p, a, b, n) or 0)

    def rebalance(self) -> bool:
        """Back-run the last block: apply the arbitrage swap directly at the head."""
        if not self.cfg.arbitrage:
            return False
        state = self.node.snapshot_state()
        arb = self._arbitrage(state)
        if arb is None:
            return False
        self._nonce += 1
        plan = make_plan(intent_index=0, action=arb, sender=self.arb_key[1],
                         gas_limit=state.gas_schedule["DexSwap"], gas_price=0, nonce=self._nonce)
        return self.node.apply_now(sign_plan(plan, self.arb_key[0], state.state_root)).ok

    def _send(self, action: A.Action, key: tuple, price: int, state: LedgerState) -> str | None:
        self._nonce += 1
        plan = make_plan(
            intent_index=0, action=action, sender=key[1],
            gas_limit=state.gas_schedule[A.kind(action)], gas_price=price, nonce=self._nonce,
        )
        try:
            tx_id = self.node.send_raw_transaction(sign_plan(plan, key[0], state.state_root))
        except NodeError:
            self.rejected += 1
            return None
        self.kinds.append(A.kind(action))
        return tx_id

    def step(self) -> list[str]:
        """Submit one block's worth of flow transactions."""
        if self.cfg.rate == 0:
            return []
        state = self.node.snapshot_state()
        ids = []
        for _ in range(self._count()):
            i = self.rng.randrange(len(self.wallets))
            action = self._action(i, state)
            tx_id = self._send(action, self.keys[i], self.rng.randint(1, self.cfg.max_gas_price), state)
            if tx_id:
                ids.append(tx_id)
        self.submitted.extend(ids)
        return ids

    # background mode: one step per new head
    def start(self) -> "FlowGenerator":
        if self._thread is None:
            self._stop.clear()
            self._thread = threading.Thread(target=self._run, name="flows", daemon=True)
            self._thread.start()
        return self

    def _run(self) -> None:
        blocks = 0
        h = self.node.height
        while not self._stop.is_set():
            self.step()
            blocks += 1
            if self.cfg.duration and blocks >= self.cfg.duration:
                return
            h += 1
            while not self._stop.is_set() and not self.node.wait_for_height(h, timeout=0.05):
                pass

    def stop(self) -> None:
        self._stop.set()
        if self._thread is not None:
            self._thread.join()
            self._thread = None


def generate_flows(node: LedgerNode, cfg: FlowConfig) -> FlowGenerator:
    return FlowGenerator(node, cfg)
