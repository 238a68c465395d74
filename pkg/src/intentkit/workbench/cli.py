"""Command-line entry point.

Every subcommand prints one JSON document (or writes it to ``--out``).
Exit codes: 0 ok, 1 domain error, 2 usage error.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path
from typing import Any, Callable, TextIO

from intentkit.compiler import CompileError
from intentkit.feasibility import FeasibilityConfig, baseline_check, check_feasibility
from intentkit.feasibility.checker import touched
from intentkit.icl import IclError
from intentkit.ledger.node import LedgerNode
from intentkit.tx import signed_from_json, signed_to_json
from intentkit.workbench.evaluation import CheckerWorkload, evaluate_checker, evaluate_speedup
from intentkit.workbench.generate import (
    FlowConfig, FlowGenerator, GenerationExhausted, GeneratorConfig, generate_program,
)
from intentkit.workbench.genesis import EXAMPLE_PROGRAM, motivating_genesis
from intentkit.workbench.pipeline import (
    PipelineError, PipelineOptions, Session, parse_program, run_pipeline,
)

EXIT_OK, EXIT_DOMAIN, EXIT_USAGE = 0, 1, 2


class UsageError(Exception):
    pass


# -- configuration ----------------------------------------------------------------

def load_config(path: str | None) -> dict[str, Any]:
    """Read the ``--config`` JSON file.

    Recognised keys: ``genesis`` (object or path relative to the config
    file), ``workers``, ``mode``, ``k``, ``contexts``, ``thetaHigh``,
    ``thetaLow``, ``blockInterval``, ``gasPrice``, ``triggerDeadline``.
    """
    if path is None:
        return {}
    p = Path(path)
    try:
        cfg = json.loads(p.read_text())
    except (OSError, ValueError) as e:
        raise UsageError(f"cannot read config {path}: {e}") from e
    if not isinstance(cfg, dict):
        raise UsageError("config must be a JSON object")
    g = cfg.get("genesis")
    if isinstance(g, str):
        gp = Path(g) if Path(g).is_absolute() else p.parent / g
        try:
            cfg["genesis"] = json.loads(gp.read_text())
        except (OSError, ValueError) as e:
            raise UsageError(f"cannot read genesis {gp}: {e}") from e
    return cfg


def _pick(args: argparse.Namespace, cfg: dict[str, Any], attr: str, key: str, default: Any) -> Any:
    v = getattr(args, attr, None)
    if v is not None:
        return v
    return cfg.get(key, default)


def feasibility_config(args: argparse.Namespace, cfg: dict[str, Any], k: float | None = None) -> FeasibilityConfig:
    return FeasibilityConfig(
        k=k if k is not None else float(_pick(args, cfg, "k", "k", 1.0)),
        contexts=int(_pick(args, cfg, "contexts", "contexts", 20)),
        theta_high=float(cfg.get("thetaHigh", 0.9)),
        theta_low=float(cfg.get("thetaLow", 0.5)),
        seed=args.seed,
    )


def genesis_of(cfg: dict[str, Any]) -> dict[str, Any]:
    return cfg.get("genesis") or motivating_genesis()


def read_text(path: str, stdin: TextIO | None = None) -> str:
    if path == "-":
        return (stdin or sys.stdin).read()
    try:
        return Path(path).read_text()
    except OSError as e:
        raise UsageError(f"cannot read {path}: {e}") from e


# -- interactive confirmation -----------------------------------------------------

class PromptConfirm:
    """Asks once per transaction; ``all`` approves the rest of the run."""

    def __init__(self, stdin: TextIO, stderr: TextIO) -> None:
        self.stdin = stdin
        self.stderr = stderr
        self.approve_all = False

    def __call__(self, summary: str, verdict) -> bool:
        if self.approve_all:
            return True
        risk = f" [{verdict.risk} rho={verdict.rho:.2f}]" if verdict is not None else ""
        while True:
            self.stderr.write(f"submit {summary}{risk}? [yes/no/all] ")
            self.stderr.flush()
            line = self.stdin.readline()
            if not line:
                return False
            answer = line.strip().lower()
            if answer in ("y", "yes"):
                return True
            if answer in ("n", "no"):
                return False
            if answer in ("a", "all"):
                self.approve_all = True
                return True


# -- subcommands ------------------------------------------------------------------

def pipeline_options(args: argparse.Namespace, cfg: dict[str, Any]) -> PipelineOptions:
    mode = _pick(args, cfg, "mode", "mode", "sim")
    interval = cfg.get("blockInterval")
    return PipelineOptions(
        seed=args.seed,
        workers=int(_pick(args, cfg, "workers", "workers", 8)),
        serial=getattr(args, "serial", False),
        mode=mode,
        trigger_deadline=int(cfg.get("triggerDeadline", 64)),
        block_interval=float(interval) if interval is not None else None,
        feasibility=None if getattr(args, "no_check", False) else feasibility_config(args, cfg),
        force=getattr(args, "force", False),
        prune=not getattr(args, "no_prune", False),
        timings=getattr(args, "timings", False),
        gas_price=int(cfg.get("gasPrice", 10)),
    )


def cmd_compile(args: argparse.Namespace, cfg: dict[str, Any], io: dict[str, TextIO]) -> dict[str, Any]:
    source = EXAMPLE_PROGRAM if args.file == "example" else read_text(args.file, io["stdin"])
    program = parse_program(source)
    node = LedgerNode.from_genesis(genesis_of(cfg))
    session = Session(node, pipeline_options(args, cfg))
    session.attest()
    txset, signed, root = session.compile(program)
    return {
        "attestation": session.attestation,
        "stateRoot": root,
        **txset.to_json(),
        "signed": [signed_to_json(t) for t in signed],
    }


def cmd_run(args: argparse.Namespace, cfg: dict[str, Any], io: dict[str, TextIO]) -> dict[str, Any]:
    source = EXAMPLE_PROGRAM if args.file == "example" else read_text(args.file, io["stdin"])
    opts = pipeline_options(args, cfg)
    confirm = None if args.auto_confirm else PromptConfirm(io["stdin"], io["stderr"])
    result = run_pipeline(source, genesis_of(cfg), opts, confirm=confirm)
    return result.to_json()


def _load_signed(doc: Any) -> list:
    if isinstance(doc, dict) and "signed" in doc:
        doc = doc["signed"]
    if isinstance(doc, dict):
        doc = [doc]
    if not isinstance(doc, list):
        raise UsageError("expected a signed transaction, a list of them, or compile output")
    try:
        return [signed_from_json(d) for d in doc]
    except (KeyError, TypeError, ValueError) as e:
        raise UsageError(f"malformed transaction JSON: {e}") from e


def cmd_check(args: argparse.Namespace, cfg: dict[str, Any], io: dict[str, TextIO]) -> dict[str, Any]:
    try:
        doc = json.loads(read_text(args.txjson, io["stdin"]))
    except ValueError as e:
        raise UsageError(f"invalid JSON: {e}") from e
    txs = _load_signed(doc)
    pending = _load_signed(doc["pending"]) if isinstance(doc, dict) and "pending" in doc else []
    node = LedgerNode.from_genesis(genesis_of(cfg))
    # the user's allowances to each signer, as granted before a real run
    for tx in [*txs, *pending]:
        for obj in touched(tx.plan.action):
            if obj[0] == "wallet":
                node.approve(obj[1], tx.plan.sender)
    for tx in pending:
        node.send_raw_transaction(tx)
    if args.flows:
        FlowGenerator(node, FlowConfig(rate=args.flows, seed=args.seed)).step()
    fcfg = feasibility_config(args, cfg)
    state = node.snapshot_state()
    mempool = node.get_pending()
    rows = []
    for tx in txs:
        v = check_feasibility(tx, state, mempool, fcfg, timings=args.timings)
        rows.append({"id": tx.id, "intentIndex": tx.plan.intent_index, **v.to_json(),
                     "baseline": baseline_check(tx, state)})
    return {"k": fcfg.k, "contexts": fcfg.contexts, "pending": len(mempool), "verdicts": rows}


def _mix(text: str | None) -> dict[str, float] | None:
    if text is None:
        return None
    out = {}
    for part in text.split(","):
        name, _, w = part.partition("=")
        try:
            out[name.strip()] = float(w) if w else 1.0
        except ValueError as e:
            raise UsageError(f"bad mix weight {part!r}") from e
    return out


def cmd_gen(args: argparse.Namespace, cfg: dict[str, Any], io: dict[str, TextIO]) -> dict[str, Any]:
    if args.what == "program":
        kw: dict[str, Any] = dict(n=args.n, di=args.di, seed=args.seed, workers=args.wallets or args.n)
        if args.mix:
            kw["mix"] = _mix(args.mix)
        try:
            gcfg = GeneratorConfig(**kw)
        except ValueError as e:
            raise UsageError(str(e)) from e
        prog = generate_program(gcfg)
        if args.icl:
            Path(args.icl).write_text(prog.source)
        return prog.to_json()
    fkw: dict[str, Any] = dict(rate=args.rate, duration=args.blocks, seed=args.seed)
    if args.mix:
        fkw["mix"] = _mix(args.mix)
    try:
        fcfg = FlowConfig(**fkw)
    except ValueError as e:
        raise UsageError(str(e)) from e
    g = genesis_of(cfg)
    node = LedgerNode.from_genesis(g, block_interval=0.0)
    flows = FlowGenerator(node, fcfg)
    backlog = []
    for _ in range(args.blocks):
        flows.step()
        node.mine()
        backlog.append(len(node.get_pending()))
    kinds: dict[str, int] = {}
    for k in flows.kinds:
        kinds[k] = kinds.get(k, 0) + 1
    return {"blocks": args.blocks, "rate": fcfg.rate, "submitted": len(flows.submitted),
            "rejected": flows.rejected, "kinds": dict(sorted(kinds.items())), "backlog": backlog,
            "stateRoot": node.state_root().hex()}


def cmd_eval(args: argparse.Namespace, cfg: dict[str, Any], io: dict[str, TextIO]) -> dict[str, Any]:
    if args.what == "checker":
        ks = args.k_sweep or [1.0, 1.5, 2.0]
        cfgs = [feasibility_config(args, cfg, k) for k in ks]
        workload = CheckerWorkload(candidates=args.candidates, seed=args.seed)
        if args.rate is not None:
            workload.flows.rate = args.rate
        return evaluate_checker(workload, cfgs, timings=args.timings).to_json()
    seeds = range(args.seed, args.seed + args.seeds)
    interval = float(cfg.get("blockInterval", 0.1))
    return evaluate_speedup(args.dis or [0.0, 0.5, 1.0], seeds, n=args.n,
                            workers=int(_pick(args, cfg, "workers", "workers", 8)),
                            block_interval=interval,
                            mode=_pick(args, cfg, "mode", "mode", "sim")).to_json()


# -- argument parsing -------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    def globals_(suppress: bool) -> argparse.ArgumentParser:
        # accepted before or after the subcommand; the later one wins
        g = argparse.ArgumentParser(add_help=False)
        d = (lambda v: argparse.SUPPRESS) if suppress else (lambda v: v)
        g.add_argument("--config", default=d(None), help="JSON config with genesis and defaults")
        g.add_argument("--seed", type=int, default=d(0))
        g.add_argument("--out", default=d(None), help="write JSON here instead of stdout")
        return g

    common = globals_(True)

    check = argparse.ArgumentParser(add_help=False)
    check.add_argument("--k", type=float, help="predicted-block horizon in blocks")
    check.add_argument("--contexts", type=int, help="simulated orderings per check")
    check.add_argument("--timings", action="store_true", help="include wall-clock fields")

    exe = argparse.ArgumentParser(add_help=False)
    exe.add_argument("--workers", type=int)
    exe.add_argument("--mode", choices=["sim", "live"])

    parser = argparse.ArgumentParser(prog="intentkit", description="Intent compiler and execution workbench",
                                     parents=[globals_(False)])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("compile", parents=[common], help="attest, compile and sign a program")
    p.add_argument("file", help="ICL source, '-' for stdin, or 'example' for the bundled example")
    p.set_defaults(func=cmd_compile)

    p = sub.add_parser("run", parents=[common, check, exe], help="compile and execute a program")
    p.add_argument("file", help="ICL source, '-' for stdin, or 'example' for the bundled example")
    p.add_argument("--serial", action="store_true", help="one transaction at a time")
    p.add_argument("--auto-confirm", action="store_true", help="approve every submission")
    p.add_argument("--force", action="store_true", help="submit even on HIGH risk")
    p.add_argument("--no-check", action="store_true", help="skip the feasibility checker")
    p.add_argument("--no-prune", action="store_true", help="keep every dependency edge")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("check", parents=[common, check], help="feasibility verdicts for signed transactions")
    p.add_argument("txjson", help="signed transaction JSON, a list, or compile output")
    p.add_argument("--flows", type=float, default=0, help="submit one block of background flows at this rate first")
    p.set_defaults(func=cmd_check)

    p = sub.add_parser("gen", parents=[common], help="workload generators")
    p.add_argument("what", choices=["program", "flows"])
    p.add_argument("--n", type=int, default=50, help="statements per program")
    p.add_argument("--di", type=float, default=0.5, help="dependency index")
    p.add_argument("--wallets", type=int, help="worker wallets, default n")
    p.add_argument("--icl", help="also write the program source here")
    p.add_argument("--rate", type=float, default=16.0, help="flow transactions per block")
    p.add_argument("--blocks", type=int, default=10, help="blocks of flow traffic")
    p.add_argument("--mix", help="weights as name=w,name=w")
    p.set_defaults(func=cmd_gen)

    p = sub.add_parser("eval", parents=[common, check, exe], help="evaluation harnesses")
    p.add_argument("what", choices=["checker", "speedup"])
    p.add_argument("--candidates", type=int, default=500)
    p.add_argument("--k-sweep", type=float, nargs="+", help="horizons to compare, default 1 1.5 2")
    p.add_argument("--rate", type=float, help="flow rate override")
    p.add_argument("--dis", type=float, nargs="+", help="dependency indexes, default 0 0.5 1")
    p.add_argument("--seeds", type=int, default=20)
    p.add_argument("--n", type=int, default=50)
    p.set_defaults(func=cmd_eval)
    return parser


DOMAIN_ERRORS = (PipelineError, CompileError, IclError, GenerationExhausted)


def main(argv: list[str] | None = None, *, stdin: TextIO | None = None,
         stdout: TextIO | None = None, stderr: TextIO | None = None) -> int:
    io = {"stdin": stdin or sys.stdin, "stdout": stdout or sys.stdout, "stderr": stderr or sys.stderr}
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return EXIT_OK if e.code == 0 else EXIT_USAGE
    func: Callable[..., dict[str, Any]] = args.func
    try:
        cfg = load_config(args.config)
        doc = func(args, cfg, io)
    except (UsageError, ValueError) as e:
        io["stderr"].write(f"usage error: {e}\n")
        return EXIT_USAGE
    except DOMAIN_ERRORS as e:
        stage = getattr(e, "stage", type(e).__name__)
        io["stderr"].write(f"error [{stage}]: {getattr(e, 'cause', e)}\n")
        return EXIT_DOMAIN
    text = json.dumps(doc, indent=2, sort_keys=True) + "\n"
    if args.out:
        Path(args.out).write_text(text)
    else:
        io["stdout"].write(text)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
