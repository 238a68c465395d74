"""Normal-form pretty printer and canonical JSON dump."""

from __future__ import annotations

import dataclasses
import json
from typing import Any

from intentkit.icl import ast


def arith(node: ast.Arith) -> str:
    if isinstance(node, ast.Num):
        return node.text
    if isinstance(node, ast.Unary):
        sep = " " if node.op == "not" else ""
        return f"{node.op}{sep}{arith(node.operand)}"
    return f"({arith(node.left)} {node.op} {arith(node.right)})"


def amount(a: ast.Amount) -> str:
    return f"{arith(a.expr)} {a.asset}"


def wallet(key: str) -> str:
    return f"wallet[{key}]"


def element(e: ast.Element) -> str:
    if isinstance(e, ast.WalletBalance):
        return f"balance {wallet(e.wallet)}"
    if isinstance(e, ast.AssetPrice):
        return f"price {e.asset}"
    if isinstance(e, ast.AmountLiteral):
        return f"{e.number} {e.asset}"
    if isinstance(e, ast.NumberLiteral):
        return e.number
    if isinstance(e, ast.SlippageRef):
        return "slippage"
    if isinstance(e, ast.FeeRef):
        return "fee"
    return f"({condition(e.expr)})"


def condition(c: ast.Condition) -> str:
    if isinstance(c, ast.Or):
        return " or ".join(condition(t) for t in c.terms)
    if isinstance(c, ast.And):
        return " and ".join(condition(t) for t in c.terms)
    if isinstance(c, ast.Comparison):
        return f"{element(c.left)} {c.op} {element(c.right)}"
    if isinstance(c, ast.TimeCondition):
        if c.kind == "during":
            return f"time during {c.start} to {c.end}"
        return f"time {c.kind} {c.start}"
    return element(c)


def statement(s: ast.Statement) -> str:
    if isinstance(s, ast.Transfer):
        return f"transfer {amount(s.amount)} from {wallet(s.from_wallet)} to {wallet(s.to_wallet)}"
    if isinstance(s, ast.Borrow):
        return f"borrow {amount(s.amount)} for {wallet(s.wallet)} from {s.platform}"
    if isinstance(s, ast.Repay):
        return f"repay {amount(s.amount)} from {wallet(s.wallet)} to {s.platform}"
    if isinstance(s, ast.Swap):
        return f"swap {amount(s.amount)} from {wallet(s.wallet)} for {s.to_asset} on {s.platform}"
    if isinstance(s, ast.AddLiquidity):
        return (f"add {amount(s.amount_a)}, {amount(s.amount_b)} to {s.platform} "
                f"receiving liquidity token to {wallet(s.receiver)}")
    if isinstance(s, ast.RemoveLiquidity):
        of = f" of token [{s.token_key}]" if s.token_key else ""
        return (f"remove {amount(s.amount_a)}, {amount(s.amount_b)} from {s.platform} "
                f"returning {s.liquidity} liquidity{of} from {wallet(s.wallet)}")
    if isinstance(s, ast.Stake):
        text = f"stake {amount(s.amount)} from {wallet(s.wallet)}"
        if s.strategy is not None:
            text += " using " + "".join(q + " " for q in s.strategy.qualifiers) + "strategy"
        return text
    if isinstance(s, ast.SimpleStake):
        return f"stake {amount(s.amount)} from {wallet(s.wallet)} on {s.platform}"
    if isinstance(s, ast.BuyNft):
        quals = "".join(q + " " for q in s.qualifiers)
        return f"buy {quals}NFT using at most {amount(s.budget)} from {wallet(s.wallet)}"
    if isinstance(s, ast.SimpleBuyNft):
        return (f"buy NFT [{s.nft_key}] in collection [{s.collection_key}] "
                f"using at most {amount(s.budget)} from {wallet(s.wallet)}")
    if isinstance(s, ast.SellNft):
        text = f"sell NFT [{s.nft_key}] in collection [{s.collection_key}] from {wallet(s.wallet)}"
        if s.strategy is not None:
            text += " using " + "".join(q + " " for q in s.strategy) + "strategy"
        return text
    if isinstance(s, ast.SimpleSellNft):
        return (f"sell NFT [{s.nft_key}] in collection [{s.collection_key}] "
                f"from {wallet(s.wallet)} for at least {amount(s.min_amount)}")
    raise TypeError(f"not a statement: {s!r}")


def trigger_statement(ts: ast.TriggerStatement) -> str:
    parts = []
    if ts.trigger is not None:
        parts.append(f"trigger {condition(ts.trigger)} then")
    parts.append(statement(ts.statement))
    if ts.constraint is not None:
        parts.append(f"checking {condition(ts.constraint)}")
    return " ".join(parts) + ";"


def program(p: ast.Program) -> str:
    return "\n".join(trigger_statement(ts) for ts in p.statements) + "\n"


def to_json(node: Any) -> Any:
    """Canonical JSON-ready form: ``{"type": ..., <fields in declaration order>}``.

    Spans and source text are omitted.
    """
    if dataclasses.is_dataclass(node):
        out: dict[str, Any] = {"type": type(node).__name__}
        for f in dataclasses.fields(node):
            if f.name in ("span", "source"):
                continue
            out[f.name] = to_json(getattr(node, f.name))
        return out
    if isinstance(node, tuple):
        return [to_json(x) for x in node]
    return node


def dump_json(p: ast.Program) -> str:
    return json.dumps(to_json(p), indent=2)
