"""Condition evaluation over a ledger view.

The view only needs ``balance(wallet, asset) -> int`` (base units, 0 when
absent) and ``price(asset) -> int`` (micro-USD, raising when unset).
"""

from __future__ import annotations

import operator
from calendar import timegm
from dataclasses import dataclass
from fractions import Fraction
from typing import Any, Protocol

from intentkit.assets import PRICE_SCALE
from intentkit.icl import ast
from intentkit.icl.errors import ConditionTypeError, MissingPrice, RuntimeRefInTrigger
from intentkit.icl.parser import parse_time

_OPS = {
    "==": operator.eq, "!=": operator.ne, "<": operator.lt,
    ">": operator.gt, "<=": operator.le, ">=": operator.ge,
}


class LedgerView(Protocol):
    def balance(self, wallet: str, asset: str) -> int: ...

    def price(self, asset: str) -> int: ...


@dataclass(frozen=True)
class RuntimeObservations:
    slippage: Fraction
    fee: int


@dataclass(frozen=True)
class EvalContext:
    snapshot: LedgerView
    now: int = 0
    runtime: RuntimeObservations | None = None


def time_to_epoch(text: str) -> int:
    return timegm(parse_time(text).timetuple())


# typed operand values
@dataclass(frozen=True)
class _Bal:
    wallet: str


@dataclass(frozen=True)
class _Amt:
    asset: str
    units: int


def _operand(e: ast.Element, ctx: EvalContext) -> Any:
    if isinstance(e, ast.WalletBalance):
        return _Bal(e.wallet)
    if isinstance(e, ast.AssetPrice):
        try:
            p = ctx.snapshot.price(e.asset)
        except (KeyError, LookupError):
            raise MissingPrice(e.asset) from None
        return Fraction(p, PRICE_SCALE)
    if isinstance(e, ast.AmountLiteral):
        return _Amt(e.asset, e.base_units())
    if isinstance(e, ast.NumberLiteral):
        return e.value
    if isinstance(e, ast.SlippageRef):
        if ctx.runtime is None:
            raise RuntimeRefInTrigger("slippage is only observable at execution time")
        return Fraction(ctx.runtime.slippage)
    if isinstance(e, ast.FeeRef):
        if ctx.runtime is None:
            raise RuntimeRefInTrigger("fee is only observable at execution time")
        return Fraction(ctx.runtime.fee)
    return evaluate_condition(e.expr, ctx)


def _compare(c: ast.Comparison, ctx: EvalContext) -> bool:
    left, right = _operand(c.left, ctx), _operand(c.right, ctx)
    op = _OPS[c.op]
    if isinstance(left, _Bal) and isinstance(right, _Amt):
        return op(ctx.snapshot.balance(left.wallet, right.asset), right.units)
    if isinstance(left, _Amt) and isinstance(right, _Bal):
        return op(left.units, ctx.snapshot.balance(right.wallet, left.asset))
    if isinstance(left, _Amt) and isinstance(right, _Amt):
        if left.asset != right.asset:
            raise ConditionTypeError(f"cannot compare {left.asset} with {right.asset}")
        return op(left.units, right.units)
    if isinstance(left, bool) and isinstance(right, bool):
        if c.op not in ("==", "!="):
            raise ConditionTypeError(f"operator {c.op} is not defined on conditions")
        return op(left, right)
    if isinstance(left, Fraction) and isinstance(right, Fraction):
        return op(left, right)
    raise ConditionTypeError(
        f"cannot compare {type(left).__name__.strip('_')} with {type(right).__name__.strip('_')}"
    )


def evaluate_condition(cond: ast.Condition, ctx: EvalContext) -> bool:
    if isinstance(cond, ast.Or):
        return any(evaluate_condition(t, ctx) for t in cond.terms)
    if isinstance(cond, ast.And):
        return all(evaluate_condition(t, ctx) for t in cond.terms)
    if isinstance(cond, ast.Comparison):
        return _compare(cond, ctx)
    if isinstance(cond, ast.TimeCondition):
        start = time_to_epoch(cond.start)
        if cond.kind == "before":
            return ctx.now < start
        if cond.kind == "after":
            return ctx.now > start
        return start <= ctx.now <= time_to_epoch(cond.end)
    if isinstance(cond, ast.Parenthesized):
        return evaluate_condition(cond.expr, ctx)
    raise TypeError(f"not a condition: {cond!r}")


def references_runtime(cond: ast.Condition | None) -> bool:
    """True when ``cond`` mentions ``slippage`` or ``fee`` anywhere."""
    if cond is None:
        return False
    if isinstance(cond, (ast.Or, ast.And)):
        return any(references_runtime(t) for t in cond.terms)
    if isinstance(cond, ast.Comparison):
        return any(
            isinstance(e, (ast.SlippageRef, ast.FeeRef))
            or (isinstance(e, ast.Parenthesized) and references_runtime(e.expr))
            for e in (cond.left, cond.right)
        )
    if isinstance(cond, ast.Parenthesized):
        return references_runtime(cond.expr)
    return False


def top_level_conjuncts(cond: ast.Condition | None) -> list[ast.Condition]:
    """Terms that must all hold for ``cond`` to hold (flattening And/parens)."""
    if cond is None:
        return []
    if isinstance(cond, ast.And):
        return [x for t in cond.terms for x in top_level_conjuncts(t)]
    if isinstance(cond, ast.Parenthesized):
        return top_level_conjuncts(cond.expr)
    return [cond]
