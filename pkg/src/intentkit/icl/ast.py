"""Typed AST for ICL programs.

Nodes are frozen dataclasses; source spans are excluded from equality so
that a re-parsed pretty-print compares equal to the original tree.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction
from typing import Union

from intentkit.assets import to_base_units


@dataclass(frozen=True)
class Span:
    start: int
    end: int
    line: int
    column: int


NO_SPAN = Span(0, 0, 0, 0)


def number_value(text: str) -> Fraction:
    """Exact value of a DEC_INT / DEC_FLOAT lexeme.

    A missing exponent after ``e``/``p`` counts as zero; ``p`` is treated as
    a decimal exponent marker like ``e``.
    """
    t = text.lower().replace("p", "e")
    if "e" in t:
        mant, _, exp = t.partition("e")
        exponent = int(exp) if exp not in ("", "+", "-") else 0
    else:
        mant, exponent = t, 0
    if mant in ("", "."):
        raise ValueError(f"malformed number {text!r}")
    whole, _, frac = mant.partition(".")
    digits = (whole or "0") + frac
    value = Fraction(int(digits), 10 ** len(frac))
    return value * Fraction(10) ** exponent


# ---------------------------------------------------------------------------
# arithmetic (only inside amounts)


@dataclass(frozen=True)
class Num:
    text: str
    span: Span = field(default=NO_SPAN, compare=False, repr=False)

    @property
    def value(self) -> Fraction:
        return number_value(self.text)


@dataclass(frozen=True)
class Unary:
    op: str  # '+', '-', 'not'
    operand: "Arith"


@dataclass(frozen=True)
class Binary:
    op: str  # '+', '-', '*', '/', '%'
    left: "Arith"
    right: "Arith"


Arith = Union[Num, Unary, Binary]


def eval_arith(node: Arith) -> Fraction:
    if isinstance(node, Num):
        return node.value
    if isinstance(node, Unary):
        v = eval_arith(node.operand)
        if node.op == "-":
            return -v
        if node.op == "not":
            return Fraction(1 if v == 0 else 0)
        return v
    left, right = eval_arith(node.left), eval_arith(node.right)
    if node.op == "+":
        return left + right
    if node.op == "-":
        return left - right
    if node.op == "*":
        return left * right
    if right == 0:
        raise ZeroDivisionError("division by zero in amount")
    if node.op == "/":
        return left / right
    return left % right


@dataclass(frozen=True)
class Amount:
    expr: Arith
    asset: str
    span: Span = field(default=NO_SPAN, compare=False, repr=False)

    @property
    def value(self) -> Fraction:
        return eval_arith(self.expr)

    def base_units(self) -> int:
        return to_base_units(self.value, self.asset)


# ---------------------------------------------------------------------------
# conditions


@dataclass(frozen=True)
class WalletBalance:
    wallet: str


@dataclass(frozen=True)
class AssetPrice:
    asset: str


@dataclass(frozen=True)
class AmountLiteral:
    number: str
    asset: str

    @property
    def value(self) -> Fraction:
        return number_value(self.number)

    def base_units(self) -> int:
        return to_base_units(self.value, self.asset)


@dataclass(frozen=True)
class NumberLiteral:
    number: str

    @property
    def value(self) -> Fraction:
        return number_value(self.number)


@dataclass(frozen=True)
class SlippageRef:
    pass


@dataclass(frozen=True)
class FeeRef:
    pass


@dataclass(frozen=True)
class Parenthesized:
    expr: "Condition"


Element = Union[
    WalletBalance, AssetPrice, AmountLiteral, NumberLiteral, SlippageRef, FeeRef,
    Parenthesized,
]


@dataclass(frozen=True)
class Comparison:
    left: Element
    op: str
    right: Element


@dataclass(frozen=True)
class TimeCondition:
    kind: str  # 'before' | 'after' | 'during'
    start: str
    end: str | None = None


@dataclass(frozen=True)
class And:
    terms: tuple["Condition", ...]


@dataclass(frozen=True)
class Or:
    terms: tuple["Condition", ...]


Condition = Union[Or, And, Comparison, TimeCondition, Parenthesized]


# ---------------------------------------------------------------------------
# statements


@dataclass(frozen=True)
class Transfer:
    amount: Amount
    from_wallet: str
    to_wallet: str


@dataclass(frozen=True)
class Borrow:
    amount: Amount
    wallet: str
    platform: str


@dataclass(frozen=True)
class Repay:
    amount: Amount
    wallet: str
    platform: str


@dataclass(frozen=True)
class Swap:
    amount: Amount
    wallet: str
    to_asset: str
    platform: str


@dataclass(frozen=True)
class AddLiquidity:
    amount_a: Amount
    amount_b: Amount
    platform: str
    receiver: str


@dataclass(frozen=True)
class RemoveLiquidity:
    amount_a: Amount
    amount_b: Amount
    platform: str
    liquidity: str
    token_key: str | None
    wallet: str

    @property
    def liquidity_units(self) -> int:
        return int(self.liquidity)


@dataclass(frozen=True)
class StakeStrategy:
    qualifiers: tuple[str, ...] = ()

    @property
    def risk(self) -> str | None:
        for q in self.qualifiers:
            if q.endswith("-risk"):
                return q[: -len("-risk")]
        return None

    @property
    def term(self) -> str | None:
        for q in self.qualifiers:
            if q.endswith("-term"):
                return q[: -len("-term")]
        return None


@dataclass(frozen=True)
class Stake:
    amount: Amount
    wallet: str
    strategy: StakeStrategy | None = None


@dataclass(frozen=True)
class SimpleStake:
    amount: Amount
    wallet: str
    platform: str


@dataclass(frozen=True)
class BuyNft:
    qualifiers: tuple[str, ...]
    budget: Amount
    wallet: str


@dataclass(frozen=True)
class SimpleBuyNft:
    nft_key: str
    collection_key: str
    budget: Amount
    wallet: str


@dataclass(frozen=True)
class SellNft:
    nft_key: str
    collection_key: str
    wallet: str
    strategy: tuple[str, ...] | None = None


@dataclass(frozen=True)
class SimpleSellNft:
    nft_key: str
    collection_key: str
    wallet: str
    min_amount: Amount


Statement = Union[
    Transfer, Borrow, Repay, Swap, AddLiquidity, RemoveLiquidity, Stake,
    SimpleStake, BuyNft, SimpleBuyNft, SellNft, SimpleSellNft,
]


@dataclass(frozen=True)
class TriggerStatement:
    statement: Statement
    trigger: Condition | None = None
    constraint: Condition | None = None
    index: int = 1
    span: Span = field(default=NO_SPAN, compare=False, repr=False)


@dataclass(frozen=True)
class Program:
    statements: tuple[TriggerStatement, ...]
    source: str = field(default="", compare=False, repr=False)

    def __len__(self) -> int:
        return len(self.statements)

    def __iter__(self):
        return iter(self.statements)
