"""The ICL intent language: lexer, parser, printer and condition evaluator."""

from intentkit.icl import ast
from intentkit.icl.errors import (
    ConditionTypeError,
    EvalError,
    IclError,
    LexError,
    MissingPrice,
    ParseError,
    RuntimeRefInTrigger,
)
from intentkit.icl.evaluate import EvalContext, RuntimeObservations, evaluate_condition
from intentkit.icl.lexer import Token, TokenKind, tokenize
from intentkit.icl.parser import parse, parse_condition
from intentkit.icl.printer import dump_json, program as print_program


def lint(program: ast.Program) -> list[str]:
    """Non-fatal hints about a parsed program."""
    hints = []
    for ts in program.statements:
        if isinstance(ts.statement, ast.BuyNft) and "price-decreaseing" in ts.statement.qualifiers:
            hints.append(
                f"statement {ts.index}: 'price-decreaseing' is the accepted spelling of "
                "the decreasing-price qualifier"
            )
    return hints


__all__ = [
    "ConditionTypeError", "EvalContext", "EvalError", "IclError", "LexError",
    "MissingPrice", "ParseError", "RuntimeObservations", "RuntimeRefInTrigger",
    "Token", "TokenKind", "ast", "dump_json", "evaluate_condition", "lint",
    "parse", "parse_condition", "print_program", "tokenize",
]
