from __future__ import annotations


class IclError(Exception):
    """Base class for all language-level errors."""


class SourceError(IclError):
    def __init__(self, message: str, offset: int, line: int, column: int) -> None:
        super().__init__(f"{line}:{column}: {message}")
        self.message = message
        self.offset = offset
        self.line = line
        self.column = column


class LexError(SourceError):
    """An input character that starts no valid token."""

    def __init__(self, char: str, offset: int, line: int, column: int) -> None:
        super().__init__(f"unexpected character {char!r}", offset, line, column)
        self.char = char


class ParseError(SourceError):
    def __init__(
        self,
        message: str,
        offset: int,
        line: int,
        column: int,
        expected: frozenset[str] = frozenset(),
        end: int | None = None,
    ) -> None:
        super().__init__(message, offset, line, column)
        self.expected = expected
        self.end = offset + 1 if end is None else end


class EvalError(IclError):
    pass


class MissingPrice(EvalError):
    def __init__(self, asset: str) -> None:
        super().__init__(f"no oracle price for {asset}")
        self.asset = asset


class RuntimeRefInTrigger(EvalError):
    """``slippage``/``fee`` referenced where no runtime observations exist."""


class ConditionTypeError(EvalError, TypeError):
    pass
