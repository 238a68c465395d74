"""Tokenizer for ICL source.

Longest match wins; on equal length, literal keywords beat DEC_INT, which
beats DEC_FLOAT, PRIVATE_KEY, KEY and TIME, in that order.
Alphabetic keywords additionally require that no letter, digit or
underscore follows them, so ``swapx`` is an error rather than ``swap x``.
"""

from __future__ import annotations

import enum
import re
from dataclasses import dataclass

from intentkit.icl.errors import LexError


class TokenKind(enum.Enum):
    KEYWORD = "keyword"
    ASSET = "asset"
    PLATFORM = "platform"
    NFT_PLATFORM = "nft-platform"
    NFT_QUALIFIER = "nft-qualifier"
    STAKE_QUALIFIER = "stake-qualifier"
    SELL_QUALIFIER = "sell-qualifier"
    LOGIC_AND = "and"
    LOGIC_OR = "or"
    LOGIC_NOT = "not"
    EQ = "=="
    NEQ = "!="
    LT = "<"
    GT = ">"
    LE = "<="
    GE = ">="
    ADD = "+"
    SUB = "-"
    MUL = "*"
    DIV = "/"
    MOD = "%"
    LPAREN = "("
    RPAREN = ")"
    LBRACK = "["
    RBRACK = "]"
    COMMA = ","
    SEMI = ";"
    DEC_INT = "DEC_INT"
    DEC_FLOAT = "DEC_FLOAT"
    PRIVATE_KEY = "PRIVATE_KEY"
    KEY = "KEY"
    TIME = "TIME"
    EOF = "<eof>"


@dataclass(frozen=True)
class Token:
    kind: TokenKind
    lexeme: str
    start: int
    end: int
    line: int
    column: int

    def __str__(self) -> str:
        return self.lexeme if self.kind is not TokenKind.EOF else "<eof>"


KEYWORDS = (
    "balance", "price", "slippage", "fee", "wallet", "trigger", "then",
    "checking", "time", "before", "after", "during", "to", "transfer", "from",
    "borrow", "for", "repay", "swap", "on", "add", "receiving", "liquidity",
    "token", "remove", "returning", "of", "stake", "using", "strategy", "buy",
    "NFT", "at", "most", "least", "sell", "in", "collection",
)
ASSET_LEXEMES = {
    "USDT": "USDT", "USDC": "USDC", "ETH": "ETH", "DAI": "DAI", "BTC": "BTC",
    "WBTC": "WBTC", "WETH": "WETH", "UNI": "UNI", "SUSHI": "SUSHI",
    "AAVE": "AAVE", "MATIC": "MATIC", "COMP": "COMP",
    # accepted as an alias spelling of the COMP token
    "COMAP": "COMP",
}
PLATFORM_LEXEMES = (
    "Aave", "Uniswap", "Compound", "Yearn", "Sushiswap", "Curve", "1inch",
    "Polygon", "Avax",
)
NFT_PLATFORMS = (
    "OpenSea", "Rarible", "SuperRare", "Foundation", "Mintable", "BakerySwap",
    "LooksRare",
)
NFT_QUALIFIERS = (
    "mainstream", "popular", "rare", "inexpensive", "price-increasing",
    "price-decreaseing",
)
STAKE_QUALIFIERS = (
    "low-risk", "middle-risk", "high-risk", "short-term", "middle-term",
    "long-term",
)
SELL_QUALIFIERS = ("time-saving", "profitable")

_SYMBOLS = {
    "==": TokenKind.EQ, "!=": TokenKind.NEQ, "<=": TokenKind.LE,
    ">=": TokenKind.GE, "<": TokenKind.LT, ">": TokenKind.GT,
    "+": TokenKind.ADD, "-": TokenKind.SUB, "*": TokenKind.MUL,
    "/": TokenKind.DIV, "%": TokenKind.MOD, "(": TokenKind.LPAREN,
    ")": TokenKind.RPAREN, "[": TokenKind.LBRACK, "]": TokenKind.RBRACK,
    ",": TokenKind.COMMA, ";": TokenKind.SEMI,
}

_WORDS: dict[str, TokenKind] = {}
for _w in KEYWORDS:
    _WORDS[_w] = TokenKind.KEYWORD
for _w in ASSET_LEXEMES:
    _WORDS[_w] = TokenKind.ASSET
for _w in PLATFORM_LEXEMES:
    _WORDS[_w] = TokenKind.PLATFORM
for _w in NFT_PLATFORMS:
    _WORDS[_w] = TokenKind.NFT_PLATFORM
for _w in NFT_QUALIFIERS:
    _WORDS[_w] = TokenKind.NFT_QUALIFIER
for _w in STAKE_QUALIFIERS:
    _WORDS[_w] = TokenKind.STAKE_QUALIFIER
for _w in SELL_QUALIFIERS:
    _WORDS[_w] = TokenKind.SELL_QUALIFIER
_WORDS["and"] = TokenKind.LOGIC_AND
_WORDS["or"] = TokenKind.LOGIC_OR
_WORDS["not"] = TokenKind.LOGIC_NOT

_WORD_RE = re.compile(r"[A-Za-z0-9][A-Za-z0-9-]*")
_PATTERNS: tuple[tuple[TokenKind, re.Pattern[str]], ...] = (
    (TokenKind.DEC_INT, re.compile(r"0|[1-9][0-9]*")),
    (
        TokenKind.DEC_FLOAT,
        re.compile(
            r"[0-9]*\.[0-9]*(?:[pPeE][+-]?[0-9]+)?"
            r"|[0-9]+\.?[0-9]*[pPeE](?:[+-]?[0-9]+)?"
        ),
    ),
    (TokenKind.PRIVATE_KEY, re.compile(r"[A-Fa-f0-9]+")),
    (TokenKind.KEY, re.compile(r"0[xX][0-9A-Fa-f]+")),
    (
        TokenKind.TIME,
        re.compile(
            r"[0-9]{4}-(?:0[1-9]|1[0-2])-(?:0[1-9]|[12][0-9]|3[01])"
            r"T(?:2[0-3]|[01]?[0-9]):[0-5]?[0-9]:[0-5]?[0-9]"
        ),
    ),
)
_BOUNDARY = re.compile(r"[A-Za-z0-9_]")


def _keyword_match(source: str, pos: int) -> tuple[str, TokenKind] | None:
    """Longest keyword literal that is a prefix of ``source[pos:]``."""
    m = _WORD_RE.match(source, pos)
    if m is None:
        return None
    run = m.group()
    # try the longest prefix first; hyphens split qualifiers from operators
    for cut in range(len(run), 0, -1):
        word = run[:cut]
        kind = _WORDS.get(word)
        if kind is None:
            continue
        nxt = pos + cut
        if word[-1].isalpha() and nxt < len(source) and _BOUNDARY.match(source, nxt):
            continue
        return word, kind
    return None


class Lexer:
    def __init__(self, source: str) -> None:
        self.source = source
        self.pos = 0
        self.line = 1
        self.col = 1

    def _advance(self, n: int) -> None:
        chunk = self.source[self.pos:self.pos + n]
        newlines = chunk.count("\n")
        if newlines:
            self.line += newlines
            self.col = len(chunk) - chunk.rfind("\n")
        else:
            self.col += n
        self.pos += n

    def _skip_trivia(self) -> None:
        src = self.source
        while self.pos < len(src):
            c = src[self.pos]
            if c in " \t\r\n":
                self._advance(1)
            elif src.startswith("//", self.pos):
                end = src.find("\n", self.pos)
                self._advance((len(src) if end < 0 else end + 1) - self.pos)
            elif src.startswith("/*", self.pos):
                end = src.find("*/", self.pos + 2)
                if end < 0:
                    raise LexError("/", self.pos, self.line, self.col)
                self._advance(end + 2 - self.pos)
            else:
                return

    def tokens(self) -> list[Token]:
        out: list[Token] = []
        src = self.source
        while True:
            self._skip_trivia()
            if self.pos >= len(src):
                out.append(Token(TokenKind.EOF, "", self.pos, self.pos, self.line, self.col))
                return out
            best: tuple[int, TokenKind, str] | None = None
            kw = _keyword_match(src, self.pos)
            if kw is not None:
                best = (len(kw[0]), kw[1], kw[0])
            for kind, pattern in _PATTERNS:
                m = pattern.match(src, self.pos)
                if m and m.end() > self.pos:
                    if best is None or m.end() - self.pos > best[0]:
                        best = (m.end() - self.pos, kind, m.group())
            sym = None
            for text, kind in _SYMBOLS.items():
                if src.startswith(text, self.pos):
                    sym = (len(text), kind, text)
                    break
            if sym is not None and (best is None or sym[0] > best[0]):
                best = sym
            if best is None:
                raise LexError(src[self.pos], self.pos, self.line, self.col)
            length, kind, lexeme = best
            out.append(Token(kind, lexeme, self.pos, self.pos + length, self.line, self.col))
            self._advance(length)


def tokenize(source: str) -> list[Token]:
    return Lexer(source).tokens()
