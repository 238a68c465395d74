"""Recursive-descent parser for ICL.

Multi-word grammar literals (``using at most``, ``receiving liquidity token
to`` ...) are matched as keyword sequences, so any whitespace or comments may
separate their words.
"""

from __future__ import annotations

from datetime import datetime

from intentkit.icl import ast
from intentkit.icl.errors import ParseError
from intentkit.icl.lexer import Token, TokenKind, tokenize

_CMP = {
    TokenKind.EQ: "==", TokenKind.NEQ: "!=", TokenKind.LT: "<",
    TokenKind.GT: ">", TokenKind.LE: "<=", TokenKind.GE: ">=",
}
_NUMBER = (TokenKind.DEC_INT, TokenKind.DEC_FLOAT)

STATEMENT_STARTS = ("transfer", "borrow", "repay", "swap", "add", "remove", "stake", "buy", "sell")


def parse_time(text: str) -> datetime:
    date, _, clock = text.partition("T")
    h, m, s = (int(x) for x in clock.split(":"))
    y, mo, d = (int(x) for x in date.split("-"))
    return datetime(y, mo, d, h, m, s)


class Parser:
    def __init__(self, source: str) -> None:
        self.source = source
        self.tokens = tokenize(source)
        self.i = 0

    # -- token helpers -----------------------------------------------------

    @property
    def tok(self) -> Token:
        return self.tokens[self.i]

    def _error(self, expected: set[str] | frozenset[str], tok: Token | None = None,
               message: str | None = None) -> ParseError:
        tok = tok or self.tok
        found = "end of input" if tok.kind is TokenKind.EOF else repr(tok.lexeme)
        if message is None:
            message = f"expected {' | '.join(sorted(expected))}, found {found}"
        return ParseError(message, tok.start, tok.line, tok.column, frozenset(expected),
                          end=max(tok.end, tok.start + 1))

    def _is_kw(self, word: str, offset: int = 0) -> bool:
        t = self.tokens[min(self.i + offset, len(self.tokens) - 1)]
        return t.kind is TokenKind.KEYWORD and t.lexeme == word

    def _kw(self, *words: str) -> Token:
        first = self.tok
        for w in words:
            if not self._is_kw(w):
                raise self._error({repr(" ".join(words))})
            self.i += 1
        return first

    def _take(self, kind: TokenKind, label: str | None = None) -> Token:
        if self.tok.kind is not kind:
            raise self._error({label or kind.value})
        t = self.tok
        self.i += 1
        return t

    def _span(self, first: Token) -> ast.Span:
        last = self.tokens[self.i - 1]
        return ast.Span(first.start, last.end, first.line, first.column)

    # -- program -------------------------------------------------------------

    def program(self) -> ast.Program:
        stmts: list[ast.TriggerStatement] = []
        while self.tok.kind is not TokenKind.EOF or not stmts:
            stmts.append(self.trigger_statement(len(stmts) + 1))
        return ast.Program(tuple(stmts), self.source)

    def trigger_statement(self, index: int) -> ast.TriggerStatement:
        first = self.tok
        trigger = None
        if self._is_kw("trigger"):
            self.i += 1
            trigger = self.condition()
            self._kw("then")
        stmt = self.statement(allow_trigger=trigger is None)
        constraint = None
        if self._is_kw("checking"):
            self.i += 1
            constraint = self.condition()
        if self.tok.kind is not TokenKind.SEMI:
            expected = {"';'"} if constraint is not None else {"';'", "'checking'"}
            raise self._error(expected)
        self.i += 1
        return ast.TriggerStatement(stmt, trigger, constraint, index, self._span(first))

    # -- statements ----------------------------------------------------------

    def statement(self, allow_trigger: bool = False) -> ast.Statement:
        t = self.tok
        if t.kind is TokenKind.KEYWORD and t.lexeme in STATEMENT_STARTS:
            return getattr(self, f"_stmt_{t.lexeme}")()
        expected = {repr(w) for w in STATEMENT_STARTS}
        if allow_trigger:
            expected.add("'trigger'")
        raise self._error(expected)

    def _stmt_transfer(self) -> ast.Statement:
        self._kw("transfer")
        amount = self.amount()
        self._kw("from")
        src = self.wallet()
        self._kw("to")
        return ast.Transfer(amount, src, self.wallet())

    def _stmt_borrow(self) -> ast.Statement:
        self._kw("borrow")
        amount = self.amount()
        self._kw("for")
        w = self.wallet()
        self._kw("from")
        return ast.Borrow(amount, w, self.platform())

    def _stmt_repay(self) -> ast.Statement:
        self._kw("repay")
        amount = self.amount()
        self._kw("from")
        w = self.wallet()
        self._kw("to")
        return ast.Repay(amount, w, self.platform())

    def _stmt_swap(self) -> ast.Statement:
        self._kw("swap")
        amount = self.amount()
        self._kw("from")
        w = self.wallet()
        self._kw("for")
        to_asset = self.asset()
        self._kw("on")
        return ast.Swap(amount, w, to_asset, self.platform())

    def _stmt_add(self) -> ast.Statement:
        self._kw("add")
        a = self.amount()
        self._take(TokenKind.COMMA, "','")
        b = self.amount()
        self._kw("to")
        platform = self.platform()
        self._kw("receiving", "liquidity", "token", "to")
        return ast.AddLiquidity(a, b, platform, self.wallet())

    def _stmt_remove(self) -> ast.Statement:
        self._kw("remove")
        a = self.amount()
        self._take(TokenKind.COMMA, "','")
        b = self.amount()
        self._kw("from")
        platform = self.platform()
        self._kw("returning")
        liq = self._take(TokenKind.DEC_INT).lexeme
        self._kw("liquidity")
        token_key = None
        if self._is_kw("of"):
            self._kw("of", "token")
            token_key = self.bracket_key()
        self._kw("from")
        return ast.RemoveLiquidity(a, b, platform, liq, token_key, self.wallet())

    def _stmt_stake(self) -> ast.Statement:
        self._kw("stake")
        amount = self.amount()
        self._kw("from")
        w = self.wallet()
        if self._is_kw("on"):
            self.i += 1
            return ast.SimpleStake(amount, w, self.platform())
        strategy = None
        if self._is_kw("using"):
            self.i += 1
            quals = []
            while self.tok.kind is TokenKind.STAKE_QUALIFIER:
                quals.append(self.tok)
                self.i += 1
            self._check_stake_qualifiers(quals)
            if not self._is_kw("strategy"):
                raise self._error({"stake qualifier", "'strategy'"})
            self.i += 1
            strategy = ast.StakeStrategy(tuple(q.lexeme for q in quals))
        return ast.Stake(amount, w, strategy)

    def _check_stake_qualifiers(self, quals: list[Token]) -> None:
        seen: dict[str, str] = {}
        for q in quals:
            dim = q.lexeme.rsplit("-", 1)[1]
            if dim in seen and seen[dim] != q.lexeme:
                raise self._error(set(), q, f"conflicting {dim} qualifiers {seen[dim]!r} and {q.lexeme!r}")
            seen[dim] = q.lexeme

    def _stmt_buy(self) -> ast.Statement:
        self._kw("buy")
        if self._is_kw("NFT") and self.tokens[self.i + 1].kind is TokenKind.LBRACK:
            self.i += 1
            nft = self.bracket_key()
            self._kw("in", "collection")
            coll = self.bracket_key()
            self._kw("using", "at", "most")
            budget = self.amount()
            self._kw("from")
            return ast.SimpleBuyNft(nft, coll, budget, self.wallet())
        quals = []
        while self.tok.kind is TokenKind.NFT_QUALIFIER:
            quals.append(self.tok.lexeme)
            self.i += 1
        if not self._is_kw("NFT"):
            raise self._error({"NFT qualifier", "'NFT'"})
        self.i += 1
        self._kw("using", "at", "most")
        budget = self.amount()
        self._kw("from")
        return ast.BuyNft(tuple(quals), budget, self.wallet())

    def _stmt_sell(self) -> ast.Statement:
        self._kw("sell", "NFT")
        nft = self.bracket_key()
        self._kw("in", "collection")
        coll = self.bracket_key()
        self._kw("from")
        w = self.wallet()
        if self._is_kw("for"):
            self._kw("for", "at", "least")
            return ast.SimpleSellNft(nft, coll, w, self.amount())
        strategy = None
        if self._is_kw("using"):
            self.i += 1
            quals = []
            while self.tok.kind is TokenKind.SELL_QUALIFIER:
                quals.append(self.tok.lexeme)
                self.i += 1
            if not self._is_kw("strategy"):
                raise self._error({"sell qualifier", "'strategy'"})
            self.i += 1
            strategy = tuple(quals)
        return ast.SellNft(nft, coll, w, strategy)

    # -- leaves ----------------------------------------------------------------

    def bracket_key(self) -> str:
        self._take(TokenKind.LBRACK, "'['")
        key = self._take(TokenKind.KEY).lexeme.lower()
        self._take(TokenKind.RBRACK, "']'")
        return key

    def wallet(self) -> str:
        self._kw("wallet")
        return self.bracket_key()

    def asset(self) -> str:
        from intentkit.icl.lexer import ASSET_LEXEMES

        return ASSET_LEXEMES[self._take(TokenKind.ASSET, "asset").lexeme]

    def platform(self) -> str:
        return self._take(TokenKind.PLATFORM, "platform").lexeme

    def number(self) -> Token:
        if self.tok.kind not in _NUMBER:
            raise self._error({"number"})
        t = self.tok
        try:
            ast.number_value(t.lexeme)
        except ValueError:
            raise self._error(set(), t, f"malformed number {t.lexeme!r}") from None
        self.i += 1
        return t

    # -- arithmetic ------------------------------------------------------------

    def amount(self) -> ast.Amount:
        first = self.tok
        expr = self.arith()
        asset = self.asset()
        span = self._span(first)
        node = ast.Amount(expr, asset, span)
        try:
            value = node.value
        except ZeroDivisionError:
            raise ParseError("division by zero in amount", first.start, first.line,
                             first.column, end=span.end) from None
        if value < 0:
            raise ParseError("amount must be non-negative", first.start, first.line,
                             first.column, end=span.end)
        return node

    def arith(self) -> ast.Arith:
        left = self._term()
        while self.tok.kind in (TokenKind.ADD, TokenKind.SUB):
            op = self.tok.lexeme
            self.i += 1
            left = ast.Binary(op, left, self._term())
        return left

    def _term(self) -> ast.Arith:
        left = self._unary()
        while self.tok.kind in (TokenKind.MUL, TokenKind.DIV, TokenKind.MOD):
            op = self.tok.lexeme
            self.i += 1
            left = ast.Binary(op, left, self._unary())
        return left

    def _unary(self) -> ast.Arith:
        if self.tok.kind in (TokenKind.ADD, TokenKind.SUB, TokenKind.LOGIC_NOT):
            op = self.tok.lexeme
            self.i += 1
            return ast.Unary(op, self._unary())
        if self.tok.kind is TokenKind.LPAREN:
            self.i += 1
            inner = self.arith()
            self._take(TokenKind.RPAREN, "')'")
            return inner
        if self.tok.kind not in _NUMBER:
            raise self._error({"number", "'('", "'+'", "'-'", "'not'"})
        t = self.number()
        return ast.Num(t.lexeme, ast.Span(t.start, t.end, t.line, t.column))

    # -- conditions ------------------------------------------------------------

    def condition(self) -> ast.Condition:
        terms = [self._and()]
        while self.tok.kind is TokenKind.LOGIC_OR:
            self.i += 1
            terms.append(self._and())
        return terms[0] if len(terms) == 1 else ast.Or(tuple(terms))

    def _and(self) -> ast.Condition:
        terms = [self._cond_term()]
        while self.tok.kind is TokenKind.LOGIC_AND:
            self.i += 1
            terms.append(self._cond_term())
        return terms[0] if len(terms) == 1 else ast.And(tuple(terms))

    def _cond_term(self) -> ast.Condition:
        if self._is_kw("time"):
            return self._time_condition()
        left = self._element()
        if self.tok.kind not in _CMP:
            if isinstance(left, ast.Parenthesized):
                return left
            raise self._error({"comparison operator"})
        op = _CMP[self.tok.kind]
        self.i += 1
        return ast.Comparison(left, op, self._element())

    def _time(self) -> str:
        t = self._take(TokenKind.TIME, "TIME")
        try:
            parse_time(t.lexeme)
        except ValueError as exc:
            raise self._error(set(), t, f"invalid time {t.lexeme!r}: {exc}") from None
        return t.lexeme

    def _time_condition(self) -> ast.Condition:
        self._kw("time")
        if self._is_kw("before") or self._is_kw("after"):
            kind = self.tok.lexeme
            self.i += 1
            return ast.TimeCondition(kind, self._time())
        if not self._is_kw("during"):
            raise self._error({"'before'", "'after'", "'during'"})
        self.i += 1
        start = self._time()
        self._kw("to")
        return ast.TimeCondition("during", start, self._time())

    def _element(self) -> ast.Element:
        t = self.tok
        if self._is_kw("balance"):
            self.i += 1
            return ast.WalletBalance(self.wallet())
        if self._is_kw("price"):
            self.i += 1
            return ast.AssetPrice(self.asset())
        if self._is_kw("slippage"):
            self.i += 1
            return ast.SlippageRef()
        if self._is_kw("fee"):
            self.i += 1
            return ast.FeeRef()
        if t.kind in _NUMBER:
            num = self.number().lexeme
            if self.tok.kind is TokenKind.ASSET:
                return ast.AmountLiteral(num, self.asset())
            return ast.NumberLiteral(num)
        if t.kind is TokenKind.LPAREN:
            self.i += 1
            inner = self.condition()
            self._take(TokenKind.RPAREN, "')'")
            return ast.Parenthesized(inner)
        raise self._error({"'balance'", "'price'", "'slippage'", "'fee'", "number", "'('", "'time'"})


def parse(source: str) -> ast.Program:
    """Parse ICL source text into a :class:`~intentkit.icl.ast.Program`."""
    return Parser(source).program()


def parse_condition(source: str) -> ast.Condition:
    p = Parser(source)
    cond = p.condition()
    if p.tok.kind is not TokenKind.EOF:
        raise p._error({"end of input"})
    return cond
