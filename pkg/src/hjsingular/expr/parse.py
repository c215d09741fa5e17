"""Recursive-descent parser for the expression DSL.

Grammar (whitespace insignificant)::

    expr   := term (('+' | '-') term)*
    term   := factor (('*' | '/') factor)*
    factor := '-' factor | base ('^' integer)?
    base   := number | ident primes? | func '(' expr ')' | '(' expr ')'
    primes := "'"{1..k}

Numbers are integers or decimals and are read exactly.  A leading unary
minus and ``**`` as a synonym for ``^`` are accepted on top of the base
grammar.
"""

from __future__ import annotations

import re
from fractions import Fraction

from .core import FUNCTIONS, Const, Expr, ExprError, func, mul, neg, power, add, Sym
from .symbols import SymbolTable


class ParseError(ExprError, ValueError):
    def __init__(self, message: str, position: int | None = None):
        self.position = position
        where = f" at position {position}" if position is not None else ""
        super().__init__(f"{message}{where}")


_TOKEN = re.compile(
    r"""
    (?P<ws>\s+)
  | (?P<num>\d+\.\d*|\.\d+|\d+)
  | (?P<ident>[A-Za-z_][A-Za-z0-9_]*)
  | (?P<primes>'+)
  | (?P<op>\*\*|[-+*/^()])
    """,
    re.VERBOSE,
)


def tokenize(text: str) -> list[tuple[str, str, int]]:
    out = []
    pos = 0
    while pos < len(text):
        m = _TOKEN.match(text, pos)
        if not m:
            raise ParseError(f"unexpected character {text[pos]!r}", pos)
        kind = m.lastgroup
        if kind != "ws":
            val = m.group()
            if kind == "op" and val == "**":
                val = "^"
            out.append((kind, val, pos))
        pos = m.end()
    out.append(("end", "", len(text)))
    return out


class _Parser:
    def __init__(self, text: str, table: SymbolTable):
        self.toks = tokenize(text)
        self.i = 0
        self.table = table

    def peek(self):
        return self.toks[self.i]

    def take(self):
        tok = self.toks[self.i]
        self.i += 1
        return tok

    def expect(self, val: str):
        kind, v, pos = self.take()
        if v != val:
            raise ParseError(f"expected {val!r}, found {v or 'end of input'!r}", pos)

    def expr(self) -> Expr:
        e = self.term()
        while self.peek()[1] in ("+", "-") and self.peek()[0] == "op":
            op = self.take()[1]
            rhs = self.term()
            e = add(e, rhs) if op == "+" else add(e, neg(rhs))
        return e

    def term(self) -> Expr:
        e = self.factor()
        while self.peek()[0] == "op" and self.peek()[1] in ("*", "/"):
            op, pos = self.take()[1], self.toks[self.i - 1][2]
            rhs = self.factor()
            if op == "*":
                e = mul(e, rhs)
            else:
                if isinstance(rhs, Const) and rhs.value == 0:
                    raise ParseError("division by zero", pos)
                e = mul(e, power(rhs, -1))
        return e

    def factor(self) -> Expr:
        kind, val, pos = self.peek()
        if kind == "op" and val == "-":
            self.take()
            return neg(self.factor())
        base = self.base()
        if self.peek()[1] == "^":
            self.take()
            sign = 1
            if self.peek()[1] == "-":
                self.take()
                sign = -1
            kind, val, pos = self.take()
            if kind != "num" or not val.isdigit():
                raise ParseError("exponent must be an integer", pos)
            n = sign * int(val)
            if isinstance(base, Const) and base.value == 0 and n < 0:
                raise ParseError("division by zero", pos)
            return power(base, n)
        return base

    def base(self) -> Expr:
        kind, val, pos = self.take()
        if kind == "num":
            return Const(Fraction(val))
        if kind == "op" and val == "(":
            e = self.expr()
            self.expect(")")
            return e
        if kind == "ident":
            if val in FUNCTIONS:
                self.expect("(")
                arg = self.expr()
                self.expect(")")
                return func(val, arg)
            primes = 0
            if self.peek()[0] == "primes":
                primes = len(self.take()[1])
                if val in self.table.names and primes > self.table.k:
                    raise ParseError(
                        f"derivative level exceeds order ({primes} > {self.table.k}) for {val!r}",
                        pos,
                    )
            sym = self.table.lookup(val, primes)
            if sym is None:
                raise ParseError(f"unknown identifier {val + chr(39) * primes!r}", pos)
            return Sym(sym)
        raise ParseError(f"unexpected {val or 'end of input'!r}", pos)


def parse(text: str, ctx: SymbolTable | None = None) -> Expr:
    """Parse ``text`` using the coordinate names and order in ``ctx``."""
    p = _Parser(text, ctx or SymbolTable())
    e = p.expr()
    kind, val, pos = p.peek()
    if kind != "end":
        raise ParseError(f"unexpected {val!r}", pos)
    return e
