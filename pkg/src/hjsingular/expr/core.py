"""Expression trees over jet coordinates, momenta, time and parameters.

Nodes are immutable and hashable.  The smart constructors (``add``, ``mul``,
``power``) only flatten and fold constants; real simplification goes through
:func:`hjsingular.expr.normal.normalize`.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Callable, Iterable, Mapping, Union

from .symbols import JET, MOMENTUM, PARAM, TIME, Symbol, SymbolTable, jet

FUNCTIONS = ("sin", "cos", "exp")

Number = Union[int, Fraction]


class ExprError(Exception):
    pass


class PoleError(ExprError, ZeroDivisionError):
    pass


class UnboundSymbolError(ExprError, KeyError):
    pass


class LevelError(ExprError):
    pass


class Expr:
    __slots__ = ()

    def __add__(self, other):
        return add(self, as_expr(other))

    def __radd__(self, other):
        return add(as_expr(other), self)

    def __sub__(self, other):
        return add(self, neg(as_expr(other)))

    def __rsub__(self, other):
        return add(as_expr(other), neg(self))

    def __mul__(self, other):
        return mul(self, as_expr(other))

    def __rmul__(self, other):
        return mul(as_expr(other), self)

    def __truediv__(self, other):
        return mul(self, power(as_expr(other), -1))

    def __rtruediv__(self, other):
        return mul(as_expr(other), power(self, -1))

    def __neg__(self):
        return neg(self)

    def __pow__(self, n: int):
        if not isinstance(n, int):
            raise ExprError("only integer powers are supported")
        return power(self, n)

    def __str__(self) -> str:
        return to_string(self)


@dataclass(frozen=True, repr=False)
class Const(Expr):
    value: Fraction

    def __repr__(self):
        return f"Const({self.value})"


@dataclass(frozen=True, repr=False)
class Sym(Expr):
    symbol: Symbol

    def __repr__(self):
        return f"Sym({self.symbol!r})"


@dataclass(frozen=True, repr=False)
class Add(Expr):
    terms: tuple

    def __repr__(self):
        return f"Add{self.terms!r}"


@dataclass(frozen=True, repr=False)
class Mul(Expr):
    factors: tuple

    def __repr__(self):
        return f"Mul{self.factors!r}"


@dataclass(frozen=True, repr=False)
class Pow(Expr):
    base: Expr
    exp: int

    def __repr__(self):
        return f"Pow({self.base!r}, {self.exp})"


@dataclass(frozen=True, repr=False)
class Func(Expr):
    name: str
    arg: Expr

    def __repr__(self):
        return f"{self.name}({self.arg!r})"


ZERO = Const(Fraction(0))
ONE = Const(Fraction(1))


def as_expr(x) -> Expr:
    if isinstance(x, Expr):
        return x
    if isinstance(x, Symbol):
        return Sym(x)
    if isinstance(x, (int, Fraction)) and not isinstance(x, bool):
        return Const(Fraction(x))
    raise TypeError(f"cannot convert {type(x).__name__} to an expression")


def const(x: Number) -> Const:
    return Const(Fraction(x))


def add(*terms: Expr) -> Expr:
    flat: list[Expr] = []
    total = Fraction(0)
    for t in terms:
        parts = t.terms if isinstance(t, Add) else (t,)
        for p in parts:
            if isinstance(p, Const):
                total += p.value
            else:
                flat.append(p)
    if total != 0 or not flat:
        flat.append(Const(total))
    if len(flat) == 1:
        return flat[0]
    return Add(tuple(flat))


def mul(*factors: Expr) -> Expr:
    flat: list[Expr] = []
    coeff = Fraction(1)
    for f in factors:
        parts = f.factors if isinstance(f, Mul) else (f,)
        for p in parts:
            if isinstance(p, Const):
                coeff *= p.value
            else:
                flat.append(p)
    if coeff == 0:
        return ZERO
    if coeff != 1 or not flat:
        flat.insert(0, Const(coeff))
    if len(flat) == 1:
        return flat[0]
    return Mul(tuple(flat))


def neg(e: Expr) -> Expr:
    return mul(Const(Fraction(-1)), e)


def power(base: Expr, n: int) -> Expr:
    if n == 0:
        return ONE
    if n == 1:
        return base
    if isinstance(base, Const):
        if base.value == 0 and n < 0:
            raise PoleError("division by zero constant")
        return Const(base.value**n)
    if isinstance(base, Pow):
        return power(base.base, base.exp * n)
    return Pow(base, n)


def func(name: str, arg: Expr) -> Expr:
    if name not in FUNCTIONS:
        raise ExprError(f"unknown function {name!r}")
    if isinstance(arg, Const) and arg.value == 0:
        return ZERO if name == "sin" else ONE
    return Func(name, arg)


def sym(x: Symbol) -> Sym:
    return Sym(x)


# -- structural queries -----------------------------------------------------


def children(e: Expr) -> tuple:
    if isinstance(e, Add):
        return e.terms
    if isinstance(e, Mul):
        return e.factors
    if isinstance(e, Pow):
        return (e.base,)
    if isinstance(e, Func):
        return (e.arg,)
    return ()


def free_symbols(e: Expr) -> frozenset[Symbol]:
    if isinstance(e, Sym):
        return frozenset((e.symbol,))
    out: set[Symbol] = set()
    for c in children(e):
        out |= free_symbols(c)
    return frozenset(out)


def contains(e: Expr, pred: Callable[[Symbol], bool]) -> bool:
    return any(pred(s) for s in free_symbols(e))


def transcendental_args(e: Expr) -> list[Expr]:
    """Arguments of every sin/cos/exp node, outermost first."""
    out = []
    if isinstance(e, Func):
        out.append(e.arg)
    for c in children(e):
        out.extend(transcendental_args(c))
    return out


# -- calculus ---------------------------------------------------------------


def differentiate(e: Expr, x: Symbol) -> Expr:
    """Exact partial derivative; every other symbol is held fixed."""
    if isinstance(e, Const):
        return ZERO
    if isinstance(e, Sym):
        return ONE if e.symbol == x else ZERO
    if x not in free_symbols(e):
        return ZERO
    if isinstance(e, Add):
        return add(*(differentiate(t, x) for t in e.terms))
    if isinstance(e, Mul):
        terms = []
        fs = e.factors
        for j, f in enumerate(fs):
            d = differentiate(f, x)
            if d != ZERO:
                terms.append(mul(*fs[:j], d, *fs[j + 1 :]))
        return add(*terms)
    if isinstance(e, Pow):
        return mul(Const(Fraction(e.exp)), power(e.base, e.exp - 1), differentiate(e.base, x))
    if isinstance(e, Func):
        inner = differentiate(e.arg, x)
        if e.name == "sin":
            outer = Func("cos", e.arg)
        elif e.name == "cos":
            outer = neg(Func("sin", e.arg))
        else:
            outer = e
        return mul(outer, inner)
    raise TypeError(e)


def substitute(e: Expr, bindings: Mapping[Symbol, Expr]) -> Expr:
    """Simultaneous substitution.  Raises on cyclic bindings."""
    if not bindings:
        return e
    _check_acyclic(bindings)
    return _subst(e, {k: as_expr(v) for k, v in bindings.items()})


def _check_acyclic(bindings: Mapping[Symbol, Expr]) -> None:
    # a -> b together with b -> a is fine (simultaneous); only a binding whose
    # value mentions its own key is rejected.
    for k, v in bindings.items():
        if k in free_symbols(as_expr(v)):
            raise ExprError(f"cyclic binding for {k!r}")


def _subst(e: Expr, b: Mapping[Symbol, Expr]) -> Expr:
    if isinstance(e, Sym):
        return b.get(e.symbol, e)
    if isinstance(e, Const):
        return e
    if isinstance(e, Add):
        return add(*(_subst(t, b) for t in e.terms))
    if isinstance(e, Mul):
        return mul(*(_subst(f, b) for f in e.factors))
    if isinstance(e, Pow):
        return power(_subst(e.base, b), e.exp)
    if isinstance(e, Func):
        return func(e.name, _subst(e.arg, b))
    raise TypeError(e)


def total_time_derivative(e: Expr, levels_allowed: int) -> Expr:
    """Formal d/dt: JetVar(i, s) -> JetVar(i, s+1), TimeVar -> 1."""
    out = []
    for s in sorted(free_symbols(e), key=Symbol.sort_key):
        if s.kind == JET:
            if s.level + 1 > levels_allowed:
                raise LevelError(
                    f"total derivative needs level {s.level + 1} > {levels_allowed}"
                )
            out.append(mul(differentiate(e, s), Sym(jet(s.index, s.level + 1))))
        elif s.kind == TIME:
            out.append(differentiate(e, s))
        else:
            raise ExprError(f"total time derivative undefined for {s!r}")
    return add(*out)


# -- evaluation -------------------------------------------------------------

POLE_EPS = 1e-300

_FLOAT_FUNCS = {"sin": math.sin, "cos": math.cos, "exp": math.exp}


def evaluate(e: Expr, point: Mapping[Symbol, float], eps: float = POLE_EPS) -> float:
    if isinstance(e, Const):
        return float(e.value)
    if isinstance(e, Sym):
        try:
            return float(point[e.symbol])
        except KeyError:
            raise UnboundSymbolError(f"unbound symbol {e.symbol!r}") from None
    if isinstance(e, Add):
        return math.fsum(evaluate(t, point, eps) for t in e.terms)
    if isinstance(e, Mul):
        v = 1.0
        for f in e.factors:
            v *= evaluate(f, point, eps)
        return v
    if isinstance(e, Pow):
        b = evaluate(e.base, point, eps)
        if e.exp < 0 and abs(b) <= eps:
            raise PoleError(f"pole: base {b!r} raised to {e.exp}")
        return b**e.exp
    if isinstance(e, Func):
        return _FLOAT_FUNCS[e.name](evaluate(e.arg, point, eps))
    raise TypeError(e)


def evaluate_exact(e: Expr, point: Mapping[Symbol, Fraction]) -> Fraction:
    """Exact rational evaluation; transcendental nodes raise ExprError."""
    if isinstance(e, Const):
        return e.value
    if isinstance(e, Sym):
        try:
            return Fraction(point[e.symbol])
        except KeyError:
            raise UnboundSymbolError(f"unbound symbol {e.symbol!r}") from None
    if isinstance(e, Add):
        return sum((evaluate_exact(t, point) for t in e.terms), Fraction(0))
    if isinstance(e, Mul):
        v = Fraction(1)
        for f in e.factors:
            v *= evaluate_exact(f, point)
        return v
    if isinstance(e, Pow):
        b = evaluate_exact(e.base, point)
        if b == 0 and e.exp < 0:
            raise PoleError("exact pole")
        return b**e.exp
    raise ExprError("transcendental subterm has no exact value")


def compile_exprs(exprs: Iterable[Expr], order: list[Symbol]) -> Callable:
    """Compile expressions into ``f(x) -> list[float]`` with ``x[j] = order[j]``."""
    index = {s: j for j, s in enumerate(order)}
    body = ", ".join(_py(e, index) for e in exprs)
    src = f"lambda x: [{body}]"
    return eval(src, {"sin": math.sin, "cos": math.cos, "exp": math.exp})


def _py(e: Expr, index: Mapping[Symbol, int]) -> str:
    if isinstance(e, Const):
        return repr(float(e.value))
    if isinstance(e, Sym):
        if e.symbol not in index:
            raise UnboundSymbolError(f"unbound symbol {e.symbol!r}")
        return f"x[{index[e.symbol]}]"
    if isinstance(e, Add):
        return "(" + " + ".join(_py(t, index) for t in e.terms) + ")"
    if isinstance(e, Mul):
        return "(" + "*".join(_py(f, index) for f in e.factors) + ")"
    if isinstance(e, Pow):
        return f"({_py(e.base, index)})**({e.exp})"
    if isinstance(e, Func):
        return f"{e.name}({_py(e.arg, index)})"
    raise TypeError(e)


# -- printing ---------------------------------------------------------------

_PREC_ADD, _PREC_MUL, _PREC_POW, _PREC_ATOM = 1, 2, 3, 4


def _split_coeff(e: Expr) -> tuple[Fraction, list[Expr]]:
    if isinstance(e, Const):
        return e.value, []
    if isinstance(e, Mul) and isinstance(e.factors[0], Const):
        return e.factors[0].value, list(e.factors[1:])
    if isinstance(e, Mul):
        return Fraction(1), list(e.factors)
    return Fraction(1), [e]


def to_string(e: Expr, table: SymbolTable | None = None) -> str:
    """Render in the input DSL so that ``parse(to_string(e))`` rebuilds ``e``."""
    if table is None:
        table = _table_for(e)
    return _str(e, table)


def _table_for(e: Expr) -> SymbolTable:
    syms = free_symbols(e)
    n = max((s.index for s in syms if s.kind in (JET, MOMENTUM)), default=1)
    k = max(
        [s.level for s in syms if s.kind == JET] + [s.level + 1 for s in syms if s.kind == MOMENTUM] + [1]
    )
    return SymbolTable.default(n, k)


def _str(e: Expr, t: SymbolTable) -> str:
    if isinstance(e, Add):
        parts = []
        for j, term in enumerate(e.terms):
            c, rest = _split_coeff(term)
            if j > 0 and c < 0:
                parts.append(" - " + _str_product(-c, rest, t))
            elif j > 0:
                parts.append(" + " + _str_product(c, rest, t))
            else:
                parts.append(_str_product(c, rest, t))
        return "".join(parts)
    c, rest = _split_coeff(e)
    return _str_product(c, rest, t)


def _str_product(c: Fraction, factors: list[Expr], t: SymbolTable) -> str:
    num = [f for f in factors if not (isinstance(f, Pow) and f.exp < 0)]
    den = [power(f.base, -f.exp) for f in factors if isinstance(f, Pow) and f.exp < 0]
    sign = "-" if c < 0 else ""
    c = abs(c)
    pieces = []
    if c.numerator != 1 or not num:
        pieces.append(str(c.numerator))
    pieces += [_str_factor(f, t) for f in num]
    out = "*".join(pieces)
    if c.denominator != 1:
        out += f"/{c.denominator}"
    for d in den:
        out += "/" + _str_factor(d, t)
    return sign + out


def _str_factor(e: Expr, t: SymbolTable) -> str:
    if isinstance(e, Const):
        if e.value.denominator == 1 and e.value >= 0:
            return str(e.value.numerator)
        return "(" + _str(e, t) + ")"
    if isinstance(e, Sym):
        return t.name(e.symbol)
    if isinstance(e, Func):
        return f"{e.name}({_str(e.arg, t)})"
    if isinstance(e, Pow):
        base = e.base
        b = _str_factor(base, t) if isinstance(base, (Sym, Func)) else f"({_str(base, t)})"
        if e.exp < 0:
            return f"1/{b}^{-e.exp}" if e.exp != -1 else f"1/{b}"
        return f"{b}^{e.exp}"
    return "(" + _str(e, t) + ")"


def latex_name(sym: Symbol, t: SymbolTable) -> str:
    if sym.kind == JET:
        base = t.coordinate_name(sym.index)
        return _latex_ident(base) + "'" * sym.level
    if sym.kind == MOMENTUM:
        sub = []
        if t.k > 1:
            sub.append(f"({sym.level})")
        if t.n > 1:
            sub.append(_latex_ident(t.coordinate_name(sym.index)))
        return "p" + ("_{" + "".join(sub) + "}" if sub else "")
    if sym.kind == PARAM:
        return f"t_{{({sym.level}){sym.index}}}"
    if sym.kind == TIME:
        return "t"
    return _latex_ident(sym.name)



def _latex_ident(name: str) -> str:
    head = name.rstrip("0123456789")
    tail = name[len(head) :]
    if len(head) > 1 and head not in ("lam",):
        head = r"\mathrm{" + head + "}"
    if head == "lam":
        head = r"\lambda"
    return f"{head}_{{{tail}}}" if tail else head


def to_latex(e: Expr, table: SymbolTable | None = None) -> str:
    if table is None:
        table = _table_for(e)
    return _tex(e, table)


def _tex(e: Expr, t: SymbolTable) -> str:
    if isinstance(e, Add):
        out = ""
        for j, term in enumerate(e.terms):
            c, rest = _split_coeff(term)
            if j == 0:
                out += _tex_product(c, rest, t)
            elif c < 0:
                out += " - " + _tex_product(-c, rest, t)
            else:
                out += " + " + _tex_product(c, rest, t)
        return out
    c, rest = _split_coeff(e)
    return _tex_product(c, rest, t)


def _tex_product(c: Fraction, factors: list[Expr], t: SymbolTable) -> str:
    num = [f for f in factors if not (isinstance(f, Pow) and f.exp < 0)]
    den = [power(f.base, -f.exp) for f in factors if isinstance(f, Pow) and f.exp < 0]
    sign = "-" if c < 0 else ""
    c = abs(c)
    top = " ".join(_tex_factor(f, t) for f in num)
    bottom = " ".join(_tex_factor(f, t) for f in den)
    if c.denominator != 1 or den:
        cnum = str(c.numerator) if c.numerator != 1 or not top else ""
        numer = " ".join(x for x in (cnum, top) if x) or "1"
        cden = str(c.denominator) if c.denominator != 1 else ""
        denom = " ".join(x for x in (cden, bottom) if x)
        return sign + r"\frac{" + numer + "}{" + denom + "}"
    if c != 1 or not top:
        top = (str(c.numerator) + " " + top).strip()
    return sign + top


def _tex_factor(e: Expr, t: SymbolTable) -> str:
    if isinstance(e, Sym):
        return latex_name(e.symbol, t)
    if isinstance(e, Const):
        return _tex(e, t)
    if isinstance(e, Func):
        return "\\" + e.name + r"\left(" + _tex(e.arg, t) + r"\right)"
    if isinstance(e, Pow):
        base = e.base
        b = _tex_factor(base, t) if isinstance(base, (Sym, Func)) else r"\left(" + _tex(base, t) + r"\right)"
        return b + "^{" + str(e.exp) + "}"
    return r"\left(" + _tex(e, t) + r"\right)"
