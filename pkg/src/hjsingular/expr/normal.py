"""Canonical rational normal form.

A :class:`NormalForm` is a pair of sparse polynomials with exact rational
coefficients over *atoms*: plain symbols and opaque ``sin``/``cos``/``exp``
subterms (whose arguments are normalized first).  Numerator and denominator
are coprime and the denominator's leading coefficient is 1, so equal rational
functions get identical forms.  ``cos(u)^2`` is always rewritten to
``1 - sin(u)^2`` before comparison.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from functools import lru_cache

from .core import (
    Add,
    Const,
    Expr,
    ExprError,
    Func,
    Mul,
    Pow,
    Sym,
    add,
    func,
    mul,
    power,
)
from .symbols import Symbol

# monomial: tuple of (atom, exponent) sorted by atom key; poly: dict monomial -> Fraction


@dataclass(frozen=True)
class FuncAtom:
    name: str
    arg: "NormalForm"

    def sort_key(self) -> tuple:
        from .core import to_string

        return (5, 0, 0, f"{self.name}({to_string(self.arg.to_expr())})")


def _akey(atom) -> tuple:
    return atom.sort_key()


def _mkey(mono: tuple) -> tuple:
    # graded, then lexicographic on atom keys
    return (-sum(e for _, e in mono), tuple((_akey(a), -e) for a, e in mono))


def _mono_mul(m1: tuple, m2: tuple) -> tuple:
    if not m1:
        return m2
    if not m2:
        return m1
    d = dict(m1)
    for a, e in m2:
        d[a] = d.get(a, 0) + e
    return tuple(sorted(((a, e) for a, e in d.items() if e), key=lambda ae: _akey(ae[0])))


def _padd(p: dict, q: dict) -> dict:
    out = dict(p)
    for m, c in q.items():
        v = out.get(m, 0) + c
        if v:
            out[m] = v
        else:
            out.pop(m, None)
    return out


def _pmul(p: dict, q: dict) -> dict:
    out: dict = {}
    for m1, c1 in p.items():
        for m2, c2 in q.items():
            m = _mono_mul(m1, m2)
            v = out.get(m, 0) + c1 * c2
            if v:
                out[m] = v
            else:
                out.pop(m, None)
    return out


def _pscale(p: dict, c: Fraction) -> dict:
    if c == 0:
        return {}
    return {m: v * c for m, v in p.items()}


def _ppow(p: dict, n: int) -> dict:
    out = {(): Fraction(1)}
    base = p
    while n:
        if n & 1:
            out = _pmul(out, base)
        n >>= 1
        if n:
            base = _pmul(base, base)
    return out


def _pconst(c) -> dict:
    c = Fraction(c)
    return {(): c} if c else {}


def _is_const(p: dict) -> bool:
    return not p or (len(p) == 1 and () in p)


def _freeze(p: dict) -> tuple:
    return tuple(sorted(p.items(), key=lambda mc: _mkey(mc[0])))


_ONE_POLY = (((), Fraction(1)),)


@dataclass(frozen=True)
class NormalForm:
    num: tuple
    den: tuple

    @property
    def is_zero(self) -> bool:
        return not self.num

    @property
    def is_polynomial(self) -> bool:
        return self.den == _ONE_POLY

    @property
    def is_constant(self) -> bool:
        return all(not m for m, _ in self.num) and self.is_polynomial

    def constant_value(self) -> Fraction:
        if not self.is_constant:
            raise ExprError("not a constant")
        return self.num[0][1] if self.num else Fraction(0)

    def atoms(self) -> set:
        return {a for p in (self.num, self.den) for m, _ in p for a, _ in m}

    def symbols(self) -> set[Symbol]:
        out: set[Symbol] = set()
        for a in self.atoms():
            if isinstance(a, Symbol):
                out.add(a)
            else:
                out |= a.arg.symbols()
        return out

    def degree_in(self, atoms) -> int:
        """Total numerator degree in the given atoms."""
        atoms = set(atoms)
        return max((sum(e for a, e in m if a in atoms) for m, _ in self.num), default=0)

    def to_expr(self) -> Expr:
        num = _poly_expr(self.num)
        if self.is_polynomial:
            return num
        return mul(num, power(_poly_expr(self.den), -1))


def _atom_expr(a) -> Expr:
    if isinstance(a, Symbol):
        return Sym(a)
    return func(a.name, a.arg.to_expr())


def _poly_expr(p: tuple) -> Expr:
    terms = []
    for mono, c in p:
        factors = [Const(c)] + [power(_atom_expr(a), e) for a, e in mono]
        terms.append(mul(*factors))
    return add(*terms) if terms else Const(Fraction(0))


# -- conversion ---------------------------------------------------------------


def _rat(e: Expr) -> tuple[dict, dict]:
    if isinstance(e, Const):
        return _pconst(e.value), _pconst(1)
    if isinstance(e, Sym):
        return {((e.symbol, 1),): Fraction(1)}, _pconst(1)
    if isinstance(e, Add):
        n, d = {}, _pconst(1)
        for t in e.terms:
            tn, td = _rat(t)
            if td == d:
                n = _padd(n, tn)
            else:
                n, d = _padd(_pmul(n, td), _pmul(tn, d)), _pmul(d, td)
        return _cancel_cheap(n, d)
    if isinstance(e, Mul):
        n, d = _pconst(1), _pconst(1)
        for f in e.factors:
            fn, fd = _rat(f)
            n, d = _pmul(n, fn), _pmul(d, fd)
        return _cancel_cheap(n, d)
    if isinstance(e, Pow):
        bn, bd = _rat(e.base)
        if e.exp < 0:
            if not bn:
                raise ExprError("division by an identically-zero denominator")
            bn, bd = bd, bn
        return _ppow(bn, abs(e.exp)), _ppow(bd, abs(e.exp))
    if isinstance(e, Func):
        arg = normalize(e.arg)
        if arg.is_zero:
            return _pconst(0 if e.name == "sin" else 1), _pconst(1)
        return {((FuncAtom(e.name, arg), 1),): Fraction(1)}, _pconst(1)
    raise TypeError(e)


def _cancel_cheap(n: dict, d: dict) -> tuple[dict, dict]:
    if not n:
        return {}, _pconst(1)
    if _is_const(d):
        return _pscale(n, 1 / d[()]), _pconst(1)
    if n == d:
        return _pconst(1), _pconst(1)
    return _monomial_cancel(n, d)


def _monomial_cancel(n: dict, d: dict) -> tuple[dict, dict]:
    common = None
    for m in list(n) + list(d):
        md = dict(m)
        if common is None:
            common = md
        else:
            common = {a: min(e, md[a]) for a, e in common.items() if a in md}
        if not common:
            break
    if common:
        inv = tuple((a, -e) for a, e in sorted(common.items(), key=lambda ae: _akey(ae[0])))
        n = {_mono_mul(m, inv): c for m, c in n.items()}
        d = {_mono_mul(m, inv): c for m, c in d.items()}
    return n, d


def _trig_rewrite(p: dict) -> dict:
    """Replace cos(u)^e (e >= 2) by cos(u)^(e mod 2) * (1 - sin(u)^2)^(e // 2)."""
    while True:
        target = None
        for m in p:
            for a, e in m:
                if isinstance(a, FuncAtom) and a.name == "cos" and e >= 2:
                    target = (m, a, e)
                    break
            if target:
                break
        if target is None:
            return p
        m, a, e = target
        c = p[m]
        rest = tuple((b, f) for b, f in m if b != a)
        s = FuncAtom("sin", a.arg)
        one_minus = {(): Fraction(1), ((s, 2),): Fraction(-1)}
        repl = _pmul({rest: c}, _ppow(one_minus, e // 2))
        if e % 2:
            repl = _pmul(repl, {((a, 1),): Fraction(1)})
        p = dict(p)
        del p[m]
        p = _padd(p, repl)


def _full_cancel(n: dict, d: dict) -> tuple[dict, dict]:
    n, d = _cancel_cheap(n, d)
    if _is_const(d) or _is_const(n):
        return n, d
    # general multivariate gcd
    import sympy

    atoms = sorted({a for p in (n, d) for m in p for a, _ in m}, key=_akey)
    gens = sympy.symbols(f"x0:{len(atoms)}")
    pos = {a: j for j, a in enumerate(atoms)}

    def to_sp(p):
        terms = {}
        for m, c in p.items():
            exps = [0] * len(atoms)
            for a, e in m:
                exps[pos[a]] = e
            terms[tuple(exps)] = sympy.Rational(c.numerator, c.denominator)
        return sympy.Poly.from_dict(terms, *gens, domain="QQ")

    def from_sp(poly):
        out = {}
        for exps, c in poly.terms():
            mono = tuple((atoms[j], e) for j, e in enumerate(exps) if e)
            out[mono] = Fraction(int(c.numerator), int(c.denominator))
        return out

    pn, pd = to_sp(n), to_sp(d)
    g = pn.gcd(pd)
    if g.total_degree() > 0:
        pn = pn.exquo(g)
        pd = pd.exquo(g)
    return from_sp(pn), from_sp(pd)


def _finish(n: dict, d: dict) -> NormalForm:
    if not n:
        return NormalForm((), _ONE_POLY)
    if _is_const(d):
        n, d = _pscale(n, 1 / d[()]), _pconst(1)
    fd = _freeze(d)
    lead = fd[0][1]
    if lead != 1:
        n, d = _pscale(n, 1 / lead), _pscale(d, 1 / lead)
        fd = _freeze(d)
    return NormalForm(_freeze(n), fd)


@lru_cache(maxsize=65536)
def normalize(e: Expr) -> NormalForm:
    n, d = _rat(e)
    if not d:
        raise ExprError("division by an identically-zero denominator")
    n, d = _trig_rewrite(n), _trig_rewrite(d)
    if not d:
        raise ExprError("division by an identically-zero denominator")
    n, d = _full_cancel(n, d)
    return _finish(n, d)


def simplify(e: Expr) -> Expr:
    """Round-trip through the normal form."""
    return normalize(e).to_expr()


def is_zero(e: Expr) -> bool:
    return normalize(e).is_zero


def equal(a: Expr, b: Expr) -> bool:
    return normalize(add(a, mul(Const(Fraction(-1)), b))).is_zero


def linear_coefficient(e: Expr, x: Symbol) -> Fraction | None:
    """Constant coefficient of ``x`` when ``e`` is affine in ``x`` with
    constant slope, otherwise None."""
    from .core import differentiate

    d = normalize(differentiate(e, x))
    if d.is_constant and not d.is_zero:
        return d.constant_value()
    return None
