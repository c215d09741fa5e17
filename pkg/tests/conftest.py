from pathlib import Path

import sympy

from hjsingular.expr import Add, Const, Func, Mul, Pow, Sym
from hjsingular.hj import build_generators, integrability_closure
from hjsingular.legendre import analyze_legendre
from hjsingular.model import make_spec

CORPUS = Path(__file__).resolve().parents[1] / "src" / "hjsingular" / "corpus"
DATA = Path(__file__).resolve().parent / "data"


def to_sympy(e):
    """Independent conversion of an expression tree to sympy."""
    if isinstance(e, Const):
        return sympy.Rational(e.value.numerator, e.value.denominator)
    if isinstance(e, Sym):
        s = e.symbol
        return sympy.Symbol(f"{s.kind}_{s.level}_{s.index}_{s.name or ''}")
    if isinstance(e, Add):
        return sympy.Add(*(to_sympy(t) for t in e.terms))
    if isinstance(e, Mul):
        return sympy.Mul(*(to_sympy(f) for f in e.factors))
    if isinstance(e, Pow):
        return to_sympy(e.base) ** e.exp
    if isinstance(e, Func):
        return getattr(sympy, e.name)(to_sympy(e.arg))
    raise TypeError(e)


def sympy_symbol(s):
    return sympy.Symbol(f"{s.kind}_{s.level}_{s.index}_{s.name or ''}")


def closed(lagrangian, names, k):
    spec = make_spec(lagrangian, names, k)
    gens, report = integrability_closure(build_generators(analyze_legendre(spec)))
    return spec, gens, report


ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
