"""Hamilton-Jacobi generators, Poisson brackets and the integrability closure.

Every generator has the form ``H' = p_c + H_c``: the Hamiltonian generator
drives time, and each constraint solved for a momentum ``p_c`` becomes a
generator whose evolution parameter is the conjugate coordinate.  The
closure loop takes total variations of all constraints until nothing new
appears.

A constraint whose brackets with the parametric generators do not vanish
does not produce a new constraint.  Its variation instead ties parameter
differentials to ``dt``.  Such relations mark the system as
``non_involutive``; with ``force=True`` the equations of motion still carry
them so the parameters they fix can be solved for during integration.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

from .expr import (
    JET,
    MOMENTUM,
    TIME_VAR,
    Const,
    Expr,
    ExprError,
    Sym,
    Symbol,
    SymbolTable,
    add,
    differentiate,
    free_symbols,
    linear_coefficient,
    mul,
    neg,
    momentum,
    normalize,
    simplify,
    substitute,
    to_string,
)
from .legendre import LegendreAnalysis
from .model import PhaseLayout, phase_layout

log = logging.getLogger(__name__)

CLOSED = "closed_first_class"
INCONSISTENT = "inconsistent"
NON_INVOLUTIVE = "non_involutive"
INCOMPLETE = "incomplete"


class ClosureError(ExprError):
    def __init__(self, message, report=None):
        super().__init__(message)
        self.report = report


class NotClosedError(ExprError):
    pass


@dataclass(frozen=True)
class Generator:
    label: str
    expr: Expr
    origin: str
    parameter: Symbol | None = None
    momentum: Symbol | None = None

    @property
    def parametric(self) -> bool:
        return self.parameter is not None

    @property
    def is_hamiltonian(self) -> bool:
        return self.origin == "hamiltonian"

    @property
    def H(self) -> Expr:
        """The ``H_c`` part, i.e. the generator with its momentum removed."""
        if self.momentum is None:
            return self.expr
        return simplify(add(self.expr, neg(Sym(self.momentum))))


@dataclass
class TraceEntry:
    iteration: int
    bracket: tuple[str, str]
    residual: str
    action_taken: str

    def to_dict(self) -> dict:
        return {
            "iteration": self.iteration,
            "bracket": list(self.bracket),
            "residual": self.residual,
            "action_taken": self.action_taken,
        }


@dataclass
class ClosureReport:
    status: str
    iterations: int
    additions: list[dict] = field(default_factory=list)
    trace: list[TraceEntry] = field(default_factory=list)
    bracket_table: dict[str, str] = field(default_factory=dict)


@dataclass
class GeneratorSet:
    generators: list[Generator]
    layout: PhaseLayout
    table: SymbolTable
    hamiltonian_canonical: Expr
    degenerate: tuple[int, ...] = ()
    report: ClosureReport | None = None

    @property
    def hamiltonian(self) -> Generator:
        return self.generators[0]

    @property
    def parametric(self) -> list[Generator]:
        return [g for g in self.generators[1:] if g.parametric]

    @property
    def nonparametric(self) -> list[Generator]:
        return [g for g in self.generators[1:] if not g.parametric]

    @property
    def constraints(self) -> list[Generator]:
        return self.generators[1:]

    @property
    def parameters(self) -> list[Symbol]:
        return [TIME_VAR] + [g.parameter for g in self.parametric]

    def solved(self) -> dict[Symbol, Expr]:
        """Solved momenta mapped to their values ``p_c = -H_c``."""
        return {g.momentum: simplify(neg(g.H)) for g in self.parametric}

    def label_of(self, param: Symbol) -> str:
        for g in [self.hamiltonian] + self.parametric:
            if g.parameter == param:
                return g.label
        raise KeyError(param)

    def render(self, e: Expr) -> str:
        return to_string(e, self.table)


def poisson_bracket(f: Expr, g: Expr, layout: PhaseLayout) -> Expr:
    terms = []
    for q, p in layout.pairs:
        terms.append(mul(differentiate(f, q), differentiate(g, p)))
        terms.append(neg(mul(differentiate(f, p), differentiate(g, q))))
    return simplify(add(*terms))


def _param_label(s: int, i: int) -> str:
    return f"H'({s}){i}"


def build_generators(analysis: LegendreAnalysis) -> GeneratorSet:
    spec = analysis.spec
    layout = phase_layout(spec)
    gens = [Generator("H'0", analysis.H0, "hamiltonian", parameter=TIME_VAR)]
    for mu, c in analysis.constraints.items():
        p = momentum(spec.k - 1, mu)
        coef = linear_coefficient(c, p)
        if coef != 1 or p in free_symbols(simplify(add(c, neg(Sym(p))))):
            raise ClosureError(f"primary constraint for coordinate {mu} is not unit in its momentum")
        gens.append(
            Generator(
                _param_label(spec.k - 1, mu),
                c,
                "primary",
                parameter=layout.conjugate(p),
                momentum=p,
            )
        )
    return GeneratorSet(
        gens,
        layout,
        spec.table,
        analysis.H0,
        tuple(analysis.partition.degenerate),
    )


class _Surface:
    """Solved momenta and solved coordinates used for weak equality."""

    def __init__(self, gens: GeneratorSet):
        self.layout = gens.layout
        self.degenerate = set(gens.degenerate)
        self.solved: dict[Symbol, Expr] = gens.solved()
        self.coord_sub: dict[Symbol, Expr] = {}
        self.generators = list(gens.generators)
        self.nonparam_count = 0
        for g in gens.nonparametric:
            self._register_coordinate(g.expr)
            self.nonparam_count += 1

    def reduce(self, e: Expr) -> Expr:
        return simplify(substitute(e, self.solved))

    def reduce_full(self, e: Expr) -> Expr:
        e = self.reduce(e)
        if self.coord_sub:
            e = simplify(substitute(e, self.coord_sub))
        return e

    def _register_coordinate(self, c: Expr) -> None:
        cands = [
            x
            for x in free_symbols(c)
            if x.kind == JET and x not in self.coord_sub and linear_coefficient(c, x) is not None
        ]
        if not cands:
            return
        x = max(cands, key=lambda s: (s.level, s.index))
        coef = linear_coefficient(c, x)
        value = simplify(mul(Const(-1 / coef), add(c, neg(mul(Const(coef), Sym(x))))))
        if x in free_symbols(value):
            return
        self.coord_sub = {
            k: simplify(substitute(v, {x: value})) for k, v in self.coord_sub.items()
        }
        self.coord_sub[x] = value

    def add(self, residual: Expr, origin: tuple[str, str]) -> Generator:
        """Turn a nonzero, non-constant residual into a constraint."""
        moms = [
            m
            for m in free_symbols(residual)
            if m.kind == MOMENTUM and m not in self.solved and linear_coefficient(residual, m) is not None
        ]
        if moms:
            # prefer momenta of degenerate coordinates, then the highest (level, index)
            m = max(moms, key=lambda s: (s.index in self.degenerate, s.level, s.index))
            coef = linear_coefficient(residual, m)
            expr = simplify(mul(Const(1 / coef), residual))
            H = simplify(add(expr, neg(Sym(m))))
            minus_h = simplify(neg(H))
            self.solved = {
                p: simplify(substitute(v, {m: minus_h})) for p, v in self.solved.items()
            }
            self.solved[m] = minus_h
            self.generators = [self._refresh(g) for g in self.generators]
            gen = Generator(
                _param_label(m.level, m.index),
                expr,
                "chain",
                parameter=self.layout.conjugate(m),
                momentum=m,
            )
        else:
            expr = _monic(residual)
            self.nonparam_count += 1
            gen = Generator(f"Phi{self.nonparam_count}", expr, "chain")
            self._register_coordinate(expr)
        self.generators.append(gen)
        log.debug("new constraint %s from %s", gen.label, origin)
        return gen

    def _refresh(self, g: Generator) -> Generator:
        if not g.parametric or g.is_hamiltonian:
            return g
        expr = simplify(add(Sym(g.momentum), neg(self.solved[g.momentum])))
        return Generator(g.label, expr, g.origin, g.parameter, g.momentum)


def _monic(e: Expr) -> Expr:
    nf = normalize(e)
    lead = nf.num[0][1]
    return simplify(mul(Const(1 / lead), e))


def _time_bracket(c: Expr, h0: Expr, layout: PhaseLayout) -> Expr:
    return simplify(add(poisson_bracket(c, h0, layout), differentiate(c, TIME_VAR)))


def integrability_closure(gens: GeneratorSet, max_iter: int | None = None):
    """Close the generator set under total variation.

    Returns the grown :class:`GeneratorSet` (with ``report`` filled in) and
    the :class:`ClosureReport`.  Raises :class:`ClosureError` carrying the
    partial report when ``max_iter`` is exhausted.
    """
    layout = gens.layout
    if max_iter is None:
        max_iter = layout.dimension + 1
    surf = _Surface(gens)
    report = ClosureReport(status="", iterations=0)
    render = lambda e: to_string(e, gens.table)  # noqa: E731

    for it in range(1, max_iter + 1):
        report.iterations = it
        h0 = surf.reduce(gens.hamiltonian_canonical)
        constraints = surf.generators[1:]
        parametric = [g for g in constraints if g.parametric]
        pending = []
        relations = 0
        for c in constraints:
            r0 = surf.reduce_full(_time_bracket(c.expr, h0, layout))
            mixed = False
            for g in parametric:
                if g.label == c.label:
                    continue
                r = surf.reduce_full(poisson_bracket(c.expr, g.expr, layout))
                if not normalize(r).is_zero:
                    mixed = True
                    report.trace.append(
                        TraceEntry(it, (c.label, g.label), render(r), "parameter_relation")
                    )
            if mixed:
                relations += 1
                report.trace.append(TraceEntry(it, (c.label, "H'0"), render(r0), "parameter_relation"))
            elif normalize(r0).is_zero:
                report.trace.append(TraceEntry(it, (c.label, "H'0"), "0", "vanishes"))
            else:
                pending.append((c.label, r0))
        if not constraints:
            report.trace.append(TraceEntry(it, ("H'0", "H'0"), "0", "vanishes"))

        added = 0
        for label, r0 in pending:
            r = surf.reduce_full(r0)
            nf = normalize(r)
            if nf.is_zero:
                report.trace.append(TraceEntry(it, (label, "H'0"), render(r0), "dependent"))
            elif nf.is_constant:
                report.trace.append(TraceEntry(it, (label, "H'0"), render(r), "inconsistent"))
                report.status = INCONSISTENT
                break
            else:
                g = surf.add(r, (label, "H'0"))
                action = "new_generator" if g.parametric else "new_constraint"
                report.trace.append(TraceEntry(it, (label, "H'0"), render(r), action))
                report.additions.append(
                    {
                        "label": g.label,
                        "expr": render(g.expr),
                        "from": [label, "H'0"],
                        "parameter": render(Sym(g.parameter)) if g.parametric else None,
                        "iteration": it,
                    }
                )
                added += 1
        if report.status == INCONSISTENT:
            break
        if added == 0:
            report.status = NON_INVOLUTIVE if relations else CLOSED
            break
    else:
        report.status = INCOMPLETE
        _finish(gens, surf, report)
        raise ClosureError(f"closure did not terminate within {max_iter} iterations", report)

    out = _finish(gens, surf, report)
    return out, report


def _finish(gens: GeneratorSet, surf: _Surface, report: ClosureReport) -> GeneratorSet:
    generators = list(surf.generators)
    h0 = surf.reduce(gens.hamiltonian_canonical)
    generators[0] = Generator("H'0", h0, "hamiltonian", parameter=TIME_VAR)
    out = GeneratorSet(
        generators, gens.layout, gens.table, gens.hamiltonian_canonical, gens.degenerate, report
    )
    table = {}
    params = [g for g in generators if g.parametric]
    for a in generators:
        for b in params:
            if a.label == b.label:
                continue
            if b.is_hamiltonian:
                r = _time_bracket(a.expr, h0, gens.layout)
            elif a.is_hamiltonian:
                r = neg(_time_bracket(b.expr, h0, gens.layout))
            else:
                r = poisson_bracket(a.expr, b.expr, gens.layout)
            table[f"{{{a.label}, {b.label}}}"] = out.render(surf.reduce_full(r))
    report.bracket_table = table
    return out


def surface_reducer(gens: GeneratorSet):
    """``reduce_full`` for a finished generator set."""
    return _Surface(gens).reduce_full


@dataclass
class TotalDifferentialSystem:
    layout: PhaseLayout
    table: SymbolTable
    parameters: list[Symbol]
    labels: list[str]
    coefficients: dict[Symbol, list[Expr]]
    relations: list[list[Expr]] = field(default_factory=list)
    determined: list[Symbol] = field(default_factory=list)
    status: str = CLOSED

    def render(self, e: Expr) -> str:
        return to_string(e, self.table)


def eom_forms(gens: GeneratorSet, force: bool = False) -> TotalDifferentialSystem:
    """Coefficient tables of ``dq`` and ``dp`` on every ``dt_(s)alpha``.

    Coordinates get ``dH'/dp``, momenta get ``-dH'/dq``; all momenta are
    included.
    """
    status = gens.report.status if gens.report else CLOSED
    if status != CLOSED and not force:
        raise NotClosedError(f"system is {status}; pass force=True to emit forms anyway")
    layout = gens.layout
    active = [gens.hamiltonian] + gens.parametric
    coeffs: dict[Symbol, list[Expr]] = {}
    for q, p in layout.pairs:
        coeffs[q] = [simplify(differentiate(g.expr, p)) for g in active]
        coeffs[p] = [simplify(neg(differentiate(g.expr, q))) for g in active]
    params = [g.parameter for g in active]
    system = TotalDifferentialSystem(
        layout, gens.table, params, [g.label for g in active], coeffs, status=status
    )
    if status == NON_INVOLUTIVE:
        reduce_full = surface_reducer(gens)
        h0 = gens.hamiltonian.expr
        determined = set()
        for c in gens.constraints:
            row = [reduce_full(_time_bracket(c.expr, h0, layout))]
            nonzero = False
            for j, g in enumerate(active[1:], start=1):
                r = reduce_full(poisson_bracket(c.expr, g.expr, layout)) if g.label != c.label else Const(0)
                if not normalize(r).is_zero:
                    nonzero = True
                    determined.add(params[j])
                row.append(r)
            if nonzero:
                system.relations.append(row)
        system.determined = [p for p in params if p in determined]
    return system


def total_variation(gens: GeneratorSet, g: Generator) -> list[Expr]:
    """Coefficients of ``dH'_g`` on each parameter differential, on the surface."""
    reduce_full = surface_reducer(gens)
    layout = gens.layout
    h0 = gens.hamiltonian.expr
    out = []
    for other in [gens.hamiltonian] + gens.parametric:
        if other.is_hamiltonian:
            r = _time_bracket(g.expr, h0, layout) if not g.is_hamiltonian else Const(0)
        elif g.is_hamiltonian:
            r = neg(_time_bracket(other.expr, h0, layout))
        else:
            r = poisson_bracket(g.expr, other.expr, layout)
        out.append(reduce_full(r))
    return out


def closure_independent(gens: GeneratorSet, samples: int = 3, seed: int = 0) -> bool:
    """Full row rank of the constraint Jacobian at random phase points."""
    import numpy as np

    from .expr import compile_exprs

    cons = gens.constraints
    if not cons:
        return True
    syms = gens.layout.symbols + [TIME_VAR]
    jac = [differentiate(c.expr, x) for c in cons for x in syms]
    f = compile_exprs(jac, syms)
    rng = np.random.default_rng(seed)
    for _ in range(samples):
        x = rng.uniform(-1, 1, len(syms))
        J = np.array(f(x)).reshape(len(cons), len(syms))
        if np.linalg.matrix_rank(J) < len(cons):
            return False
    return True
