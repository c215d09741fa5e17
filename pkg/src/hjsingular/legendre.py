"""Ostrogradsky-Legendre transform of a (possibly singular) higher-order Lagrangian.

Only the top momenta ``p_(k-1)i = dL/dq_i^(k)`` are defined from the
Lagrangian.  Lower momenta stay independent phase coordinates; their
Ostrogradsky relation comes back out of the Hamilton equations.
"""

from __future__ import annotations

import random
from dataclasses import dataclass, field
from fractions import Fraction

from .expr import (
    JET,
    ZERO,
    Expr,
    ExprError,
    Sym,
    Symbol,
    add,
    differentiate,
    evaluate,
    evaluate_exact,
    free_symbols,
    jet,
    momentum,
    mul,
    neg,
    normalize,
    power,
    simplify,
    substitute,
)
from .model import SystemSpec


class RankError(ExprError):
    """Rank detection disagrees with the symbolic structure."""


class ConsistencyError(ExprError):
    pass


@dataclass(frozen=True)
class HessianMatrix:
    entries: tuple[tuple[Expr, ...], ...]

    @property
    def n(self) -> int:
        return len(self.entries)

    def __getitem__(self, ij):
        i, j = ij
        return self.entries[i][j]

    def is_constant(self) -> bool:
        return all(not free_symbols(e) for row in self.entries for e in row)


@dataclass(frozen=True)
class RankPartition:
    rank: int
    regular: tuple[int, ...]
    degenerate: tuple[int, ...]
    permutation: tuple[int, ...]
    sample_ranks: tuple[int, ...] = ()
    exact: bool = False

    @property
    def r(self) -> int:
        return len(self.degenerate)


@dataclass
class LegendreAnalysis:
    spec: SystemSpec
    hessian: HessianMatrix
    partition: RankPartition
    momenta: list[Expr]
    W: dict[int, Expr]
    constraints: dict[int, Expr]
    H0: Expr
    notes: list[str] = field(default_factory=list)


def top_momenta(spec: SystemSpec) -> list[Expr]:
    return [simplify(differentiate(spec.lagrangian, q)) for q in spec.top_jets()]


def hessian(spec: SystemSpec) -> HessianMatrix:
    tops = spec.top_jets()
    first = [differentiate(spec.lagrangian, q) for q in tops]
    rows = []
    for i in range(spec.n):
        rows.append(tuple(simplify(differentiate(first[i], tops[j])) for j in range(spec.n)))
    return HessianMatrix(tuple(rows))


def _column_order(H: HessianMatrix) -> list[int]:
    # largest symbolic degree last; ties keep coordinate order
    def degree(j):
        degs = []
        for i in range(H.n):
            nf = normalize(H[i, j])
            if nf.is_zero:
                continue
            degs.append(max((sum(e for _, e in m) for m, _ in nf.num), default=0))
        return max(degs, default=-1)

    return sorted(range(H.n), key=lambda j: (degree(j), j))


def _eliminate(M: list[list], order: list[int], zero) -> list[int]:
    """Row-reduce in the given column order; return pivot columns."""
    M = [list(row) for row in M]
    rows = list(range(len(M)))
    pivots = []
    for j in order:
        pr = next((r for r in rows if not zero(M[r][j])), None)
        if pr is None:
            continue
        pivots.append(j)
        rows.remove(pr)
        for r in rows:
            if zero(M[r][j]):
                continue
            f = M[r][j] / M[pr][j]
            M[r] = [a - f * b for a, b in zip(M[r], M[pr])]
    return pivots


def _sample_value(rng: random.Random) -> Fraction:
    # nonzero rationals with numerator and denominator in [-99, 99]
    while True:
        num = rng.randint(-99, 99)
        den = rng.randint(1, 99)
        if num:
            return Fraction(num, den)


def generic_rank(H: HessianMatrix, samples: int = 5, seed: int = 0) -> RankPartition:
    if samples < 1:
        raise ValueError("samples must be >= 1")
    n = H.n
    order = _column_order(H)
    if H.is_constant():
        M = [[normalize(H[i, j]).constant_value() for j in range(n)] for i in range(n)]
        pivots = _eliminate(M, order, lambda x: x == 0)
        return _partition(n, pivots, (len(pivots),), exact=True)

    syms = sorted(
        {s for row in H.entries for e in row for s in free_symbols(e)}, key=Symbol.sort_key
    )
    rng = random.Random(seed)
    results = []
    for _ in range(samples):
        point = {s: _sample_value(rng) for s in syms}
        try:
            M = [[evaluate_exact(H[i, j], point) for j in range(n)] for i in range(n)]
            pivots = _eliminate(M, order, lambda x: x == 0)
        except ExprError:
            fpoint = {s: float(v) for s, v in point.items()}
            M = [[evaluate(H[i, j], fpoint) for j in range(n)] for i in range(n)]
            scale = max((abs(x) for row in M for x in row), default=1.0) or 1.0
            pivots = _eliminate(M, order, lambda x: abs(x) <= 1e-9 * scale)
        results.append(pivots)
    ranks = tuple(len(p) for p in results)
    if len(set(ranks)) > 1:
        raise RankError(
            f"Hessian rank differs between sample points {ranks}; "
            "the degeneracy is not generic, stratify the system by hand"
        )
    return _partition(n, results[0], ranks, exact=False)


def _partition(n, pivots, ranks, exact) -> RankPartition:
    regular = tuple(sorted(j + 1 for j in pivots))
    degenerate = tuple(i for i in range(1, n + 1) if i not in regular)
    return RankPartition(
        rank=len(regular),
        regular=regular,
        degenerate=degenerate,
        permutation=degenerate + regular,
        sample_ranks=tuple(ranks),
        exact=exact,
    )


def numeric_rank(H: HessianMatrix, point: dict[Symbol, float], tol: float = 1e-9) -> int:
    M = [[evaluate(H[i, j], point) for j in range(H.n)] for i in range(H.n)]
    scale = max((abs(x) for row in M for x in row), default=1.0) or 1.0
    return len(_eliminate(M, list(range(H.n)), lambda x: abs(x) <= tol * scale))


def _has_top(e: Expr, k: int) -> bool:
    return any(s.kind == JET and s.level == k for s in free_symbols(e))


def solve_top(spec: SystemSpec, partition: RankPartition) -> dict[int, Expr]:
    """Solve the regular momentum definitions for the regular top jets."""
    k = spec.k
    tops = spec.top_jets()
    moms = top_momenta(spec)
    reg = list(partition.regular)
    zero_tops = {q: ZERO for q in tops}
    # p_a = sum_b A_ab x_b + sum_mu A_a,mu x_mu + c_a, with x the top jets
    rows = []
    for a in reg:
        coeffs = [simplify(differentiate(moms[a - 1], tops[b - 1])) for b in reg]
        rest = add(
            *(
                mul(differentiate(moms[a - 1], tops[mu - 1]), Sym(tops[mu - 1]))
                for mu in partition.degenerate
            ),
            substitute(moms[a - 1], zero_tops),
        )
        rhs = simplify(add(Sym(momentum(k - 1, a)), neg(rest)))
        rows.append(coeffs + [rhs])
    m = len(reg)
    for col in range(m):
        pr = next((r for r in range(col, m) if not normalize(rows[r][col]).is_zero), None)
        if pr is None:
            raise RankError(
                "regular Hessian block is singular symbolically (rank misdetection); "
                "increase the number of rank samples"
            )
        rows[col], rows[pr] = rows[pr], rows[col]
        piv = rows[col][col]
        rows[col] = [simplify(mul(x, power(piv, -1))) for x in rows[col]]
        for r in range(m):
            if r == col or normalize(rows[r][col]).is_zero:
                continue
            f = rows[r][col]
            rows[r] = [simplify(add(x, neg(mul(f, y)))) for x, y in zip(rows[r], rows[col])]
    W = {a: rows[j][m] for j, a in enumerate(reg)}
    bind = {tops[a - 1]: w for a, w in W.items()}
    for a in reg:
        resid = add(substitute(moms[a - 1], bind), neg(Sym(momentum(k - 1, a))))
        if not normalize(resid).is_zero:
            raise ConsistencyError(f"acceleration solution fails for coordinate {a}")
    return W


def primary_constraints(spec: SystemSpec, W: dict[int, Expr], partition: RankPartition) -> dict[int, Expr]:
    """``H'_(k-1)mu = p_(k-1)mu - dL/dq_mu^(k)`` at the solved accelerations."""
    k = spec.k
    tops = spec.top_jets()
    moms = top_momenta(spec)
    bind = {tops[a - 1]: w for a, w in W.items()}
    out = {}
    for mu in partition.degenerate:
        c = simplify(add(Sym(momentum(k - 1, mu)), neg(substitute(moms[mu - 1], bind))))
        if _has_top(c, k):
            raise RankError(
                f"primary constraint for coordinate {mu} still depends on a top "
                "derivative (rank misdetection); increase the number of rank samples"
            )
        out[mu] = c
    return out


def canonical_hamiltonian(spec: SystemSpec, W: dict[int, Expr], constraints: dict[int, Expr]) -> Expr:
    k, n = spec.k, spec.n
    tops = spec.top_jets()
    bind = {tops[a - 1]: w for a, w in W.items()}
    terms = []
    for u in range(k - 1):
        for i in range(1, n + 1):
            terms.append(mul(Sym(momentum(u, i)), Sym(jet(i, u + 1))))
    for a, w in W.items():
        terms.append(mul(Sym(momentum(k - 1, a)), w))
    for mu, c in constraints.items():
        # -H_mu = p_mu - H'_mu
        minus_h = add(Sym(momentum(k - 1, mu)), neg(c))
        terms.append(mul(minus_h, Sym(tops[mu - 1])))
    terms.append(neg(substitute(spec.lagrangian, bind)))
    H0 = simplify(add(*terms))
    if _has_top(H0, k):
        raise ConsistencyError("degenerate top derivatives did not cancel in H0")
    return H0


def analyze_legendre(spec: SystemSpec, samples: int = 5, seed: int = 0) -> LegendreAnalysis:
    H = hessian(spec)
    part = generic_rank(H, samples, seed)
    W = solve_top(spec, part)
    cons = primary_constraints(spec, W, part)
    H0 = canonical_hamiltonian(spec, W, cons)
    notes = []
    if spec.k >= 2:
        notes.append(
            "lower momenta are independent phase variables; the relation "
            "p_(m-1) = dL/dq^(m) - d/dt p_(m) is recovered from the equations of motion"
        )
    return LegendreAnalysis(spec, H, part, top_momenta(spec), W, cons, H0, notes)
