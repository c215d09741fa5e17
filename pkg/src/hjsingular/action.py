"""Action differential, reduced phase space and the time-sliced propagator."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .expr import (
    JET,
    TIME_VAR,
    Expr,
    ExprError,
    Sym,
    Symbol,
    SymbolTable,
    add,
    differentiate,
    free_symbols,
    mul,
    neg,
    normalize,
    param,
    simplify,
    substitute,
    to_latex,
    to_string,
)
from .hj import CLOSED, GeneratorSet, NotClosedError


class UnsupportedSystemError(ExprError):
    pass


class CausticError(ArithmeticError):
    pass


@dataclass(frozen=True)
class ReducedPhaseSpace:
    coordinates: tuple[Symbol, ...]
    momenta: tuple[Symbol, ...]
    parameters: tuple[Symbol, ...]
    solved_momenta: tuple[Symbol, ...]

    @property
    def dimension(self) -> int:
        return len(self.coordinates) + len(self.momenta)


@dataclass
class ActionForm:
    parameters: list[Symbol]
    labels: list[str]
    coefficients: list[Expr]
    table: SymbolTable

    def render(self) -> list[str]:
        return [to_string(c, self.table) for c in self.coefficients]


@dataclass
class ExponentSummary:
    terms: list[tuple[str, Expr]]
    measure: list[str]
    text: str
    latex: str
    parameters: list[str] = field(default_factory=list)


@dataclass(frozen=True)
class PropagatorResult:
    modulus: float
    phase: float
    slices: int
    convergence: float


def reduced_space(gens: GeneratorSet) -> ReducedPhaseSpace:
    params = {g.parameter for g in gens.parametric}
    solved = {g.momentum for g in gens.parametric}
    coords, moms = [], []
    for q, p in gens.layout.pairs:
        if q in params or p in solved:
            continue
        coords.append(q)
        moms.append(p)
    return ReducedPhaseSpace(
        tuple(coords),
        tuple(moms),
        tuple(g.parameter for g in gens.parametric),
        tuple(g.momentum for g in gens.parametric),
    )


def action_differential(
    gens: GeneratorSet, reduced: ReducedPhaseSpace | None = None, force: bool = False
) -> ActionForm:
    """Coefficient of each ``dt_beta`` in dZ: ``-H_beta + sum p_a dH'_beta/dp_a``."""
    status = gens.report.status if gens.report else CLOSED
    if status != CLOSED and not force:
        raise NotClosedError(f"action differential needs a closed system, got {status}")
    if reduced is None:
        reduced = reduced_space(gens)
    active = [gens.hamiltonian] + gens.parametric
    coeffs = []
    for g in active:
        terms = [neg(g.H)]
        for p in reduced.momenta:
            terms.append(mul(Sym(p), differentiate(g.expr, p)))
        coeffs.append(simplify(add(*terms)))
    return ActionForm([g.parameter for g in active], [g.label for g in active], coeffs, gens.table)


def _as_parameters(e: Expr, params: list[Symbol]) -> Expr:
    bind = {p: Sym(param(p.level, p.index)) for p in params if p.kind == JET}
    return simplify(substitute(e, bind)) if bind else e


def path_integral_exponent(form: ActionForm, reduced: ReducedPhaseSpace) -> ExponentSummary:
    """Exponent ``i * sum_beta int coeff_beta dt_beta`` with the reduced measure.

    Coordinates promoted to parameters are written as ``t{s}{mu}``.
    """
    table = form.table
    terms = []
    text_parts, tex_parts = [], []
    pnames = []
    for p, c in zip(form.parameters, form.coefficients):
        c = _as_parameters(c, form.parameters)
        pe = Sym(p) if p == TIME_VAR else Sym(param(p.level, p.index))
        pname = to_string(pe, table)
        pnames.append(pname)
        terms.append((pname, c))
        if normalize(c).is_zero:
            continue
        text_parts.append(f"int ({to_string(c, table)}) d{pname}")
        tex_parts.append(r"\int \left(" + to_latex(c, table) + r"\right)\, d" + to_latex(pe, table))
    measure = []
    for q, p in zip(reduced.coordinates, reduced.momenta):
        measure += [f"d{to_string(Sym(q), table)}", f"d{to_string(Sym(p), table)}"]
    body = " + ".join(text_parts) if text_parts else "0"
    tbody = " + ".join(tex_parts) if tex_parts else "0"
    dm = " ".join(measure) if measure else "1"
    return ExponentSummary(
        terms,
        measure,
        text=f"[{dm}] exp(i*({body}))",
        latex=r"\int " + (" ".join(measure) if measure else "") + r" \exp i\left\{" + tbody + r"\right\}",
        parameters=pnames,
    )


def classical_action(traj, form: ActionForm) -> float:
    """Trapezoidal sum of ``sum_beta coeff_beta * dt_beta`` along a trajectory."""
    from .expr import compile_exprs

    order = traj.symbols
    missing = set().union(*(free_symbols(c) for c in form.coefficients)) - set(order)
    if missing:
        raise ExprError(f"trajectory lacks symbols {sorted(map(repr, missing))}")
    params = []
    for p in form.parameters:
        if p not in order:
            raise ExprError(f"trajectory lacks parameter {p!r}")
        params.append(order.index(p))
    f = compile_exprs(form.coefficients, order)
    X = traj.matrix()
    vals = np.array([f(row) for row in X])
    total = 0.0
    for j, col in enumerate(params):
        dtb = np.diff(X[:, col])
        total += float(np.sum(0.5 * (vals[1:, j] + vals[:-1, j]) * dtb))
    return total


def _quadratic_coefficients(gens: GeneratorSet) -> dict[str, float]:
    """H = a p^2/2 + b p q + c q^2/2 + d p + e q + f, constant coefficients."""
    if gens.constraints or len(gens.layout.pairs) != 1:
        raise UnsupportedSystemError("propagator needs a regular system with one coordinate")
    (q, p), = gens.layout.pairs
    if q.level != 0:
        raise UnsupportedSystemError("propagator needs a first-order system")
    H = gens.hamiltonian.expr
    if free_symbols(H) - {q, p}:
        raise UnsupportedSystemError("Hamiltonian must depend on q and p only")
    nf = normalize(H)
    if not nf.is_polynomial or any(not isinstance(a, Symbol) for a in nf.atoms()):
        raise UnsupportedSystemError("Hamiltonian is not polynomial")
    if nf.degree_in({q, p}) > 2:
        raise UnsupportedSystemError("Hamiltonian is not quadratic")
    coef = {}
    for mono, c in nf.num:
        coef[tuple(sorted(((a.kind, e) for a, e in mono)))] = float(c)
    out = {
        "a": 2 * coef.get((("mom", 2),), 0.0),
        "b": coef.get((("jet", 1), ("mom", 1)), 0.0),
        "c": 2 * coef.get((("jet", 2),), 0.0),
        "d": coef.get((("mom", 1),), 0.0),
        "e": coef.get((("jet", 1),), 0.0),
        "f": coef.get((), 0.0),
    }
    if out["a"] == 0:
        raise UnsupportedSystemError("Hamiltonian has no kinetic p^2 term")
    return out


def _slice_action(h: dict[str, float], x0: float, x1: float, T: float, N: int):
    """Quadratic form of the discretized action after the momentum integrals.

    Slice j contributes (D - eps*b*m - eps*d)^2/(2*eps*a) - eps*(c*m^2/2 + e*m + f)
    with D = q_j - q_{j-1}, m = (q_j + q_{j-1})/2.  The sum over slices is
    returned as ``1/2 x'Qx + L'x + C`` over x = (q_0, ..., q_N): diagonal and
    off-diagonal of the tridiagonal Q, then L and C.
    """
    eps = T / N
    a, b, c, d, e, f = (h[k] for k in "abcdef")
    # slice quadratic in (u, v) = (q_{j-1}, q_j): write D - eps*b*m - eps*d = alpha*v - beta*u - eps*d
    alpha = 1 - eps * b / 2
    beta = 1 + eps * b / 2
    k2 = 1.0 / (2 * eps * a)
    # S_j = k2*(alpha v - beta u - eps d)^2 - eps*(c/8*(u+v)^2 + e/2*(u+v) + f)
    Quu = 2 * (k2 * beta**2 - eps * c / 8)
    Qvv = 2 * (k2 * alpha**2 - eps * c / 8)
    Quv = -2 * k2 * alpha * beta - eps * c / 4
    Lu = 2 * k2 * beta * eps * d - eps * e / 2
    Lv = -2 * k2 * alpha * eps * d - eps * e / 2
    C = k2 * (eps * d) ** 2 - eps * f
    # total S = 1/2 x'Qx + L'x + C over x = (q_0..q_N); Q tridiagonal
    n = N + 1
    diag = np.zeros(n)
    diag[:-1] += Quu
    diag[1:] += Qvv
    off = np.full(n - 1, Quv)
    lin = np.zeros(n)
    lin[:-1] += Lu
    lin[1:] += Lv
    const = N * C
    return diag, off, lin, const


def _tridiag_ldl(diag: np.ndarray, off: np.ndarray):
    """Pivots of the LDL' factorization of a symmetric tridiagonal matrix."""
    d = np.empty_like(diag)
    d[0] = diag[0]
    for j in range(1, len(diag)):
        if d[j - 1] == 0:
            raise CausticError("singular slice determinant")
        d[j] = diag[j] - off[j - 1] ** 2 / d[j - 1]
    return d


def _tridiag_solve(diag, off, rhs):
    n = len(diag)
    cp = np.zeros(n)
    dp = np.zeros(n)
    cp[0] = off[0] / diag[0] if n > 1 else 0.0
    dp[0] = rhs[0] / diag[0]
    for j in range(1, n):
        m = diag[j] - off[j - 1] * cp[j - 1]
        cp[j] = off[j] / m if j < n - 1 else 0.0
        dp[j] = (rhs[j] - off[j - 1] * dp[j - 1]) / m
    x = np.zeros(n)
    x[-1] = dp[-1]
    for j in range(n - 2, -1, -1):
        x[j] = dp[j] - cp[j] * x[j + 1]
    return x


def _propagate(h, x0, x1, T, N):
    eps = T / N
    a = h["a"]
    diag, off, lin, const = _slice_action(h, x0, x1, T, N)
    # boundary values fixed: fold into linear/constant parts for interior q_1..q_{N-1}
    qb = np.zeros(N + 1)
    qb[0], qb[-1] = x0, x1
    # S(x) = 1/2 x'Qx + L'x + C ; split x = interior + boundary
    Qqb = diag * qb
    Qqb[:-1] += off * qb[1:]
    Qqb[1:] += off * qb[:-1]
    S_b = 0.5 * float(qb @ Qqb) + float(lin @ qb) + const
    g = (lin + Qqb)[1:-1]
    Di = diag[1:-1]
    Oi = off[1:-1]
    # momentum integrals: prod_j (2*pi*i*eps*a)^(-1/2)
    log_mod = -0.5 * N * math.log(2 * math.pi * eps * abs(a))
    phase = -N * math.copysign(math.pi / 4, a)
    free_det = None
    if N > 1:
        piv = _tridiag_ldl(Di, Oi)
        # reference: free-particle interior matrix has pivots (j+1)/j * 1/(eps a)
        free_piv = np.array([(j + 2) / (j + 1) for j in range(N - 1)]) / (eps * a)
        ratio = np.prod(piv / free_piv)
        free_det = ratio
        # a caustic leaves only the O((eps*omega)^2) discretization residue
        omega2 = abs(h["a"] * h["c"]) + h["b"] ** 2
        if abs(ratio) <= eps**2 * omega2:
            raise CausticError(
                f"caustic: slice determinant ratio {ratio:.3e} is numerically zero at T={T}"
            )
        # configuration integrals: int dx exp(i/2 x'Qx + i g'x) = (2 pi i)^(m/2) det(Q)^(-1/2) exp(-i/2 g'Q^-1 g)
        log_mod += 0.5 * (N - 1) * math.log(2 * math.pi) - 0.5 * float(np.sum(np.log(np.abs(piv))))
        neg_count = int(np.sum(piv < 0))
        pos_count = (N - 1) - neg_count
        phase += (pos_count - neg_count) * math.pi / 4
        xs = _tridiag_solve(Di, np.append(Oi, 0.0), -g)
        S_cl = S_b + 0.5 * float(g @ xs)
    else:
        S_cl = S_b
    phase += S_cl
    phase = math.remainder(phase, 2 * math.pi)
    if phase <= -math.pi:
        phase += 2 * math.pi
    return math.exp(log_mod), phase, free_det


def propagator_quadratic(
    gens: GeneratorSet, x0: float, x1: float, T: float, slices: int = 64
) -> PropagatorResult:
    """Midpoint time-sliced phase-space propagator <x1, T | x0, 0> (hbar = 1).

    Momentum integrals are done exactly per slice; the remaining Gaussian in
    the interior positions is evaluated through its tridiagonal determinant.
    """
    if slices < 2:
        raise ValueError("slices must be >= 2")
    if T <= 0:
        raise ValueError("T must be positive")
    h = _quadratic_coefficients(gens)
    mod, ph, _ = _propagate(h, x0, x1, T, slices)
    half = max(2, slices // 2)
    mod_half, _, _ = _propagate(h, x0, x1, T, half) if half != slices else (mod, ph, None)
    return PropagatorResult(mod, ph, slices, abs(mod - mod_half))
