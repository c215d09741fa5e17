"""Integration of the total differential equations and the numeric oracles."""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field

import numpy as np

from .expr import (
    JET,
    MOMENTUM,
    TIME_VAR,
    Expr,
    Sym,
    Symbol,
    SymbolTable,
    add,
    aux,
    compile_exprs,
    differentiate,
    evaluate,
    jet,
    mul,
    neg,
    normalize,
    param,
    parse,
    simplify,
    substitute,
    to_string,
    total_time_derivative,
)
from .hj import GeneratorSet, TotalDifferentialSystem
from .model import SystemSpec


class InconsistentInitialData(ValueError):
    pass


class NumericBlowup(ArithmeticError):
    def __init__(self, message, last_tau):
        super().__init__(message)
        self.last_tau = last_tau


@dataclass(frozen=True)
class ParamCurve:
    """Prescribed evolution of one parameter as a function of tau."""

    kind: str
    coefficients: tuple[float, ...] = ()
    grid: tuple[float, ...] = ()
    values: tuple[float, ...] = ()

    @classmethod
    def constant(cls, value: float) -> "ParamCurve":
        return cls("constant", (float(value),))

    @classmethod
    def polynomial(cls, coefficients) -> "ParamCurve":
        """Coefficients in increasing powers of tau."""
        return cls("polynomial", tuple(float(c) for c in coefficients))

    @classmethod
    def samples(cls, grid, values) -> "ParamCurve":
        grid = tuple(float(g) for g in grid)
        if any(b <= a for a, b in zip(grid, grid[1:])):
            raise ValueError("sample grid must be strictly increasing")
        return cls("samples", (), grid, tuple(float(v) for v in values))

    @classmethod
    def parse(cls, text: str) -> "ParamCurve":
        """A polynomial in ``tau`` such as ``0.5*tau^2 + 1``."""
        tau = aux("tau")
        e = parse(text, SymbolTable((), 1, frozenset({"tau"})))
        nf = normalize(e)
        if nf.symbols() - {tau} or not nf.is_polynomial or any(
            not isinstance(a, Symbol) for a in nf.atoms()
        ):
            raise ValueError(f"curve must be a polynomial in tau: {text!r}")
        deg = nf.degree_in({tau})
        coeffs = [0.0] * (deg + 1)
        for mono, c in nf.num:
            coeffs[sum(e for _, e in mono)] = float(c)
        if deg == 0:
            return cls.constant(coeffs[0])
        return cls.polynomial(coeffs)

    def _spline(self):
        from scipy.interpolate import CubicSpline

        return CubicSpline(self.grid, self.values)

    def __call__(self, tau: float) -> float:
        if self.kind == "constant":
            return self.coefficients[0]
        if self.kind == "polynomial":
            return float(np.polynomial.polynomial.polyval(tau, self.coefficients))
        return float(self._spline()(tau))

    def rate(self, tau: float) -> float:
        if self.kind == "constant":
            return 0.0
        if self.kind == "polynomial":
            d = np.polynomial.polynomial.polyder(self.coefficients)
            return float(np.polynomial.polynomial.polyval(tau, d))
        return float(self._spline()(tau, 1))


@dataclass
class Trajectory:
    tau: np.ndarray
    symbols: list[Symbol]
    values: np.ndarray
    Z: np.ndarray
    table: SymbolTable
    parameters: list[Symbol] = field(default_factory=list)

    def column(self, s: Symbol) -> np.ndarray:
        return self.values[:, self.symbols.index(s)]

    def matrix(self) -> np.ndarray:
        return self.values

    def final(self) -> dict[Symbol, float]:
        return {s: float(v) for s, v in zip(self.symbols, self.values[-1])}

    @classmethod
    def from_samples(cls, table: SymbolTable, tau, columns: dict[Symbol, np.ndarray]) -> "Trajectory":
        """Build a trajectory from given sample columns (time defaults to tau)."""
        tau = np.asarray(tau, dtype=float)
        cols = dict(columns)
        cols.setdefault(TIME_VAR, tau)
        syms = [TIME_VAR] + [s for s in cols if s != TIME_VAR]
        values = np.column_stack([np.asarray(cols[s], dtype=float) for s in syms])
        return cls(tau, syms, values, np.zeros_like(tau), table)

    def to_csv(self, gens: GeneratorSet | None = None) -> str:
        """CSV with columns tau, t, parameters, coordinates, momenta, Z, residuals."""
        params = [p for p in self.parameters if p != TIME_VAR]
        coords = [s for s in self.symbols if s.kind == JET and s not in params]
        moms = [s for s in self.symbols if s.kind == MOMENTUM]
        header = ["tau", "t"]
        header += [to_string(Sym(param(p.level, p.index)), self.table) for p in params]
        header += [to_string(Sym(s), self.table) for s in coords + moms]
        header += ["Z"]
        cons = gens.constraints if gens else []
        header += [c.label for c in cons]
        if cons:
            f = compile_exprs([c.expr for c in cons], self.symbols)
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(header)
        idx = [self.symbols.index(s) for s in [TIME_VAR] + params + coords + moms]
        for j in range(len(self.tau)):
            row = [self.tau[j]] + [self.values[j, c] for c in idx] + [self.Z[j]]
            if cons:
                row += f(self.values[j])
            w.writerow([f"{float(v):.17g}" for v in row])
        return buf.getvalue()


@dataclass
class OracleReport:
    residuals: dict[str, float] = field(default_factory=dict)
    constraint_drift: float | None = None
    comparisons: dict[str, float] = field(default_factory=dict)


def project_initial(gens: GeneratorSet, guess: dict[Symbol, float], tol: float = 1e-10) -> dict[Symbol, float]:
    """Overwrite solved momenta with ``-H_c`` and check the remaining constraints."""
    point = {s: 0.0 for s in gens.layout.symbols}
    point[TIME_VAR] = 0.0
    point.update({s: float(v) for s, v in guess.items()})
    for m, value in gens.solved().items():
        point[m] = evaluate(value, point)
    for c in gens.nonparametric:
        v = evaluate(c.expr, point)
        if abs(v) > tol:
            raise InconsistentInitialData(
                f"initial data violate constraint {c.label}: {gens.render(c.expr)} = {v:.3e}"
            )
    return point


def integrate(
    system: TotalDifferentialSystem,
    init: dict[Symbol, float],
    dtau: float,
    T: float,
    curves: dict[Symbol, ParamCurve] | None = None,
    action=None,
) -> Trajectory:
    """Fixed-step RK4 for dx/dtau = sum_beta coeff_beta(x) * dt_beta/dtau.

    Parameters without a curve stay frozen, except time (``t = tau``) and
    parameters fixed by integrability relations, whose rates are solved for.
    ``action`` (an ActionForm) adds the accumulated Z.
    """
    curves = dict(curves or {})
    curves.setdefault(TIME_VAR, ParamCurve.polynomial((0.0, 1.0)))
    layout = system.layout
    phase = layout.symbols
    order = [TIME_VAR] + phase
    npar = len(system.parameters)
    for p in curves:
        if p not in system.parameters:
            raise ValueError(f"{p!r} is not an evolution parameter of this system")
        if p in system.determined:
            raise ValueError(f"{p!r} is fixed by an integrability relation; it takes no curve")

    rows = [c for s in phase for c in system.coefficients[s]]
    fcoef = compile_exprs(rows, order)
    fz = compile_exprs(action.coefficients, order) if action is not None else None
    rel = [c for row in system.relations for c in row]
    frel = compile_exprs(rel, order) if rel else None
    det_idx = [system.parameters.index(p) for p in system.determined]
    free_idx = [j for j in range(npar) if j not in det_idx]

    def rates(tau, vals):
        r = np.zeros(npar)
        for j in free_idx:
            p = system.parameters[j]
            r[j] = curves[p].rate(tau) if p in curves else 0.0
        if det_idx:
            # row j-th column multiplies dt_j/dtau (column 0 is time)
            R = np.array(frel(vals)).reshape(len(system.relations), npar)
            b = R[:, free_idx] @ r[free_idx]
            A = R[:, det_idx]
            sol, *_ = np.linalg.lstsq(A, -b, rcond=None)
            r[det_idx] = sol
        return r

    def deriv(tau, x):
        vals = np.empty(len(order))
        vals[0] = curves[TIME_VAR](tau)
        vals[1:] = x[:-1]
        r = rates(tau, vals)
        C = np.array(fcoef(vals)).reshape(len(phase), npar)
        out = np.empty_like(x)
        out[:-1] = C @ r
        out[-1] = float(np.dot(fz(vals), r)) if fz else 0.0
        return out

    x = np.zeros(len(phase) + 1)
    for j, s in enumerate(phase):
        x[j] = float(init.get(s, 0.0))
    for p, c in curves.items():
        if p != TIME_VAR:
            x[phase.index(p)] = c(0.0)

    steps = int(round(T / dtau))
    if steps < 1:
        raise ValueError("T must be at least one step")
    h = T / steps
    taus = np.linspace(0.0, T, steps + 1)
    out = np.empty((steps + 1, len(order)))
    Z = np.zeros(steps + 1)
    out[0, 0] = curves[TIME_VAR](0.0)
    out[0, 1:] = x[:-1]
    for n in range(steps):
        tau = taus[n]
        try:
            with np.errstate(over="ignore", invalid="ignore"):
                k1 = deriv(tau, x)
                k2 = deriv(tau + h / 2, x + h / 2 * k1)
                k3 = deriv(tau + h / 2, x + h / 2 * k2)
                k4 = deriv(tau + h, x + h * k3)
                x_new = x + h / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
        except (OverflowError, ZeroDivisionError):
            x_new = np.full_like(x, np.nan)
        if not np.all(np.isfinite(x_new)):
            raise NumericBlowup(f"non-finite state after tau={tau:.6g}", float(tau))
        x = x_new
        out[n + 1, 0] = curves[TIME_VAR](taus[n + 1])
        out[n + 1, 1:] = x[:-1]
        Z[n + 1] = x[-1]
    return Trajectory(taus, order, out, Z, system.table, list(system.parameters))


def derivative(y: np.ndarray, h: float, order: int = 4) -> np.ndarray:
    """Central difference on the interior; the result is shorter by 2 (order 2) or 4 (order 4)."""
    if order == 2:
        return (y[2:] - y[:-2]) / (2 * h)
    if order == 4:
        return (-y[4:] + 8 * y[3:-1] - 8 * y[1:-3] + y[:-4]) / (12 * h)
    raise ValueError("stencil order must be 2 or 4")


def euler_lagrange_expressions(spec: SystemSpec) -> list[Expr]:
    """sum_s (-1)^s d^s/dt^s dL/dq_i^(s) for every coordinate."""
    out = []
    for i in range(1, spec.n + 1):
        terms = []
        for s in range(spec.k + 1):
            e = differentiate(spec.lagrangian, jet(i, s))
            for _ in range(s):
                e = total_time_derivative(e, 2 * spec.k)
            terms.append(e if s % 2 == 0 else neg(e))
        out.append(simplify(add(*terms)))
    return out


def el_residual(spec: SystemSpec, traj: Trajectory, stencil_order: int = 4) -> OracleReport:
    """Max Euler-Lagrange residual per coordinate, from finite differences of the jets.

    Jets of level < k come from the trajectory; higher ones are repeated
    central differences of the level k-1 jet.
    """
    tau = traj.tau
    h = float(tau[1] - tau[0])
    if not np.allclose(np.diff(tau), h, rtol=1e-9, atol=0):
        raise ValueError("trajectory grid must be uniform")
    k = spec.k
    shrink = stencil_order // 2
    need = (k + 1) * shrink
    if len(tau) <= 2 * need:
        raise ValueError("grid too coarse: the finite-difference stencil exceeds the window")
    jets: dict[Symbol, np.ndarray] = {}
    for i in range(1, spec.n + 1):
        for s in range(k):
            jets[jet(i, s)] = traj.column(jet(i, s))
        y = traj.column(jet(i, k - 1))
        for s in range(k, 2 * k + 1):
            y = derivative(y, h, stencil_order)
            jets[jet(i, s)] = y
    jets[TIME_VAR] = traj.column(TIME_VAR)
    # trim everything to the common interior
    m = len(tau) - 2 * need
    trimmed = {}
    for s, arr in jets.items():
        cut = (len(arr) - m) // 2
        trimmed[s] = arr[cut : cut + m]
    exprs = euler_lagrange_expressions(spec)
    syms = list(trimmed)
    f = compile_exprs(exprs, syms)
    X = np.column_stack([trimmed[s] for s in syms])
    vals = np.array([f(row) for row in X])
    report = OracleReport()
    for i in range(spec.n):
        report.residuals[spec.names[i]] = float(np.max(np.abs(vals[:, i])))
    return report


def constraint_drift(gens: GeneratorSet, traj: Trajectory) -> float:
    cons = gens.constraints
    if not cons:
        return 0.0
    f = compile_exprs([c.expr for c in cons], traj.symbols)
    return float(max(max(abs(v) for v in f(row)) for row in traj.values))


def lagrangian_integral(spec: SystemSpec, traj: Trajectory, stencil_order: int = 4) -> float:
    """Simpson integral of L along a trajectory with the top jets from finite differences.

    Independent of the Legendre data: only jets of level < k are read from
    the trajectory.
    """
    t = traj.column(TIME_VAR)
    h = float(t[1] - t[0])
    cols = {TIME_VAR: t}
    for i in range(1, spec.n + 1):
        for s in range(spec.k):
            cols[jet(i, s)] = traj.column(jet(i, s))
        cols[jet(i, spec.k)] = _derivative_full(traj.column(jet(i, spec.k - 1)), h)
    syms = list(cols)
    f = compile_exprs([spec.lagrangian], syms)
    X = np.column_stack([cols[s] for s in syms])
    L = np.array([f(row)[0] for row in X])
    from scipy.integrate import simpson

    return float(simpson(L, x=t))


def _derivative_full(y: np.ndarray, h: float) -> np.ndarray:
    """Fourth-order first derivative on the whole grid (one-sided at the ends)."""
    d = np.empty_like(y)
    d[2:-2] = derivative(y, h, 4)
    for j in (0, 1):
        w = y[j : j + 5]
        d[j] = (-25 * w[0] + 48 * w[1] - 36 * w[2] + 16 * w[3] - 3 * w[4]) / (12 * h) if j == 0 else (
            -3 * y[0] - 10 * y[1] + 18 * y[2] - 6 * y[3] + y[4]
        ) / (12 * h)
    for j in (-1, -2):
        if j == -1:
            w = y[-5:]
            d[-1] = (25 * w[4] - 48 * w[3] + 36 * w[2] - 16 * w[1] + 3 * w[0]) / (12 * h)
        else:
            d[-2] = (3 * y[-1] + 10 * y[-2] - 18 * y[-3] + 6 * y[-4] - y[-5]) / (12 * h)
    return d


def order_reduce(spec: SystemSpec) -> SystemSpec:
    """First-order system in y_(s)i = q_i^(s) with multipliers enforcing y_(s)' = y_(s+1)."""
    if spec.k < 2:
        raise ValueError("order reduction needs k >= 2")
    n, k = spec.n, spec.k
    names = [f"{spec.names[i]}_{s}" for s in range(k) for i in range(n)]
    names += [f"lam{s}_{spec.names[i]}" for s in range(k - 1) for i in range(n)]

    def y(s, i):
        return s * n + i  # 1-based index of y_(s)i

    bind = {}
    for i in range(1, n + 1):
        for s in range(k):
            bind[jet(i, s)] = Sym(jet(y(s, i), 0))
        bind[jet(i, k)] = Sym(jet(y(k - 1, i), 1))
    bind = {a: b for a, b in bind.items() if b != Sym(a)}
    terms = [substitute(spec.lagrangian, bind)]
    for s in range(k - 1):
        for i in range(1, n + 1):
            lam = Sym(jet(k * n + s * n + i, 0))
            terms.append(mul(lam, add(Sym(jet(y(s, i), 1)), neg(Sym(jet(y(s + 1, i), 0))))))
    lag = simplify(add(*terms))
    return SystemSpec(len(names), 1, lag, tuple(names))


def reduce_point(spec: SystemSpec, point: dict[Symbol, float]) -> dict[Symbol, float]:
    """Map phase data of a k >= 2 system onto its order-reduced counterpart."""
    from .expr import momentum

    n, k = spec.n, spec.k
    out = {}
    for i in range(1, n + 1):
        for s in range(k):
            idx = s * n + i
            out[jet(idx, 0)] = point.get(jet(i, s), 0.0)
            out[momentum(0, idx)] = point.get(momentum(s, i), 0.0)
        for s in range(k - 1):
            out[jet(k * n + s * n + i, 0)] = point.get(momentum(s, i), 0.0)
    if TIME_VAR in point:
        out[TIME_VAR] = point[TIME_VAR]
    return out

