import math

import numpy as np
import pytest

from conftest import closed
from hjsingular.action import action_differential
from hjsingular.expr import TIME_VAR, compile_exprs, equal, evaluate, jet, momentum, parse
from hjsingular.hj import build_generators, eom_forms, integrability_closure
from hjsingular.legendre import analyze_legendre
from hjsingular.model import make_spec
from hjsingular.numeric import (
    InconsistentInitialData,
    NumericBlowup,
    ParamCurve,
    Trajectory,
    constraint_drift,
    derivative,
    el_residual,
    integrate,
    lagrangian_integral,
    order_reduce,
    project_initial,
    reduce_point,
)

S2 = ("(q1''-q2')^2/2", ["q1", "q2"], 2)
PU = ("(q''^2 - 5*q'^2 + 4*q^2)/2", ["q"], 2)


def run(L, names, k, init, T, dt=1e-3, curves=None, force=False):
    spec, g, _ = closed(L, names, k)
    sysm = eom_forms(g, force=force)
    return spec, g, integrate(sysm, project_initial(g, init), dt, T, curves=curves, action=action_differential(g, force=force))


def test_curves():
    assert ParamCurve.constant(2.5)(3.0) == 2.5 and ParamCurve.constant(2.5).rate(1.0) == 0.0
    c = ParamCurve.polynomial([1, 0, 3])
    assert c(2.0) == 13.0 and c.rate(2.0) == 12.0
    c = ParamCurve.parse("0.5*tau^2 + 1")
    assert c.kind == "polynomial" and c(2.0) == 3.0 and c.rate(2.0) == 2.0
    assert ParamCurve.parse("3").kind == "constant"
    grid = np.linspace(0, 1, 201)
    c = ParamCurve.samples(grid, np.sin(grid))
    assert c(0.37) == pytest.approx(math.sin(0.37), abs=1e-8)
    assert c.rate(0.37) == pytest.approx(math.cos(0.37), abs=1e-6)


@pytest.mark.parametrize("text", ["sin(tau)", "1/tau", "q", "tau^-1"])
def test_curve_rejects_non_polynomials(text):
    with pytest.raises(ValueError):
        ParamCurve.parse(text)


def test_samples_grid_must_increase():
    with pytest.raises(ValueError):
        ParamCurve.samples([0, 1, 1], [0, 1, 2])


def test_project_initial_examples():
    _, g, _ = closed("q'^2/2 - q^2/2", ["q"], 1)
    pt = project_initial(g, {jet(1, 0): 1.0, momentum(0, 1): 0.0})
    assert pt[jet(1, 0)] == 1.0 and pt[momentum(0, 1)] == 0.0

    _, g, _ = closed(*S2)
    guess = {momentum(1, 2): 5.0, momentum(1, 1): 0.7, momentum(0, 2): 3.0, momentum(0, 1): -2.0}
    pt = project_initial(g, guess)
    assert pt[momentum(1, 2)] == 0.0
    assert pt[momentum(0, 2)] == -0.7
    assert pt[momentum(0, 1)] == 0.0

    _, g, _ = closed("q1'^2/2 + q1*q2", ["q1", "q2"], 1)
    with pytest.raises(InconsistentInitialData, match="Phi1"):
        project_initial(g, {jet(1, 0): 1.0})


def test_integrate_free_particle():
    _, _, tr = run("q'^2/2", ["q"], 1, {momentum(0, 1): 1.0}, 1.0)
    assert abs(tr.final()[jet(1, 0)] - 1.0) <= 1e-10


def test_integrate_fourth_order_polynomials():
    # q'''' = 0: q'' = p1, q''' = -p0
    _, _, tr = run("q''^2/2", ["q"], 2, {momentum(0, 1): -6.0}, 1.0)
    t = tr.column(TIME_VAR)
    assert np.max(np.abs(tr.column(jet(1, 0)) - t**3)) <= 1e-6
    _, _, tr = run("q''^2/2", ["q"], 2, {momentum(1, 1): 6.0}, 1.0)
    assert np.max(np.abs(tr.column(jet(1, 0)) - 3 * t**2)) <= 1e-6


def test_integrate_oscillator():
    _, _, tr = run("q'^2/2 - q^2/2", ["q"], 1, {jet(1, 0): 1.0}, 10.0)
    assert abs(tr.final()[jet(1, 0)] - math.cos(10)) <= 1e-6


def test_fourth_order_convergence():
    errs = []
    for dt in (0.1, 0.05):
        _, _, tr = run("q'^2/2 - q^2/2", ["q"], 1, {jet(1, 0): 1.0}, 10.0, dt=dt)
        errs.append(abs(tr.final()[jet(1, 0)] - math.cos(10)))
    assert 13 <= errs[0] / errs[1] <= 19


def test_hamiltonian_conserved():
    spec, g, tr = run(*PU, {jet(1, 0): 1.0, jet(1, 1): 0.5, momentum(0, 1): 0.2, momentum(1, 1): -0.3}, 10.0)
    f = compile_exprs([g.hamiltonian.expr], tr.symbols)
    H = np.array([f(row)[0] for row in tr.values])
    assert np.max(np.abs(H - H[0])) <= 1e-8


def test_blow_up_reports_last_tau():
    spec, g, _ = closed("q'^2/2 + q^4", ["q"], 1)
    sysm = eom_forms(g)
    with pytest.raises(NumericBlowup) as info:
        integrate(sysm, {jet(1, 0): 1.0, momentum(0, 1): math.sqrt(2)}, 1e-2, 5.0)
    assert 0 < info.value.last_tau < 5.0


def test_el_residual_examples():
    spec = make_spec("q'^2/2", ["q"], 1)
    table = spec.table
    t = np.linspace(0, 1, 201)
    line = Trajectory.from_samples(table, t, {jet(1, 0): 2 * t - 1})
    assert el_residual(spec, line).residuals["q"] <= 1e-10
    bad = Trajectory.from_samples(table, t, {jet(1, 0): t**2})
    assert el_residual(spec, bad).residuals["q"] == pytest.approx(2.0, abs=1e-8)
    spec2, _, tr = run("q'^2/2 - q^2/2", ["q"], 1, {jet(1, 0): 1.0}, 2.0)
    assert el_residual(spec2, tr).residuals["q"] <= 1e-5
    assert el_residual(spec2, tr, stencil_order=2).residuals["q"] <= 1e-5


def test_el_residual_grid_too_coarse():
    spec = make_spec("q''^2/2", ["q"], 2)
    t = np.linspace(0, 1, 9)
    tr = Trajectory.from_samples(spec.table, t, {jet(1, 0): t, jet(1, 1): t})
    with pytest.raises(ValueError, match="coarse"):
        el_residual(spec, tr)


def test_el_residual_on_pu():
    spec, _, tr = run(*PU, {jet(1, 0): 1.0, momentum(0, 1): 0.2}, 10.0)
    assert el_residual(spec, tr).residuals["q"] <= 1e-5


def test_derivative_stencils():
    x = np.linspace(0, 1, 101)
    h = x[1] - x[0]
    assert np.allclose(derivative(x**3, h, 4), 3 * x[2:-2] ** 2, atol=1e-12)
    assert np.allclose(derivative(x**2, h, 2), 2 * x[1:-1], atol=1e-12)
    with pytest.raises(ValueError):
        derivative(x, h, 3)


def test_constraint_drift():
    _, g, tr = run("q'^2/2 - q^2/2", ["q"], 1, {jet(1, 0): 1.0}, 1.0)
    assert constraint_drift(g, tr) == 0.0

    spec, g, _ = closed(*S2)
    sysm = eom_forms(g)
    # un-projected data: p1_q2 = 0.25 violates H'(1)2 by exactly that much
    init = {s: 0.0 for s in g.layout.symbols}
    init[momentum(1, 2)] = 0.25
    tr = integrate(sysm, init, 1e-2, 1.0)
    assert constraint_drift(g, tr) == pytest.approx(0.25, abs=1e-12)


def test_s2_gauge_curves_keep_constraints_and_u():
    spec, g, _ = closed(*S2)
    sysm = eom_forms(g)
    rng = np.random.default_rng(11)
    for _ in range(3):
        curves = {p: ParamCurve.polynomial(rng.uniform(-1, 1, 4)) for p in sysm.parameters[1:]}
        guess = {s: float(v) for s, v in zip(g.layout.symbols, rng.uniform(-1, 1, 8))}
        tr = integrate(sysm, project_initial(g, guess), 1e-3, 2.0, curves=curves)
        assert constraint_drift(g, tr) <= 1e-8
        u = tr.column(momentum(1, 1))
        assert np.max(np.abs(u - u[0])) <= 1e-8
        for p, c in curves.items():
            assert tr.column(p)[-1] == pytest.approx(c(2.0), abs=1e-12)


def test_curve_on_determined_parameter_rejected():
    spec = order_reduce(make_spec("q''^2/2", ["q"], 2))
    g, _ = integrability_closure(build_generators(analyze_legendre(spec)))
    sysm = eom_forms(g, force=True)
    with pytest.raises(ValueError, match="integrability relation"):
        integrate(sysm, {}, 1e-2, 1.0, curves={sysm.determined[0]: ParamCurve.constant(1.0)})


def test_order_reduce_examples():
    red = order_reduce(make_spec("q''^2/2", ["q"], 2))
    assert (red.n, red.k, red.names) == (3, 1, ("q_0", "q_1", "lam0_q"))
    assert equal(red.lagrangian, parse("q_1'^2/2 + lam0_q*(q_0' - q_1)", red.table))
    red = order_reduce(make_spec(*S2))
    assert (red.n, red.k) == (6, 1)
    with pytest.raises(ValueError):
        order_reduce(make_spec("q'^2/2", ["q"], 1))


def test_order_reduce_third_order_names():
    red = order_reduce(make_spec("q'''^2/2", ["q"], 3))
    assert red.names == ("q_0", "q_1", "q_2", "lam0_q", "lam1_q")
    assert equal(red.lagrangian, parse("q_2'^2/2 + lam0_q*(q_0' - q_1) + lam1_q*(q_1' - q_2)", red.table))


@pytest.mark.parametrize("L", ["q''^2/2", PU[0]])
def test_reduction_equivalence(L):
    direct = make_spec(L, ["q"], 2)
    pt = {jet(1, 0): 0.3, jet(1, 1): -0.2, momentum(0, 1): 0.4, momentum(1, 1): 1.0}
    _, g, tr = run(L, ["q"], 2, pt, 2.0)

    red = order_reduce(direct)
    gr, rep = integrability_closure(build_generators(analyze_legendre(red)))
    assert rep.status == "non_involutive"
    sr = eom_forms(gr, force=True)
    assert set(sr.determined) == {jet(1, 0), jet(3, 0)}
    tr2 = integrate(sr, project_initial(gr, reduce_point(direct, pt)), 1e-3, 2.0)
    assert np.max(np.abs(tr.column(jet(1, 0)) - tr2.column(jet(1, 0)))) <= 1e-6
    assert np.max(np.abs(tr.column(jet(1, 1)) - tr2.column(jet(2, 0)))) <= 1e-6


def test_lagrangian_integral_matches_analytic():
    # oscillator q = cos t: int_0^T L dt = sin(2T)/4 * (-1)
    spec, _, tr = run("q'^2/2 - q^2/2", ["q"], 1, {jet(1, 0): 1.0}, 3.0)
    assert lagrangian_integral(spec, tr) == pytest.approx(-math.sin(6.0) / 4, abs=1e-9)


def test_csv_layout_and_determinism():
    spec, g, _ = closed(*S2)
    sysm = eom_forms(g)
    curves = {jet(2, 0): ParamCurve.parse("0.5*tau^2")}
    tr = integrate(sysm, project_initial(g, {momentum(1, 1): 0.7}), 1e-2, 0.5, curves=curves)
    text = tr.to_csv(g)
    lines = text.splitlines()
    assert lines[0] == "tau,t,t12,t02,t01,q1',p0_q1,p0_q2,p1_q1,p1_q2,Z,H'(1)2,H'(0)2,H'(0)1"
    assert len(lines) == 52
    row = lines[-1].split(",")
    assert float(row[3]) == pytest.approx(0.125, abs=1e-15)
    tr2 = integrate(sysm, project_initial(g, {momentum(1, 1): 0.7}), 1e-2, 0.5, curves=curves)
    assert tr2.to_csv(g) == text
    v = 1 / 3
    assert f"{v:.17g}" == "0.33333333333333331"


def test_z_matches_action_along_pu():
    spec, g, tr = run(*PU, {jet(1, 0): 1.0, jet(1, 1): 0.5, momentum(0, 1): 0.2, momentum(1, 1): -0.3}, 10.0)
    ref = lagrangian_integral(spec, tr)
    assert abs(tr.Z[-1] - ref) <= 1e-6 * (1 + abs(ref))
    assert evaluate(g.hamiltonian.expr, tr.final()) == pytest.approx(
        evaluate(g.hamiltonian.expr, {s: v for s, v in zip(tr.symbols, tr.values[0])}), abs=1e-8
    )
