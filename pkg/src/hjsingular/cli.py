"""Command-line front end for the Hamilton-Jacobi pipeline."""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import asdict, dataclass, field

import numpy as np

from . import __version__
from .action import (
    CausticError,
    UnsupportedSystemError,
    action_differential,
    path_integral_exponent,
    propagator_quadratic,
    reduced_space,
)
from .expr import (
    PARAM,
    TIME_VAR,
    ExprError,
    ParseError,
    Sym,
    add,
    compile_exprs,
    jet,
    normalize,
    param,
    parse,
    to_latex,
    to_string,
)
from .hj import (
    CLOSED,
    INCONSISTENT,
    ClosureError,
    GeneratorSet,
    build_generators,
    closure_independent,
    eom_forms,
    integrability_closure,
    poisson_bracket,
)
from .legendre import ConsistencyError, RankError, analyze_legendre
from .model import SystemSpec, load_hjl, to_hjl, validate_spec
from .numeric import (
    InconsistentInitialData,
    NumericBlowup,
    ParamCurve,
    constraint_drift,
    el_residual,
    integrate,
    lagrangian_integral,
    order_reduce,
    project_initial,
)

EXIT_OK, EXIT_PARSE, EXIT_UNSUPPORTED, EXIT_INCONSISTENT, EXIT_NUMERIC = 0, 1, 2, 3, 4

LOWER_MOMENTA_NOTE = (
    "lower momenta p_(m-1) are independent phase variables; their relation to "
    "the Lagrangian (with the total time derivative of p_(m)) follows from the equations of motion"
)
MOMENTA_RANGE_NOTE = "the characteristic equations for dq and dp run over all momenta, not only p_(0)..p_(r)"


class CliError(Exception):
    def __init__(self, message: str, code: int):
        super().__init__(message)
        self.code = code


@dataclass
class AnalysisReport:
    header: dict
    system: dict
    hessian: list
    rank: dict
    W: dict
    H0: str
    generators: list
    closure: dict
    eom: dict | None = None
    action: dict | None = None
    reduced: dict | None = None
    warnings: list = field(default_factory=list)

    def to_json(self) -> str:
        return json.dumps(asdict(self), sort_keys=True, indent=2) + "\n"

    @classmethod
    def from_json(cls, text: str) -> "AnalysisReport":
        return cls(**json.loads(text))


@dataclass
class Pipeline:
    spec: SystemSpec
    analysis: object
    gens: GeneratorSet
    report: object


def _header(args) -> dict:
    flags = {k: v for k, v in vars(args).items() if k != "func"}
    return {"tool": "hjsingular", "version": __version__, "flags": flags}


def load(path: str) -> SystemSpec:
    try:
        spec = load_hjl(path)
    except OSError as exc:
        raise CliError(f"cannot read {path}: {exc.strerror}", EXIT_PARSE) from None
    except ParseError as exc:
        raise CliError(f"parse error: {exc}", EXIT_PARSE) from None
    check = validate_spec(spec)
    if not check.ok:
        raise CliError("unsupported Lagrangian: " + "; ".join(check.violations), EXIT_UNSUPPORTED)
    return spec


def run_pipeline(spec: SystemSpec, args) -> Pipeline:
    try:
        analysis = analyze_legendre(spec, samples=args.rank_samples, seed=args.seed)
    except (RankError, ConsistencyError) as exc:
        raise CliError(f"unsupported Lagrangian: {exc}", EXIT_UNSUPPORTED) from None
    try:
        gens, report = integrability_closure(build_generators(analysis), max_iter=args.max_iter)
    except ClosureError as exc:
        raise CliError(str(exc), EXIT_INCONSISTENT) from None
    return Pipeline(spec, analysis, gens, report)


def _pname(p, table) -> str:
    if p == TIME_VAR:
        return "t"
    return to_string(Sym(param(p.level, p.index)), table)


def build_report(pipe: Pipeline, args) -> AnalysisReport:
    spec, an, gens, rep = pipe.spec, pipe.analysis, pipe.gens, pipe.report
    r = spec.render
    part = an.partition
    tops = spec.top_jets()
    gen_rows = []
    for g in gens.generators:
        gen_rows.append(
            {
                "label": g.label,
                "expr": gens.render(g.expr),
                "origin": g.origin,
                "parameter": _pname(g.parameter, gens.table) if g.parameter is not None else None,
                "momentum": gens.render(Sym(g.momentum)) if g.momentum is not None else None,
            }
        )
    eom = action = reduced = None
    if rep.status != INCONSISTENT:
        system = eom_forms(gens, force=True)
        eom = {
            "parameters": [_pname(p, gens.table) for p in system.parameters],
            "labels": system.labels,
            "coefficients": {
                gens.render(Sym(s)): [gens.render(c) for c in row] for s, row in system.coefficients.items()
            },
            "relations": [[gens.render(c) for c in row] for row in system.relations],
            "determined": [_pname(p, gens.table) for p in system.determined],
        }
        red = reduced_space(gens)
        form = action_differential(gens, red, force=True)
        expo = path_integral_exponent(form, red)
        action = {
            "labels": form.labels,
            "coefficients": form.render(),
            "exponent": expo.text,
        }
        reduced = {
            "coordinates": [gens.render(Sym(q)) for q in red.coordinates],
            "momenta": [gens.render(Sym(p)) for p in red.momenta],
            "parameters": [_pname(p, gens.table) for p in red.parameters],
            "dimension": red.dimension,
        }
    warnings = []
    if spec.k >= 2:
        warnings.append(LOWER_MOMENTA_NOTE)
    warnings.append(MOMENTA_RANGE_NOTE)
    if rep.status != CLOSED:
        warnings.append(f"system is {rep.status}")
    return AnalysisReport(
        header=_header(args),
        system={"coordinates": list(spec.names), "order": spec.k, "lagrangian": r(spec.lagrangian)},
        hessian=[[r(x) for x in row] for row in an.hessian.entries],
        rank={
            "rank": part.rank,
            "r": part.r,
            "regular": list(part.regular),
            "degenerate": list(part.degenerate),
            "permutation": list(part.permutation),
            "sample_ranks": list(part.sample_ranks),
            "exact": part.exact,
        },
        W={r(Sym(tops[a - 1])): r(w) for a, w in an.W.items()},
        H0=r(an.H0),
        generators=gen_rows,
        closure={
            "status": rep.status,
            "iterations": rep.iterations,
            "additions": rep.additions,
            "trace": [t.to_dict() for t in rep.trace],
            "bracket_table": rep.bracket_table,
        },
        eom=eom,
        action=action,
        reduced=reduced,
        warnings=warnings,
    )


def _text_report(rep: AnalysisReport) -> str:
    lines = [
        f"# hjsingular {rep.header['version']}",
        f"coordinates: {', '.join(rep.system['coordinates'])}   order: {rep.system['order']}",
        f"L = {rep.system['lagrangian']}",
        f"Hessian rank {rep.rank['rank']}, r = {rep.rank['r']}, degenerate {rep.rank['degenerate']}",
    ]
    for q, w in rep.W.items():
        lines.append(f"  {q} = {w}")
    lines.append(f"H0 = {rep.H0}")
    lines.append(f"status: {rep.closure['status']} after {rep.closure['iterations']} iteration(s)")
    for g in rep.generators:
        par = f"  [d{g['parameter']}]" if g["parameter"] else ""
        lines.append(f"  {g['label']} = {g['expr']}{par}")
    for t in rep.closure["trace"]:
        lines.append(f"  it {t['iteration']} {{{t['bracket'][0]}, {t['bracket'][1]}}} -> {t['residual']}: {t['action_taken']}")
    if rep.action:
        lines.append("dZ coefficients:")
        for lab, c in zip(rep.action["labels"], rep.action["coefficients"]):
            lines.append(f"  {lab}: {c}")
        lines.append(f"exponent: {rep.action['exponent']}")
    for w in rep.warnings:
        lines.append(f"note: {w}")
    return "\n".join(lines) + "\n"


def _latex_report(pipe: Pipeline) -> str:
    gens = pipe.gens
    t = gens.table
    lines = [r"H_0 = " + to_latex(pipe.analysis.H0, t)]
    for g in gens.generators:
        lines.append(f"{g.label} = " + to_latex(g.expr, t))
    return "\n".join(lines) + "\n"


def _emit(args, text: str) -> None:
    sys.stdout.write(text)


# -- commands ------------------------------------------------------------------


def cmd_analyze(args) -> int:
    spec = load(args.path)
    pipe = run_pipeline(spec, args)
    rep = build_report(pipe, args)
    if args.format == "json":
        _emit(args, rep.to_json())
    elif args.format == "latex":
        _emit(args, _latex_report(pipe))
    else:
        _emit(args, _text_report(rep))
    return EXIT_OK if pipe.report.status == CLOSED else EXIT_INCONSISTENT


def _symbol(name: str, spec: SystemSpec):
    try:
        e = parse(name.strip(), spec.table)
    except ParseError as exc:
        raise CliError(f"bad name {name!r}: {exc}", EXIT_PARSE) from None
    if not isinstance(e, Sym):
        raise CliError(f"{name!r} is not a single variable", EXIT_PARSE)
    s = e.symbol
    if s.kind == PARAM:
        return jet(s.index, s.level)
    return s


def _parse_init(text: str | None, spec: SystemSpec) -> dict:
    out = {}
    if not text:
        return out
    for item in text.split(","):
        if "=" not in item:
            raise CliError(f"bad --init entry {item!r}, expected NAME=VALUE", EXIT_PARSE)
        name, val = item.split("=", 1)
        try:
            out[_symbol(name, spec)] = float(val)
        except ValueError:
            raise CliError(f"bad value in --init entry {item!r}", EXIT_PARSE) from None
    return out


def _parse_curves(items, spec: SystemSpec) -> dict:
    out = {}
    for item in items or []:
        if "=" not in item:
            raise CliError(f"bad --curve {item!r}, expected NAME=POLY(tau)", EXIT_PARSE)
        name, body = item.split("=", 1)
        try:
            out[_symbol(name, spec)] = ParamCurve.parse(body)
        except (ValueError, ExprError) as exc:
            raise CliError(f"bad --curve {item!r}: {exc}", EXIT_PARSE) from None
    return out


def cmd_integrate(args) -> int:
    spec = load(args.path)
    pipe = run_pipeline(spec, args)
    gens, status = pipe.gens, pipe.report.status
    if status != CLOSED and not (args.force and status != INCONSISTENT):
        raise CliError(f"system is {status}; integration needs a closed system (or --force)", EXIT_INCONSISTENT)
    system = eom_forms(gens, force=args.force)
    guess = _parse_init(args.init, spec)
    curves = _parse_curves(args.curve, spec)
    try:
        init = project_initial(gens, guess, tol=args.tol)
    except InconsistentInitialData as exc:
        raise CliError(str(exc), EXIT_INCONSISTENT) from None
    form = action_differential(gens, force=args.force)
    try:
        traj = integrate(system, init, args.dt, args.t_end, curves=curves, action=form)
    except ValueError as exc:
        raise CliError(str(exc), EXIT_PARSE) from None
    except NumericBlowup as exc:
        raise CliError(f"{exc} (last good tau {exc.last_tau:.6g})", EXIT_NUMERIC) from None
    if args.out:
        with open(args.out, "w", encoding="utf-8", newline="") as fh:
            fh.write(traj.to_csv(gens))
    try:
        el = el_residual(spec, traj).residuals
    except ValueError:
        el = None
    summary = {
        "header": _header(args),
        "status": status,
        "final": {gens.render(Sym(s)): float(v) for s, v in traj.final().items()},
        "Z": float(traj.Z[-1]),
        "constraint_drift": constraint_drift(gens, traj),
        "el_residual": el,
        "samples": len(traj.tau),
    }
    if args.format == "json":
        _emit(args, json.dumps(summary, sort_keys=True, indent=2) + "\n")
    else:
        lines = [f"# hjsingular {__version__}", f"status: {status}", f"samples: {summary['samples']}"]
        lines += [f"  {k} = {v:.17g}" for k, v in summary["final"].items()]
        lines.append(f"Z = {summary['Z']:.17g}")
        lines.append(f"constraint drift = {summary['constraint_drift']:.3e}")
        if el is not None:
            lines += [f"EL residual {k} = {v:.3e}" for k, v in el.items()]
        _emit(args, "\n".join(lines) + "\n")
    return EXIT_OK


def cmd_action(args) -> int:
    spec = load(args.path)
    pipe = run_pipeline(spec, args)
    gens = pipe.gens
    if pipe.report.status != CLOSED and not args.force:
        raise CliError(f"system is {pipe.report.status}; the action needs a closed system", EXIT_INCONSISTENT)
    red = reduced_space(gens)
    form = action_differential(gens, red, force=args.force)
    expo = path_integral_exponent(form, red)
    names = [_pname(p, gens.table) for p in form.parameters]
    if args.format == "latex":
        lines = [f"d{n}: " + to_latex(c, gens.table) for n, c in zip(names, form.coefficients)]
        lines.append(expo.latex)
        _emit(args, "\n".join(lines) + "\n")
    elif args.format == "json":
        out = {
            "header": _header(args),
            "coefficients": dict(zip(names, form.render())),
            "exponent": expo.text,
            "measure": expo.measure,
        }
        _emit(args, json.dumps(out, sort_keys=True, indent=2) + "\n")
    else:
        lines = [f"d{n}: {c}" for n, c in zip(names, form.render())]
        lines.append(expo.text)
        _emit(args, "\n".join(lines) + "\n")
    return EXIT_OK


def cmd_propagate(args) -> int:
    spec = load(args.path)
    pipe = run_pipeline(spec, args)
    try:
        res = propagator_quadratic(pipe.gens, args.x0, args.x1, args.T, slices=args.slices)
    except UnsupportedSystemError as exc:
        raise CliError(f"unsupported: {exc}", EXIT_UNSUPPORTED) from None
    except CausticError as exc:
        raise CliError(str(exc), EXIT_NUMERIC) from None
    out = {
        "header": _header(args),
        "modulus": res.modulus,
        "phase": res.phase,
        "slices": res.slices,
        "convergence": res.convergence,
    }
    if args.format == "json":
        _emit(args, json.dumps(out, sort_keys=True, indent=2) + "\n")
    else:
        _emit(
            args,
            f"modulus = {res.modulus:.17g}\nphase = {res.phase:.17g}\n"
            f"slices = {res.slices}\nconvergence = {res.convergence:.3e}\n",
        )
    return EXIT_OK


def cmd_reduce(args) -> int:
    spec = load(args.path)
    try:
        red = order_reduce(spec)
    except ValueError as exc:
        raise CliError(str(exc), EXIT_UNSUPPORTED) from None
    _emit(args, to_hjl(red))
    return EXIT_OK


def property_checks(spec: SystemSpec, args) -> list[tuple[str, bool, str]]:
    """Structural and numeric self-checks on one system."""
    pipe = run_pipeline(spec, args)
    gens = pipe.gens
    layout = gens.layout
    results = []
    exprs = [g.expr for g in gens.generators]
    rng = np.random.default_rng(args.seed)
    syms = layout.symbols + [TIME_VAR]

    anti = all(
        normalize(add(poisson_bracket(a, b, layout), poisson_bracket(b, a, layout))).is_zero
        for a in exprs
        for b in exprs
    )
    results.append(("bracket antisymmetry", anti, f"{len(exprs)} generators"))

    worst = 0.0
    if len(exprs) >= 1:
        jac = []
        for a in exprs:
            for b in exprs:
                for c in exprs:
                    jac.append(
                        add(
                            poisson_bracket(a, poisson_bracket(b, c, layout), layout),
                            poisson_bracket(b, poisson_bracket(c, a, layout), layout),
                            poisson_bracket(c, poisson_bracket(a, b, layout), layout),
                        )
                    )
        f = compile_exprs(jac, syms)
        for _ in range(20):
            worst = max(worst, max(abs(v) for v in f(rng.uniform(-1, 1, len(syms)))))
    results.append(("Jacobi identity", worst <= 1e-8, f"max residual {worst:.2e}"))

    results.append(("constraint independence", closure_independent(gens, seed=args.seed), ""))

    first = build_report(pipe, args).to_json()
    again = build_report(run_pipeline(spec, args), args).to_json()
    results.append(("deterministic report", first == again, ""))
    results.append(("report round-trip", AnalysisReport.from_json(first).to_json() == first, ""))

    if pipe.report.status == CLOSED and not gens.parametric:
        system = eom_forms(gens)
        guess = {s: float(v) for s, v in zip(layout.symbols, rng.uniform(-0.5, 0.5, len(layout.symbols)))}
        form = action_differential(gens)
        try:
            traj = integrate(system, project_initial(gens, guess), 1e-3, 1.0, action=form)
            el = max(el_residual(spec, traj).residuals.values())
            results.append(("Euler-Lagrange residual", el <= 1e-5, f"{el:.2e}"))
            ref = lagrangian_integral(spec, traj)
            dz = abs(traj.Z[-1] - ref)
            results.append(("action equals integral of L", dz <= 1e-6 * (1 + abs(ref)), f"{dz:.2e}"))
        except NumericBlowup as exc:
            results.append(("integration", False, str(exc)))
    return results


def cmd_check(args) -> int:
    spec = load(args.path)
    results = property_checks(spec, args)
    if args.format == "json":
        out = {
            "header": _header(args),
            "checks": [{"name": n, "passed": ok, "detail": d} for n, ok, d in results],
        }
        _emit(args, json.dumps(out, sort_keys=True, indent=2) + "\n")
    else:
        _emit(args, "".join(f"{'PASS' if ok else 'FAIL'} {n} {d}".rstrip() + "\n" for n, ok, d in results))
    return EXIT_OK if all(ok for _, ok, _ in results) else EXIT_NUMERIC


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--format", choices=("text", "json", "latex"), default="text")
    common.add_argument("--seed", type=int, default=0)
    common.add_argument("--rank-samples", type=int, default=5)
    common.add_argument("--max-iter", type=int, default=None)
    common.add_argument("--tol", type=float, default=1e-10)
    common.add_argument("--force", action="store_true", help="proceed on non-involutive systems")

    parser = argparse.ArgumentParser(prog="hjsingular", description=__doc__)
    parser.add_argument("--version", action="version", version=f"hjsingular {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("analyze", parents=[common], help="Legendre analysis and constraint closure")
    p.add_argument("path")
    p.set_defaults(func=cmd_analyze)

    p = sub.add_parser("integrate", parents=[common], help="integrate the total differential equations")
    p.add_argument("path")
    p.add_argument("--init", help="initial data, e.g. q=1,p=0")
    p.add_argument("--t-end", type=float, default=1.0)
    p.add_argument("--dt", type=float, default=1e-3)
    p.add_argument("--curve", action="append", help="parameter curve NAME=POLY(tau), repeatable")
    p.add_argument("--out", help="write the trajectory CSV here")
    p.set_defaults(func=cmd_integrate)

    p = sub.add_parser("action", parents=[common], help="action differential and path-integral exponent")
    p.add_argument("path")
    p.set_defaults(func=cmd_action)

    p = sub.add_parser("propagate", parents=[common], help="time-sliced propagator for quadratic k=1 systems")
    p.add_argument("path")
    p.add_argument("--x0", type=float, required=True)
    p.add_argument("--x1", type=float, required=True)
    p.add_argument("--T", type=float, required=True)
    p.add_argument("--slices", type=int, default=64)
    p.set_defaults(func=cmd_propagate)

    p = sub.add_parser("reduce", parents=[common], help="emit the first-order reduced system")
    p.add_argument("path")
    p.set_defaults(func=cmd_reduce)

    p = sub.add_parser("check", parents=[common], help="run the property suite on a system")
    p.add_argument("path")
    p.set_defaults(func=cmd_check)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except CliError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.code


if __name__ == "__main__":
    sys.exit(main())
