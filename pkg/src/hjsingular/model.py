"""Problem statement: an n-coordinate Lagrangian of order k, and its phase space."""

from __future__ import annotations

import re
from dataclasses import dataclass, field

from .expr import (
    JET,
    TIME,
    Expr,
    ExprError,
    ParseError,
    Symbol,
    SymbolTable,
    free_symbols,
    jet,
    momentum,
    normalize,
    parse,
    to_string,
)
from .expr.core import transcendental_args


class SpecError(ParseError):
    """Malformed ``.hjl`` input."""


@dataclass(frozen=True)
class SystemSpec:
    n: int
    k: int
    lagrangian: Expr
    names: tuple[str, ...]

    @property
    def table(self) -> SymbolTable:
        return SymbolTable(self.names, self.k)

    def top_jets(self) -> list[Symbol]:
        return [jet(i, self.k) for i in range(1, self.n + 1)]

    def render(self, e: Expr) -> str:
        return to_string(e, self.table)


@dataclass
class ValidationReport:
    violations: list[str] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.violations

    def __bool__(self) -> bool:
        return self.ok


@dataclass(frozen=True)
class PhaseLayout:
    """Jet coordinates of levels 0..k-1 paired with their momenta, level-major."""

    pairs: tuple[tuple[Symbol, Symbol], ...]

    @property
    def dimension(self) -> int:
        return 2 * len(self.pairs)

    @property
    def coordinates(self) -> list[Symbol]:
        return [q for q, _ in self.pairs]

    @property
    def momenta(self) -> list[Symbol]:
        return [p for _, p in self.pairs]

    @property
    def symbols(self) -> list[Symbol]:
        return self.coordinates + self.momenta

    def conjugate(self, x: Symbol) -> Symbol:
        for q, p in self.pairs:
            if x == q:
                return p
            if x == p:
                return q
        raise KeyError(x)


def make_spec(lagrangian: str, names, k: int) -> SystemSpec:
    names = tuple(names)
    table = SymbolTable(names, k)
    bad = table.name_conflicts()
    if bad:
        raise SpecError(f"invalid coordinate names: {', '.join(bad)}")
    if k < 1:
        raise SpecError("order must be >= 1")
    return SystemSpec(len(names), k, parse(lagrangian, table), names)


_ENTRY = re.compile(r"^\s*([A-Za-z_]+)\s*:\s*(.*?)\s*$", re.S)


def parse_hjl(text: str) -> SystemSpec:
    """Read the ``system { key: value; ... }`` file format."""
    lines = [ln.split("#", 1)[0] for ln in text.splitlines()]
    body = "\n".join(lines)
    m = re.fullmatch(r"\s*system\s*\{(.*)\}\s*", body, re.S)
    if not m:
        raise SpecError("expected 'system { ... }' block")
    entries: dict[str, str] = {}
    for chunk in m.group(1).split(";"):
        if not chunk.strip():
            continue
        em = _ENTRY.match(chunk)
        if not em:
            raise SpecError(f"malformed entry {chunk.strip()!r}")
        key, val = em.group(1), em.group(2)
        if key in entries:
            raise SpecError(f"duplicate key {key!r}")
        if key not in ("coordinates", "order", "lagrangian"):
            raise SpecError(f"unknown key {key!r}")
        entries[key] = val
    missing = {"coordinates", "order", "lagrangian"} - set(entries)
    if missing:
        raise SpecError(f"missing keys: {', '.join(sorted(missing))}")
    names = [s.strip() for s in entries["coordinates"].split(",") if s.strip()]
    if not names:
        raise SpecError("no coordinates given")
    try:
        k = int(entries["order"])
    except ValueError:
        raise SpecError(f"order must be an integer, got {entries['order']!r}") from None
    return make_spec(entries["lagrangian"], names, k)


def load_hjl(path) -> SystemSpec:
    with open(path, encoding="utf-8") as fh:
        return parse_hjl(fh.read())


def to_hjl(spec: SystemSpec) -> str:
    return (
        "system {\n"
        f"  coordinates: {', '.join(spec.names)};\n"
        f"  order: {spec.k};\n"
        f"  lagrangian: {spec.render(spec.lagrangian)};\n"
        "}\n"
    )


def validate_spec(spec: SystemSpec) -> ValidationReport:
    report = ValidationReport()
    v = report.violations
    if spec.k < 1:
        v.append("order must be >= 1")
    if spec.n != len(spec.names):
        v.append("coordinate count does not match names")
    for s in free_symbols(spec.lagrangian):
        if s.kind == TIME:
            continue
        if s.kind != JET:
            v.append(f"symbol {s!r} not allowed in a Lagrangian")
        elif not 1 <= s.index <= spec.n:
            v.append(f"coordinate index {s.index} out of range")
        elif s.level > spec.k:
            v.append(f"derivative level {s.level} exceeds order {spec.k}")
    top = set(spec.top_jets())
    for arg in transcendental_args(spec.lagrangian):
        if free_symbols(arg) & top:
            v.append("transcendental of top derivative")
            break
    if v:
        return report
    try:
        nf = normalize(spec.lagrangian)
    except ExprError as exc:
        v.append(f"lagrangian does not normalize: {exc}")
        return report
    den_atoms = {a for m, _ in nf.den for a, _ in m}
    if den_atoms & top:
        v.append("top derivative in denominator")
    elif nf.degree_in(top) > 2:
        v.append("degree > 2 in top derivative")
    return report


def phase_layout(spec: SystemSpec) -> PhaseLayout:
    return PhaseLayout(
        tuple(
            (jet(i, s), momentum(s, i))
            for s in range(spec.k)
            for i in range(1, spec.n + 1)
        )
    )
