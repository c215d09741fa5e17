"""Symbol identities and the name table that maps them to DSL identifiers."""

from __future__ import annotations

import re
from dataclasses import dataclass, field

JET = "jet"
MOMENTUM = "mom"
TIME = "time"
PARAM = "param"
AUX = "aux"

# atom ordering for canonical forms: (kind tag, level, index, printed form)
_KIND_TAG = {TIME: 0, JET: 1, MOMENTUM: 2, PARAM: 3, AUX: 4}

RESERVED = {"t", "tau", "sin", "cos", "exp"}


@dataclass(frozen=True)
class Symbol:
    kind: str
    index: int = 0
    level: int = 0
    name: str = ""

    def sort_key(self) -> tuple:
        return (_KIND_TAG[self.kind], self.level, self.index, self.name)

    def __repr__(self) -> str:
        if self.kind == JET:
            return f"JetVar({self.index},{self.level})"
        if self.kind == MOMENTUM:
            return f"MomentumVar({self.level},{self.index})"
        if self.kind == PARAM:
            return f"ParamVar({self.level},{self.index})"
        if self.kind == TIME:
            return "TimeVar"
        return f"AuxVar({self.name})"


def jet(i: int, s: int) -> Symbol:
    """Coordinate ``i`` (1-based) differentiated ``s`` times."""
    return Symbol(JET, i, s)


def momentum(s: int, i: int) -> Symbol:
    """Momentum conjugate to ``jet(i, s)``."""
    return Symbol(MOMENTUM, i, s)


def param(s: int, mu: int) -> Symbol:
    return Symbol(PARAM, mu, s)


def aux(name: str) -> Symbol:
    return Symbol(AUX, 0, 0, name)


TIME_VAR = Symbol(TIME)


@dataclass(frozen=True)
class SymbolTable:
    """Names for the coordinates of one system.

    Jets print as ``name`` followed by primes.  Momenta print as ``p``,
    ``p{s}``, ``p_{name}`` or ``p{s}_{name}`` depending on whether the
    system has several levels and several coordinates.  Parameters print as
    ``t{s}{mu}`` (or ``t{s}_{mu}`` when either number has two digits).
    """

    names: tuple[str, ...] = ("q",)
    k: int = 1
    aux_names: frozenset[str] = field(default_factory=frozenset)

    @classmethod
    def default(cls, n: int, k: int, aux_names=()) -> "SymbolTable":
        names = ("q",) if n == 1 else tuple(f"q{i}" for i in range(1, n + 1))
        return cls(names, k, frozenset(aux_names))

    @property
    def n(self) -> int:
        return len(self.names)

    def with_aux(self, *names: str) -> "SymbolTable":
        return SymbolTable(self.names, self.k, self.aux_names | frozenset(names))

    def coordinate_name(self, i: int) -> str:
        return self.names[i - 1]

    def momentum_name(self, s: int, i: int) -> str:
        base = "p" if self.k == 1 else f"p{s}"
        if self.n == 1:
            return base
        return f"{base}_{self.names[i - 1]}"

    def name(self, sym: Symbol) -> str:
        if sym.kind == JET:
            return self.names[sym.index - 1] + "'" * sym.level
        if sym.kind == MOMENTUM:
            return self.momentum_name(sym.level, sym.index)
        if sym.kind == TIME:
            return "t"
        if sym.kind == PARAM:
            if sym.level < 10 and sym.index < 10:
                return f"t{sym.level}{sym.index}"
            return f"t{sym.level}_{sym.index}"
        return sym.name

    def momentum_lookup(self) -> dict[str, Symbol]:
        return {
            self.momentum_name(s, i): momentum(s, i)
            for s in range(self.k)
            for i in range(1, self.n + 1)
        }

    def lookup(self, ident: str, primes: int = 0) -> Symbol | None:
        """Resolve an identifier, or return None when it is unknown."""
        if ident in self.names:
            return jet(self.names.index(ident) + 1, primes)
        if primes:
            return None
        if ident == "t":
            return TIME_VAR
        if ident in self.aux_names:
            return aux(ident)
        moms = self.momentum_lookup()
        if ident in moms:
            return moms[ident]
        m = re.fullmatch(r"t(\d)(\d)|t(\d+)_(\d+)", ident)
        if m:
            s, mu = (m.group(1), m.group(2)) if m.group(1) else (m.group(3), m.group(4))
            if int(mu) >= 1 and int(mu) <= self.n and int(s) < self.k:
                return param(int(s), int(mu))
        return None

    def name_conflicts(self) -> list[str]:
        """Coordinate names that collide with reserved or generated names."""
        bad = []
        generated = set(self.momentum_lookup())
        for nm in self.names:
            if (
                nm in RESERVED
                or nm in generated
                or re.fullmatch(r"t\d+(_\d+)?", nm)
                or not re.fullmatch(r"[A-Za-z_][A-Za-z0-9_]*", nm)
            ):
                bad.append(nm)
        if len(set(self.names)) != len(self.names):
            bad.append("duplicate coordinate names")
        return bad
