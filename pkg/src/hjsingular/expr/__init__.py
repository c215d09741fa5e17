"""Exact symbolic kernel: parse, differentiate, substitute, normalize, evaluate."""

from .core import (
    ONE,
    ZERO,
    Add,
    Const,
    Expr,
    ExprError,
    Func,
    LevelError,
    Mul,
    PoleError,
    Pow,
    Sym,
    UnboundSymbolError,
    add,
    as_expr,
    compile_exprs,
    const,
    differentiate,
    evaluate,
    evaluate_exact,
    free_symbols,
    func,
    mul,
    neg,
    power,
    substitute,
    sym,
    to_latex,
    to_string,
    total_time_derivative,
)
from .normal import NormalForm, equal, is_zero, linear_coefficient, normalize, simplify
from .parse import ParseError, parse
from .symbols import (
    JET,
    MOMENTUM,
    PARAM,
    TIME,
    TIME_VAR,
    Symbol,
    SymbolTable,
    aux,
    jet,
    momentum,
    param,
)

__all__ = [name for name in dir() if not name.startswith("_")]
