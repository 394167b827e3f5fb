"""Rule language: AST, lexer, parser, normalization, pretty-printing."""

from .ast import (
    And,
    ArithTerm,
    ArithmeticRule,
    Atom,
    CoeffBuiltin,
    CoeffCardinality,
    CoeffNumber,
    CoeffOp,
    ComparisonAtom,
    Constant,
    Implies,
    LangError,
    Literal,
    LogicalRule,
    Neg,
    Or,
    Program,
    SelectStatement,
    SumVariable,
    Variable,
    format_program,
)
from .lexer import SyntaxErrorWithLocation, Token, tokenize
from .parser import NormalizationError, normalize_logical, parse_program

BUILTIN_COEFFICIENTS = {
    "Min": min,
    "Max": max,
}

__all__ = [
    "And",
    "ArithTerm",
    "ArithmeticRule",
    "Atom",
    "BUILTIN_COEFFICIENTS",
    "CoeffBuiltin",
    "CoeffCardinality",
    "CoeffNumber",
    "CoeffOp",
    "ComparisonAtom",
    "Constant",
    "Implies",
    "LangError",
    "Literal",
    "LogicalRule",
    "Neg",
    "NormalizationError",
    "Or",
    "Program",
    "SelectStatement",
    "SumVariable",
    "SyntaxErrorWithLocation",
    "Token",
    "Variable",
    "format_program",
    "normalize_logical",
    "parse_program",
    "tokenize",
]
