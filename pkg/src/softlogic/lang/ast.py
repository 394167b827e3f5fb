"""Syntax tree for the rule language, plus pretty-printing.

Rules are either logical (a clause, possibly written as an implication) or
arithmetic (two linear combinations of sum-augmented atoms joined by a
nonstrict relation). Pretty-printed rules reparse to structurally identical
trees; reverse implications and ``~``/``&&``-style spellings are
canonicalized at parse time.
"""

from __future__ import annotations

from dataclasses import dataclass


class LangError(ValueError):
    """Base class for language-level errors carrying a source location."""

    def __init__(self, message, line=None, column=None):
        self.line = line
        self.column = column
        if line is not None:
            message = "%d:%d: %s" % (line, column, message)
        super().__init__(message)


# -- terms and atoms -----------------------------------------------------


@dataclass(frozen=True)
class Constant:
    value: str

    def render(self) -> str:
        return '"%s"' % self.value.replace("\\", "\\\\").replace('"', '\\"')


@dataclass(frozen=True)
class Variable:
    name: str

    def render(self) -> str:
        return self.name


@dataclass(frozen=True)
class SumVariable:
    name: str

    def render(self) -> str:
        return "+" + self.name


@dataclass(frozen=True)
class Atom:
    predicate: str
    args: tuple = ()

    def render(self) -> str:
        return "%s(%s)" % (self.predicate, ", ".join(a.render() for a in self.args))

    @property
    def sum_variables(self):
        return tuple(a.name for a in self.args if isinstance(a, SumVariable))

    @property
    def variables(self):
        return tuple(a.name for a in self.args if isinstance(a, Variable))


@dataclass(frozen=True)
class ComparisonAtom:
    """Functionally defined infix atom; ``!=`` is 1 for distinct constants."""

    left: object
    right: object
    op: str = "!="

    def render(self) -> str:
        return "%s %s %s" % (self.left.render(), self.op, self.right.render())

    @property
    def sum_variables(self):
        return ()

    @property
    def variables(self):
        return tuple(
            t.name for t in (self.left, self.right) if isinstance(t, Variable)
        )


# -- logical expressions -------------------------------------------------


@dataclass(frozen=True)
class Neg:
    operand: object

    def render(self, parent_prec=0) -> str:
        return "!" + _render_logic(self.operand, 3)


@dataclass(frozen=True)
class And:
    left: object
    right: object

    def render(self, parent_prec=0) -> str:
        text = "%s & %s" % (_render_logic(self.left, 2), _render_logic(self.right, 2))
        return "(%s)" % text if parent_prec > 2 else text


@dataclass(frozen=True)
class Or:
    left: object
    right: object

    def render(self, parent_prec=0) -> str:
        text = "%s | %s" % (_render_logic(self.left, 1), _render_logic(self.right, 1))
        return "(%s)" % text if parent_prec > 1 else text


@dataclass(frozen=True)
class Implies:
    body: object
    head: object

    def render(self, parent_prec=0) -> str:
        text = "%s -> %s" % (_render_logic(self.body, 1), _render_logic(self.head, 1))
        return "(%s)" % text if parent_prec > 0 else text


def _render_logic(node, parent_prec) -> str:
    if isinstance(node, (Atom, ComparisonAtom)):
        text = node.render()
        if isinstance(node, ComparisonAtom) and parent_prec > 0:
            return "(%s)" % text
        return text
    return node.render(parent_prec)


@dataclass(frozen=True)
class Literal:
    """Atom with a negation flag: one disjunct of a normalized clause."""

    atom: object
    negated: bool = False

    def render(self) -> str:
        inner = self.atom.render()
        if isinstance(self.atom, ComparisonAtom):
            inner = "(%s)" % inner
        return ("!" if self.negated else "") + inner


# -- coefficients --------------------------------------------------------


@dataclass(frozen=True)
class CoeffNumber:
    value: float

    def render(self) -> str:
        return _format_number(self.value)


@dataclass(frozen=True)
class CoeffCardinality:
    """|V|: the number of substitutions surviving V's select filter."""

    var: str

    def render(self) -> str:
        return "|%s|" % self.var


@dataclass(frozen=True)
class CoeffBuiltin:
    name: str
    args: tuple = ()

    def render(self) -> str:
        return "@%s[%s]" % (self.name, ", ".join(a.render() for a in self.args))


@dataclass(frozen=True)
class CoeffOp:
    op: str  # one of + - * /
    left: object
    right: object

    def render(self) -> str:
        prec = {"+": 1, "-": 1, "*": 2, "/": 2}[self.op]

        def side(node, min_prec):
            text = node.render()
            if isinstance(node, CoeffOp) and {"+": 1, "-": 1, "*": 2, "/": 2}[node.op] < min_prec:
                return "(%s)" % text
            return text

        return "%s %s %s" % (side(self.left, prec), self.op, side(self.right, prec + 1))


def _format_number(value: float) -> str:
    return repr(int(value)) if float(value).is_integer() else repr(value)


# -- rules ---------------------------------------------------------------


@dataclass(frozen=True)
class ArithTerm:
    """One summand: ``coeff * atom``, a bare atom, or a bare coefficient."""

    coeff: object = None
    atom: object = None

    def render(self) -> str:
        if self.atom is None:
            return self.coeff.render()
        if self.coeff is None:
            return self.atom.render()
        return "%s %s" % (self.coeff.render(), self.atom.render())


@dataclass(frozen=True)
class SelectStatement:
    var: str
    clause: object

    def render(self) -> str:
        return "{%s : %s}" % (self.var, _render_logic(self.clause, 0))


@dataclass(frozen=True)
class LogicalRule:
    expression: object
    weight: float | None = None
    squared: bool = False
    literals: tuple = None  # set once normalized to a flat disjunction

    kind = "logical"

    def render(self) -> str:
        text = _render_logic(self.expression, 0)
        return _decorate(text, self.weight, self.squared)


@dataclass(frozen=True)
class ArithmeticRule:
    lhs: tuple
    relation: str  # one of <= >= =
    rhs: tuple
    weight: float | None = None
    squared: bool = False
    selects: tuple = ()

    kind = "arithmetic"

    @property
    def sum_variables(self):
        names = []
        for term in self.lhs + self.rhs:
            if term.atom is not None:
                names.extend(term.atom.sum_variables)
        return tuple(names)

    def render(self) -> str:
        def combo(terms):
            return " + ".join(t.render() for t in terms)

        text = "%s %s %s" % (combo(self.lhs), self.relation, combo(self.rhs))
        text = _decorate(text, self.weight, self.squared)
        for sel in self.selects:
            text += "\n" + sel.render()
        return text


def _decorate(text, weight, squared) -> str:
    if weight is not None:
        text = "%s : %s" % (_format_number(weight), text)
    if squared:
        text += " ^2"
    if weight is None:
        text += " ."
    return text


@dataclass(frozen=True)
class Program:
    rules: tuple
    spans: tuple = ()  # (line, column) of each rule's first token

    def render(self) -> str:
        return "\n".join(rule.render() for rule in self.rules) + "\n"


def format_program(program: Program) -> str:
    return program.render()
