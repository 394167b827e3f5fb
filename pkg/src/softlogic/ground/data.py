"""Text-based data ingestion: universe, predicates, observations.

The input has three kinds of statements, in any order as long as names are
declared before use:

    Person = {"Alexis", "Bob"}            // constants, grouped into types
    Advises(Professor, Student)           // open predicate
    Department(Person, Subject) (closed)  // closed predicate
    Advises("Alexis", "Don") = 1          // observation

Unlisted atoms of closed predicates are observed at 0; unlisted atoms of
open predicates stay unobserved. Constants may belong to several types.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass

from ..lang.ast import LangError
from ..lang.lexer import tokenize
from ..model import GroundAtom


class DataError(LangError):
    pass


@dataclass(frozen=True)
class PredicateDef:
    name: str
    arg_types: tuple[str, ...]
    closed: bool = False

    @property
    def arity(self) -> int:
        return len(self.arg_types)


class DataSet:
    """Typed universe, predicate declarations, and the observation map."""

    def __init__(self, universe=None, predicates=(), observations=None, functionals=None):
        self.universe: dict[str, tuple[str, ...]] = {
            t: tuple(cs) for t, cs in (universe or {}).items()
        }
        self.predicates: dict[str, PredicateDef] = {p.name: p for p in predicates}
        self.observations: dict[GroundAtom, float] = {}
        # Functionally defined predicates: name -> fn(*constants) -> [0, 1].
        # They behave as closed predicates whose values are computed on use.
        self.functionals: dict[str, callable] = dict(functionals or {})
        for atom, value in (observations or {}).items():
            self.add_observation(atom, value)

    def add_observation(self, atom: GroundAtom, value: float):
        pred = self.predicates.get(atom.predicate)
        if pred is None:
            raise DataError("observation for undeclared predicate %s" % atom.predicate)
        if len(atom.args) != pred.arity:
            raise DataError("%s takes %d arguments" % (pred.name, pred.arity))
        for arg, type_name in zip(atom.args, pred.arg_types):
            if arg not in self.universe.get(type_name, ()):
                raise DataError(
                    'constant "%s" is not declared with type %s' % (arg, type_name)
                )
        if not 0.0 <= value <= 1.0:
            raise DataError("observed value %r for %s outside [0, 1]" % (value, atom))
        self.observations[atom] = float(value)

    def register_functional(self, name: str, arg_types, fn):
        self.predicates[name] = PredicateDef(name, tuple(arg_types), closed=True)
        self.functionals[name] = fn

    def constants_of(self, type_name: str) -> tuple[str, ...]:
        """Constants of a type in lexicographic (grounding) order."""
        if type_name not in self.universe:
            raise DataError("unknown type %s" % type_name)
        return tuple(sorted(self.universe[type_name]))

    def atoms_of(self, predicate: str):
        """All well-typed ground atoms of one predicate, in grounding order."""
        pred = self.predicates[predicate]
        domains = [self.constants_of(t) for t in pred.arg_types]
        for combo in itertools.product(*domains):
            yield GroundAtom(predicate, combo)

    def base(self):
        """The full base: every atom of every declared predicate."""
        for name in sorted(self.predicates):
            if name in self.functionals:
                continue
            yield from self.atoms_of(name)

    def base_size(self) -> int:
        total = 0
        for name, pred in self.predicates.items():
            if name in self.functionals:
                continue
            count = 1
            for t in pred.arg_types:
                count *= len(self.universe.get(t, ()))
            total += count
        return total

    def observed_value(self, atom: GroundAtom):
        """Observation for an atom: a value in [0, 1] or None if unobserved."""
        pred = self.predicates.get(atom.predicate)
        if pred is None:
            raise DataError("unknown predicate %s" % atom.predicate)
        if atom.predicate in self.functionals:
            value = float(self.functionals[atom.predicate](*atom.args))
            if not 0.0 <= value <= 1.0:
                raise DataError("functional predicate %s returned %r" % (atom.predicate, value))
            return value
        if atom in self.observations:
            return self.observations[atom]
        return 0.0 if pred.closed else None


def load_data(text: str) -> DataSet:
    """Parse the text format described in the module docstring."""
    tokens = tokenize(text)
    data = DataSet()
    pos = 0

    def peek(ahead=0):
        return tokens[min(pos + ahead, len(tokens) - 1)]

    def fail(message, tok=None):
        tok = tok or peek()
        raise DataError(message, tok.line, tok.column)

    def expect(kind, what):
        nonlocal pos
        tok = peek()
        if tok.kind != kind:
            fail("expected %s, found %r" % (what, tok.text or "end of input"))
        pos += 1
        return tok

    while peek().kind != "EOF":
        name_tok = expect("IDENT", "a type or predicate name")
        name = name_tok.value
        tok = peek()
        if tok.kind == "EQ":
            pos += 1
            expect("LBRACE", "'{'")
            constants = []
            if peek().kind != "RBRACE":
                constants.append(expect("STRING", "a quoted constant").value)
                while peek().kind == "COMMA":
                    pos += 1
                    constants.append(expect("STRING", "a quoted constant").value)
            expect("RBRACE", "'}'")
            if name in data.universe:
                fail("type %s defined twice" % name, name_tok)
            if len(set(constants)) != len(constants):
                fail("type %s lists a constant twice" % name, name_tok)
            data.universe[name] = tuple(constants)
            continue
        if tok.kind != "LPAREN":
            fail("expected '=' or '(' after %s" % name)
        pos += 1
        first = peek()
        if first.kind == "IDENT":  # predicate declaration
            arg_types = [expect("IDENT", "a type name").value]
            while peek().kind == "COMMA":
                pos += 1
                arg_types.append(expect("IDENT", "a type name").value)
            expect("RPAREN", "')'")
            closed = False
            if (
                peek().kind == "LPAREN"
                and peek(1).kind == "IDENT"
                and peek(1).value == "closed"
                and peek(2).kind == "RPAREN"
            ):
                pos += 3
                closed = True
            if name in data.predicates:
                fail("predicate %s declared twice" % name, name_tok)
            for t in arg_types:
                if t not in data.universe:
                    fail("predicate %s uses undefined type %s" % (name, t), name_tok)
            data.predicates[name] = PredicateDef(name, tuple(arg_types), closed)
            continue
        if first.kind == "STRING":  # observation
            args = [expect("STRING", "a quoted constant").value]
            while peek().kind == "COMMA":
                pos += 1
                args.append(expect("STRING", "a quoted constant").value)
            expect("RPAREN", "')'")
            expect("EQ", "'='")
            value_tok = expect("NUMBER", "a value in [0, 1]")
            try:
                data.add_observation(GroundAtom(name, tuple(args)), value_tok.value)
            except DataError as exc:
                fail(str(exc), name_tok)
            continue
        fail("expected type names or quoted constants after '('")
    return data
