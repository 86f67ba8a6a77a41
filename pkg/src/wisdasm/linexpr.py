"""Sparse integer linear expressions over heuristic weight names.

Symbolic block weights, schedule weights, and inferred constraints are all
linear in the (unknown) heuristic weights. Expressions store exact integer
coefficients keyed by heuristic name; terms are kept in name order so that
arithmetic, rendering, and comparison are deterministic and independent of
any particular heuristic registry.

A constraint ``lhs > rhs`` is stored as the single difference expression
``lhs - rhs`` and rendered with its positive terms on the left and negated
negative terms on the right.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from .heuristics import BY_NAME, REGISTRY
from .model import ParseError


def _index_map(registry):
    return {h.name: i for i, h in enumerate(registry)}


@dataclass(frozen=True)
class LinearExpr:
    """Immutable sparse linear form: name-ordered (name, nonzero int coeff)."""

    terms: tuple = ()

    def __post_init__(self):
        previous = None
        for name, coeff in self.terms:
            if not isinstance(coeff, int) or coeff == 0:
                raise ValueError(f"bad coefficient {coeff!r} for '{name}'")
            if previous is not None and name <= previous:
                raise ValueError(f"terms out of name order at '{name}'")
            previous = name

    @classmethod
    def build(cls, mapping, registry=REGISTRY):
        known = {h.name for h in registry}
        items = [(n, c) for n, c in mapping.items() if c]
        for name, _ in items:
            if name not in known:
                raise KeyError(f"unknown heuristic '{name}'")
        items.sort()
        return cls(tuple(items))

    @classmethod
    def zero(cls):
        return cls(())

    @classmethod
    def from_counts(cls, counts, size, registry=REGISTRY):
        """Symbolic weight of a block from its match counts and byte size."""
        mapping = {}
        for heur in registry:
            n = counts.get(heur.name, 0)
            if n:
                mapping[heur.name] = n * (size if heur.proportional else 1)
        return cls.build(mapping, registry)

    def coeff(self, name):
        for n, c in self.terms:
            if n == name:
                return c
        return 0

    @property
    def is_zero(self):
        return not self.terms

    def _combine(self, other, sign):
        mapping = dict(self.terms)
        for name, coeff in other.terms:
            mapping[name] = mapping.get(name, 0) + sign * coeff
        return LinearExpr(tuple(sorted((n, c) for n, c in mapping.items() if c)))

    def __add__(self, other):
        return self._combine(other, 1)

    def __sub__(self, other):
        return self._combine(other, -1)

    def __neg__(self):
        return LinearExpr(tuple((n, -c) for n, c in self.terms))

    def scaled(self, factor):
        if factor == 0:
            return LinearExpr.zero()
        return LinearExpr(tuple((n, c * factor) for n, c in self.terms))

    def evaluate(self, weights):
        return sum(c * weights[n] for n, c in self.terms)

    def positive_class_sum(self, registry=REGISTRY):
        """Sum of coefficients on positive-class heuristics (tie-break key)."""
        positive = {h.name for h in registry if h.positive}
        return sum(c for n, c in self.terms if n in positive)

    def reduced(self):
        """Divide all coefficients by their gcd; zero stays zero."""
        if not self.terms:
            return self
        g = math.gcd(*(abs(c) for _, c in self.terms))
        if g <= 1:
            return self
        return LinearExpr(tuple((n, c // g) for n, c in self.terms))

    def split(self):
        """(positive terms, negated negative terms) for lhs/rhs rendering."""
        pos = tuple((n, c) for n, c in self.terms if c > 0)
        neg = tuple((n, -c) for n, c in self.terms if c < 0)
        return pos, neg

    def sort_key(self, registry=REGISTRY):
        idx = _index_map(registry)
        return tuple(sorted((idx[n], c) for n, c in self.terms))

    def __str__(self):
        return _render_side(self.terms)


def provably_nonneg(expr, registry=REGISTRY):
    """True when the expression is >= 0 for every sign-respecting weight
    vector: positive-class coefficients >= 0 and negative-class <= 0."""
    by_name = {h.name: h for h in registry}
    for name, coeff in expr.terms:
        heur = by_name[name]
        if heur.positive and coeff < 0:
            return False
        if not heur.positive and coeff > 0:
            return False
    return True


@dataclass(frozen=True)
class Constraint:
    """Strict inequality diff > 0 over the heuristic weights."""

    diff: LinearExpr

    @classmethod
    def greater(cls, lhs, rhs):
        return cls((lhs - rhs).reduced())

    def canonical(self):
        return Constraint(self.diff.reduced())

    def satisfied(self, weights):
        return self.diff.evaluate(weights) > 0

    @property
    def is_degenerate(self):
        """0 > 0: unsatisfiable for every weight vector."""
        return self.diff.is_zero

    def sort_key(self, registry=REGISTRY):
        return self.diff.sort_key(registry)

    def __str__(self):
        lhs, rhs = self.diff.split()
        return f"{_render_side(lhs)} > {_render_side(rhs)}"


def _render_side(terms):
    if not terms:
        return "0"
    return " + ".join(f"{c}*{n}" for n, c in terms)


def _parse_side(text, lineno, idx):
    text = text.strip()
    if text == "0":
        return {}
    mapping = {}
    for piece in text.split("+"):
        piece = piece.strip()
        if "*" not in piece:
            raise ParseError(f"expected '<coeff>*<name>', got '{piece}'", lineno)
        coeff_text, name = piece.split("*", 1)
        name = name.strip()
        try:
            coeff = int(coeff_text.strip())
        except ValueError:
            raise ParseError(f"bad coefficient '{coeff_text.strip()}'", lineno) from None
        if coeff <= 0:
            raise ParseError(f"coefficients must be positive, got {coeff}", lineno)
        if name not in idx:
            raise ParseError(f"unknown heuristic '{name}'", lineno)
        if name in mapping:
            raise ParseError(f"repeated heuristic '{name}' on one side", lineno)
        mapping[name] = coeff
    return mapping


# --- constraints file format ---------------------------------------------
#
#   SIGNS <name>:<pos|neg> ...          (one line, full registry order)
#   C <coeff>*<name> [+ ...] > <coeff>*<name> [+ ...]
#
# Either side may be the literal 0. '#' starts a comment.


def format_constraints(constraints, registry=REGISTRY):
    signs = " ".join(f"{h.name}:{'pos' if h.positive else 'neg'}" for h in registry)
    lines = [f"SIGNS {signs}"]
    for con in sorted(constraints, key=lambda c: c.sort_key(registry)):
        lines.append(f"C {con}")
    return "\n".join(lines) + "\n"


def parse_constraints(text, registry=REGISTRY):
    idx = _index_map(registry)
    constraints = []
    saw_signs = False
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if line.startswith("SIGNS"):
            if saw_signs:
                raise ParseError("duplicate SIGNS line", lineno)
            saw_signs = True
            declared = line.split()[1:]
            expected = [f"{h.name}:{'pos' if h.positive else 'neg'}" for h in registry]
            if declared != expected:
                raise ParseError("SIGNS line does not match the heuristic registry", lineno)
            continue
        if not line.startswith("C "):
            raise ParseError("expected 'C <lhs> > <rhs>'", lineno)
        body = line[2:]
        if ">" not in body:
            raise ParseError("constraint must contain '>'", lineno)
        lhs_text, rhs_text = body.split(">", 1)
        lhs = _parse_side(lhs_text, lineno, idx)
        rhs = _parse_side(rhs_text, lineno, idx)
        diff = LinearExpr.build(lhs, registry) - LinearExpr.build(rhs, registry)
        constraints.append(Constraint(diff))
    if not saw_signs:
        raise ParseError("missing SIGNS header line")
    return tuple(constraints)


def load_constraints(path, registry=REGISTRY):
    with open(path, "r", encoding="utf-8") as fh:
        return parse_constraints(fh.read(), registry)


def save_constraints(path, constraints, registry=REGISTRY):
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(format_constraints(constraints, registry))
