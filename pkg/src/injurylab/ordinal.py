"""Ordinals below epsilon_0 in Cantor normal form, plus notation systems.

An ordinal is represented by its list of CNF terms ``w^exponent * coefficient``
with strictly decreasing exponents (themselves ordinals) and coefficients >= 1.
The empty term list is 0.  Values are immutable and totally ordered.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from functools import total_ordering


@total_ordering
@dataclass(frozen=True)
class Cnf:
    """An ordinal below epsilon_0 in Cantor normal form."""

    terms: tuple  # tuple of (Cnf exponent, int coefficient)

    def __post_init__(self):
        prev = None
        for exp, coeff in self.terms:
            if not isinstance(exp, Cnf):
                raise TypeError("exponent must be a Cnf")
            if not isinstance(coeff, int) or coeff < 1:
                raise ValueError("coefficient must be a positive integer")
            if prev is not None and not exp < prev:
                raise ValueError("exponents must be strictly decreasing")
            prev = exp

    # -- ordering ------------------------------------------------------

    def _cmp(self, other: "Cnf") -> int:
        for (ea, ca), (eb, cb) in zip(self.terms, other.terms):
            c = ea._cmp(eb)
            if c != 0:
                return c
            if ca != cb:
                return -1 if ca < cb else 1
        if len(self.terms) == len(other.terms):
            return 0
        return -1 if len(self.terms) < len(other.terms) else 1

    def __lt__(self, other):
        if not isinstance(other, Cnf):
            return NotImplemented
        return self._cmp(other) < 0

    def __eq__(self, other):
        if not isinstance(other, Cnf):
            return NotImplemented
        return self.terms == other.terms

    def __hash__(self):
        return hash(self.terms)

    def __bool__(self):
        return bool(self.terms)

    # -- arithmetic ----------------------------------------------------

    def __add__(self, other: "Cnf") -> "Cnf":
        """Ordinal sum.  Terms of self below other's leading exponent vanish."""
        if not isinstance(other, Cnf):
            return NotImplemented
        if not other:
            return self
        if not self:
            return other
        lead = other.terms[0][0]
        kept = [t for t in self.terms if t[0] > lead]
        merged = list(other.terms)
        n = len(kept)
        if n < len(self.terms) and self.terms[n][0] == lead:
            merged[0] = (lead, self.terms[n][1] + merged[0][1])
        return Cnf(tuple(kept) + tuple(merged))

    def times_nat(self, n: int) -> "Cnf":
        """Product with a natural number (the only multiplication needed)."""
        if n < 0:
            raise ValueError("n must be >= 0")
        if n == 0 or not self:
            return ZERO
        (exp, coeff), rest = self.terms[0], self.terms[1:]
        return Cnf(((exp, coeff * n),) + rest)

    def is_additively_closed(self) -> bool:
        """True iff every sum of two smaller ordinals stays smaller.

        Holds exactly for 0 and the powers of omega (single term,
        coefficient 1); 1 = w^0 counts as a power.
        """
        if not self:
            return True
        return len(self.terms) == 1 and self.terms[0][1] == 1

    def is_finite(self) -> bool:
        return not self or (len(self.terms) == 1 and not self.terms[0][0])

    def nat_value(self) -> int:
        """The value of a finite ordinal as an int."""
        if not self:
            return 0
        if not self.is_finite():
            raise ValueError(f"{self} is not finite")
        return self.terms[0][1]

    def __str__(self):
        return format_cnf(self)

    def __repr__(self):
        return f"Cnf[{format_cnf(self)}]"


ZERO = Cnf(())
ONE = Cnf(((ZERO, 1),))


def nat(n: int) -> Cnf:
    """The finite ordinal n."""
    if n < 0:
        raise ValueError("n must be >= 0")
    return Cnf(((ZERO, n),)) if n else ZERO


def omega_power(exp: Cnf, coeff: int = 1) -> Cnf:
    """w^exp * coeff as a single-term ordinal."""
    return Cnf(((exp, coeff),))


OMEGA = omega_power(ONE)


def validate(a: Cnf) -> bool:
    """Walk the term structure and re-check the CNF invariant everywhere."""
    prev = None
    for exp, coeff in a.terms:
        if coeff < 1 or not validate(exp):
            return False
        if prev is not None and not exp < prev:
            return False
        prev = exp
    return True


# -- text grammar ------------------------------------------------------
#
#   EXPR  := '0' | TERM ('+' TERM)*
#   TERM  := NAT | 'w' [ '^' (NAT | 'w' | '(' EXPR ')') ] [ '*' NAT ]

_TOKEN = re.compile(r"\s*(\d+|[w^*+()])")


class CnfParseError(ValueError):
    pass


def _tokenize(text: str):
    out, pos = [], 0
    while pos < len(text):
        m = _TOKEN.match(text, pos)
        if not m:
            raise CnfParseError(f"bad character at {text[pos:]!r}")
        out.append(m.group(1))
        pos = m.end()
    return out


def parse_cnf(text: str) -> Cnf:
    """Parse the CNF text grammar: e.g. '0', 'w^w', 'w^2*3+w+5'."""
    toks = _tokenize(text)
    if not toks:
        raise CnfParseError("empty ordinal expression")
    val, rest = _parse_expr(toks)
    if rest:
        raise CnfParseError(f"trailing tokens {rest!r} in {text!r}")
    return val


def _parse_expr(toks):
    total = ZERO
    while True:
        term, toks = _parse_term(toks)
        total = total + term
        if toks and toks[0] == "+":
            toks = toks[1:]
        else:
            return total, toks


def _parse_term(toks):
    if not toks:
        raise CnfParseError("expected a term")
    tok = toks[0]
    if tok.isdigit():
        return nat(int(tok)), toks[1:]
    if tok != "w":
        raise CnfParseError(f"expected term, got {tok!r}")
    toks = toks[1:]
    exp = ONE
    if toks and toks[0] == "^":
        toks = toks[1:]
        if not toks:
            raise CnfParseError("dangling '^'")
        if toks[0].isdigit():
            exp, toks = nat(int(toks[0])), toks[1:]
        elif toks[0] == "w":
            exp, toks = OMEGA, toks[1:]
        elif toks[0] == "(":
            exp, toks = _parse_expr(toks[1:])
            if not toks or toks[0] != ")":
                raise CnfParseError("missing ')'")
            toks = toks[1:]
        else:
            raise CnfParseError(f"bad exponent {toks[0]!r}")
    coeff = 1
    if toks and toks[0] == "*":
        if len(toks) < 2 or not toks[1].isdigit():
            raise CnfParseError("'*' must be followed by a natural")
        coeff, toks = int(toks[1]), toks[2:]
    return omega_power(exp, coeff), toks


def format_cnf(a: Cnf) -> str:
    """Canonical text for an ordinal; parse_cnf(format_cnf(a)) == a."""
    if not a:
        return "0"
    parts = []
    for exp, coeff in a.terms:
        if not exp:
            parts.append(str(coeff))
            continue
        if exp == ONE:
            base = "w"
        elif exp.is_finite():
            base = f"w^{exp.nat_value()}"
        elif exp == OMEGA:
            base = "w^w"
        else:
            base = f"w^({format_cnf(exp)})"
        parts.append(base if coeff == 1 else f"{base}*{coeff}")
    return "+".join(parts)


def random_cnf_below(bound: Cnf, rng) -> Cnf:
    """A pseudo-random ordinal strictly below ``bound`` (which must be > 0)."""
    if not bound:
        raise ValueError("no ordinal below 0")
    i = rng.randrange(len(bound.terms))
    exp, coeff = bound.terms[i]
    kept = list(bound.terms[:i])
    new_coeff = rng.randrange(coeff)
    if new_coeff:
        kept.append((exp, new_coeff))
    tail_room = exp  # anything with exponents strictly below exp may follow
    out = Cnf(tuple(kept))
    return out + _random_tail(tail_room, rng)


def _random_tail(exp_bound: Cnf, rng) -> Cnf:
    """A small random ordinal below w^exp_bound."""
    if not exp_bound:
        return ZERO
    total = ZERO
    e = exp_bound
    for _ in range(rng.randrange(3)):
        if not e:
            break
        e = random_cnf_below(e, rng)
        total = total + omega_power(e, rng.randrange(1, 4))
    if rng.random() < 0.7 and (not total or total.terms[-1][0]):
        total = total + nat(rng.randrange(1, 6))
    return total


def descending_chain(start: Cnf, length: int, rng) -> list:
    """A strictly descending chain of ordinals starting at ``start``.

    Stops early when 0 is reached; the chain includes ``start``.
    """
    chain = [start]
    cur = start
    for _ in range(length - 1):
        if not cur:
            break
        cur = random_cnf_below(cur, rng)
        chain.append(cur)
    return chain


# -- notation systems --------------------------------------------------


class _Epsilon0:
    """Ceiling marker for order types: above every Cnf, never an operand."""

    def __gt__(self, other):
        return isinstance(other, Cnf)

    def __ge__(self, other):
        return isinstance(other, (Cnf, _Epsilon0))

    def __lt__(self, other):
        return False

    def __le__(self, other):
        return isinstance(other, _Epsilon0)

    def __repr__(self):
        return "epsilon_0"


EPSILON_0 = _Epsilon0()


class NotationSystem:
    """A computable well-order with a computable Cantor-normal-form map.

    The canonical system for order type ``alpha`` has the CNF values below
    ``alpha`` as its elements, compared by CNF comparison, so the normal-form
    map is the identity.
    """

    def __init__(self, order_type: Cnf):
        self.order_type = order_type

    def contains(self, z: Cnf) -> bool:
        return z < self.order_type

    def less(self, a: Cnf, b: Cnf) -> bool:
        return a < b

    def normal_form(self, z: Cnf) -> Cnf:
        if not self.contains(z):
            raise ValueError(f"{z} is not below {self.order_type}")
        return z


def collapse_to_omega(trace) -> "ChangeOrdering":
    """The order-type-omega well-order whose elements are the trace's changes.

    ``trace`` is anything with a ``changes()`` method yielding the pairs
    (x, s) where the approximated value at x differs between stages s and
    s+1, and a positive ``stages`` count.
    """
    if getattr(trace, "stages", 0) <= 0:
        raise ValueError("trace has no recorded window")
    return ChangeOrdering(trace.changes())


class ChangeOrdering:
    """The order-type-omega well-order built from a trace's change set.

    Elements are the pairs (x, s) at which the recorded approximation
    changed between stages s and s+1, ordered by: (x, s) < (x', s')  iff
    x < x'  or  (x = x' and s > s').
    """

    order_type = OMEGA

    def __init__(self, changes):
        self.elements = sorted(set(changes), key=lambda p: (p[0], -p[1]))
        self._rank = {p: i for i, p in enumerate(self.elements)}

    def less(self, a, b) -> bool:
        return self._rank[a] < self._rank[b]

    def rank(self, z) -> int:
        """Position of z in the order."""
        return self._rank[z]

    def normal_form(self, z) -> Cnf:
        """Position of z as a finite ordinal (the normal form below omega)."""
        return nat(self._rank[z])

    def omega_variant(self) -> "OmegaScaledOrdering":
        return OmegaScaledOrdering(self)


class OmegaScaledOrdering:
    """omega * R for a ChangeOrdering R: order type omega^2.

    Elements are pairs (n, z) with n a natural and z an element of R,
    denoting omega * |z| + n.  The limit-point set and the successor
    function are computable.
    """

    order_type = omega_power(nat(2))

    def __init__(self, base: ChangeOrdering):
        self.base = base

    def less(self, a, b) -> bool:
        (n, z), (m, w) = a, b
        if z != w:
            return self.base.less(z, w)
        return n < m

    def is_limit(self, elem) -> bool:
        """True when elem = (0, z) with z not the least base element.

        Such pairs denote omega * |z| for |z| >= 1, the limit points of
        omega^2; every other pair has an immediate predecessor (or is the
        least element overall).
        """
        n, z = elem
        if not self.base.elements:
            raise ValueError("empty base ordering")
        return n == 0 and z != self.base.elements[0]

    def successor(self, elem):
        n, z = elem
        return (n + 1, z)

    def value(self, elem) -> Cnf:
        n, z = elem
        rank = self.base.rank(z)
        if rank == 0:
            return nat(n)
        return OMEGA.times_nat(rank) + nat(n)
