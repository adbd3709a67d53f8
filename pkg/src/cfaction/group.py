"""Exact arithmetic in the group G = Z x (R x| Z/2).

An element is a triple (x, a, eps) with x an integer, a an exact rational
and eps a bit.  Multiplication twists the real coordinate by the sign
(-1)**eps of the left factor:

    (x, a, n) * (y, b, m) = (x + y, a + (-1)**n * b, (n + m) mod 2).

The center consists of the elements (x, 0, 0).  The two-element compact
subgroups are {identity, (0, b, 1)}; the nontrivial element of each is an
involution, and any two such subgroups are conjugate.

Everything here is immutable and uses exact rationals; there is no floating
point anywhere.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from numbers import Rational


def _rat(value) -> Fraction:
    """Coerce an int / Fraction / rational string to an exact Fraction."""
    if isinstance(value, Fraction):
        return value
    if isinstance(value, (int, str, Rational)):
        return Fraction(value)
    raise TypeError(f"expected an exact rational, got {type(value).__name__}")


@dataclass(frozen=True)
class GroupElement:
    """A point (x, a, eps) of Z x (R x| Z/2) with exact coordinates."""

    x: int
    a: Fraction
    eps: int

    def __post_init__(self):
        if not isinstance(self.x, int):
            raise TypeError("integer coordinate must be an int")
        object.__setattr__(self, "a", _rat(self.a))
        if self.eps not in (0, 1):
            raise ValueError("eps coordinate must be 0 or 1")

    def __repr__(self):
        return f"({self.x}, {self.a}, {self.eps})"


IDENTITY = GroupElement(0, Fraction(0), 0)


def element(x, a, eps) -> GroupElement:
    return GroupElement(int(x), _rat(a), int(eps))


def multiply(g: GroupElement, h: GroupElement) -> GroupElement:
    """Group product g*h; the real part of h is reflected when g.eps = 1."""
    real = g.a - h.a if g.eps else g.a + h.a
    return GroupElement(g.x + h.x, real, g.eps ^ h.eps)


def multiply_all(*elems: GroupElement) -> GroupElement:
    out = IDENTITY
    for e in elems:
        out = multiply(out, e)
    return out


def invert(g: GroupElement) -> GroupElement:
    """Inverse of g.  Elements at level 1 keep their real part."""
    real = g.a if g.eps else -g.a
    return GroupElement(-g.x, real, g.eps)


def conjugate(g: GroupElement, h: GroupElement) -> GroupElement:
    """g * h * g^-1."""
    return multiply(multiply(g, h), invert(g))


def phi(atilde_n: int, i: int, j: int) -> GroupElement:
    """The lattice homomorphism (i, j) -> (2*i*atilde_n, 2*j*atilde_n, 0).

    It is additive on Z^2; its image lies in the index-two abelian subgroup
    Z x R x {0}, and the image of (i, 0) is central in all of G.
    """
    if atilde_n < 1:
        raise ValueError("scale atilde_n must be a positive integer")
    return GroupElement(2 * i * atilde_n, Fraction(2 * j * atilde_n), 0)


def phi_pair(atilde_n: int, h: tuple[int, int]) -> GroupElement:
    return phi(atilde_n, h[0], h[1])


def project_level(g: GroupElement) -> int:
    """Projection onto the Z/2 coordinate."""
    return g.eps


def is_central(g: GroupElement) -> bool:
    """True iff g commutes with every element, i.e. g = (x, 0, 0)."""
    return g.eps == 0 and g.a == 0


@dataclass(frozen=True)
class CompactSubgroup:
    """The two-element subgroup {(0,0,0), (0,b,1)}."""

    b: Fraction

    def __post_init__(self):
        object.__setattr__(self, "b", _rat(self.b))

    @property
    def flip(self) -> GroupElement:
        """The nonidentity element; it squares to the identity."""
        return GroupElement(0, self.b, 1)

    def elements(self) -> tuple[GroupElement, GroupElement]:
        return (IDENTITY, self.flip)

    def __contains__(self, g: GroupElement) -> bool:
        return g == IDENTITY or g == self.flip


def conjugate_witness(a, b) -> GroupElement:
    """An element h with h * (0,a,1) * h^-1 = (0,b,1).

    Conjugation by h = (0, (a+b)/2, 1) carries the two-element subgroup of
    parameter a onto the one of parameter b, witnessing that all of them
    are conjugate to each other.
    """
    return GroupElement(0, (_rat(a) + _rat(b)) / 2, 1)
