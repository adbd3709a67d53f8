"""Exact algebra of finite unions of boxes in Z x R x Z/2.

A :class:`Box` is a product set

    {z integer : zlo < z <= zhi} x {t real : p < t <= q} x {eps},

i.e. a half-open integer range times a half-open rational interval on one of
the two levels.  A :class:`BoxSet` is a finite disjoint union of boxes kept
in a canonical form, and all set predicates are understood modulo
lambda-null sets, where lambda = counting x Lebesgue x counting is the Haar
measure of the group.  Left translation by a level-1 element reflects real
intervals, producing sets of the form [c, d); these differ from (c, d] by a
null set and are renormalized on canonicalization.  The half-open
convention makes the tower tilings exact: adjacent translates never
overlap and never leave gaps.

Canonical form: within each level, the integer axis is cut at every
breakpoint, each elementary integer range carries a sorted merged interval
list, and adjacent ranges with identical interval lists are re-merged.
Two box sets are equal modulo null sets iff their canonical forms are
identical, which makes "exact set equality" a decidable predicate.

The module also houses :class:`DiscreteDist`, finite probability
distributions with exact rational masses, the L1 distance and pushforward
used by the certification routines.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from typing import Callable, Iterable, NamedTuple

from .group import GroupElement, _rat, invert, multiply


class Box(NamedTuple):
    """One rectangle {zlo < z <= zhi} x {p < t <= q} x {eps}."""

    eps: int
    zlo: int
    zhi: int
    p: Fraction
    q: Fraction

    @property
    def measure(self) -> Fraction:
        return (self.zhi - self.zlo) * (self.q - self.p)

    def contains_point(self, g: GroupElement) -> bool:
        """Exact pointwise membership (endpoint-aware, not modulo null)."""
        return (
            g.eps == self.eps
            and self.zlo < g.x <= self.zhi
            and self.p < g.a <= self.q
        )


def box(eps: int, zlo: int, zhi: int, p, q) -> Box:
    p, q = _rat(p), _rat(q)
    if zlo >= zhi:
        raise ValueError("integer range must be nonempty: zlo < zhi")
    if p >= q:
        raise ValueError("interval must be nondegenerate: p < q")
    if eps not in (0, 1):
        raise ValueError("eps must be 0 or 1")
    return Box(eps, int(zlo), int(zhi), p, q)


def _merge_intervals(intervals: list[tuple[Fraction, Fraction]]) -> tuple:
    """Union of half-open intervals, sorted and merged (touching ones fuse)."""
    if not intervals:
        return ()
    intervals = sorted(intervals)
    out = [list(intervals[0])]
    for p, q in intervals[1:]:
        if p <= out[-1][1]:
            if q > out[-1][1]:
                out[-1][1] = q
        else:
            out.append([p, q])
    return tuple((p, q) for p, q in out)


def _intersect_lists(xs: tuple, ys: tuple) -> tuple:
    out = []
    i = j = 0
    while i < len(xs) and j < len(ys):
        p = max(xs[i][0], ys[j][0])
        q = min(xs[i][1], ys[j][1])
        if p < q:
            out.append((p, q))
        if xs[i][1] <= ys[j][1]:
            i += 1
        else:
            j += 1
    return tuple(out)


def _subtract_lists(xs: tuple, ys: tuple) -> tuple:
    out = []
    for p, q in xs:
        cur = p
        for yp, yq in ys:
            if yq <= cur:
                continue
            if yp >= q:
                break
            if yp > cur:
                out.append((cur, yp))
            cur = max(cur, yq)
            if cur >= q:
                break
        if cur < q:
            out.append((cur, q))
    return tuple(out)


class BoxSet:
    """A finite disjoint union of boxes in canonical form."""

    __slots__ = ("boxes",)

    def __init__(self, boxes: Iterable[Box | tuple] = (), *, _canonical=False):
        if _canonical:
            self.boxes = tuple(boxes)
        else:
            self.boxes = _canonicalize([Box(*b) for b in boxes])

    # -- construction helpers -------------------------------------------------

    @staticmethod
    def empty() -> "BoxSet":
        return _EMPTY

    @staticmethod
    def from_box(eps, zlo, zhi, p, q) -> "BoxSet":
        return BoxSet([box(eps, zlo, zhi, p, q)])

    @staticmethod
    def symmetric(radius_z: int, radius_r) -> "BoxSet":
        """The full product box (-rz, rz] x (-rr, rr] x Z/2."""
        rr = _rat(radius_r)
        return BoxSet(
            [box(0, -radius_z, radius_z, -rr, rr), box(1, -radius_z, radius_z, -rr, rr)]
        )

    # -- basic queries --------------------------------------------------------

    @property
    def measure(self) -> Fraction:
        return sum((b.measure for b in self.boxes), Fraction(0))

    def is_empty(self) -> bool:
        return not self.boxes

    def contains_point(self, g: GroupElement) -> bool:
        return any(b.contains_point(g) for b in self.boxes)

    def __eq__(self, other):
        return isinstance(other, BoxSet) and self.boxes == other.boxes

    def __hash__(self):
        return hash(self.boxes)

    def __repr__(self):
        if not self.boxes:
            return "BoxSet(empty)"
        return f"BoxSet({len(self.boxes)} boxes, measure={self.measure})"

    def bounds(self):
        """Per-level bounding data: eps -> (zlo, zhi, p, q) hull or None."""
        out: dict = {0: None, 1: None}
        for b in self.boxes:
            cur = out[b.eps]
            if cur is None:
                out[b.eps] = [b.zlo, b.zhi, b.p, b.q]
            else:
                cur[0] = min(cur[0], b.zlo)
                cur[1] = max(cur[1], b.zhi)
                cur[2] = min(cur[2], b.p)
                cur[3] = max(cur[3], b.q)
        return out


def _canonicalize(boxes: list[Box]) -> tuple:
    out = []
    for eps in (0, 1):
        level = [b for b in boxes if b.eps == eps]
        if not level:
            continue
        cuts = sorted({b.zlo for b in level} | {b.zhi for b in level})
        pieces = []
        for zlo, zhi in zip(cuts, cuts[1:]):
            ivals = [
                (b.p, b.q) for b in level if b.zlo <= zlo and zhi <= b.zhi
            ]
            merged = _merge_intervals(ivals)
            if merged:
                pieces.append([zlo, zhi, merged])
        merged_pieces = []
        for piece in pieces:
            if (
                merged_pieces
                and merged_pieces[-1][1] == piece[0]
                and merged_pieces[-1][2] == piece[2]
            ):
                merged_pieces[-1][1] = piece[1]
            else:
                merged_pieces.append(piece)
        for zlo, zhi, ivals in merged_pieces:
            for p, q in ivals:
                out.append(Box(eps, zlo, zhi, p, q))
    out.sort()
    return tuple(out)


_EMPTY = BoxSet([], _canonical=True)


# -- measure and set operations ----------------------------------------------


def measure(s: BoxSet) -> Fraction:
    """Haar measure: counting on both discrete axes, Lebesgue on the reals."""
    return s.measure


def _combine(a: BoxSet, b: BoxSet, op: Callable[[tuple, tuple], tuple]) -> BoxSet:
    out = []
    for eps in (0, 1):
        la = [x for x in a.boxes if x.eps == eps]
        lb = [x for x in b.boxes if x.eps == eps]
        if not la and not lb:
            continue
        cuts = sorted(
            {x.zlo for x in la} | {x.zhi for x in la} | {x.zlo for x in lb} | {x.zhi for x in lb}
        )
        for zlo, zhi in zip(cuts, cuts[1:]):
            xs = tuple(
                (x.p, x.q) for x in la if x.zlo <= zlo and zhi <= x.zhi
            )
            ys = tuple(
                (x.p, x.q) for x in lb if x.zlo <= zlo and zhi <= x.zhi
            )
            for p, q in op(xs, ys):
                out.append(Box(eps, zlo, zhi, p, q))
    return BoxSet(out)


def combine(a: BoxSet, b: BoxSet, op: str) -> BoxSet:
    """Exact Boolean operation; op is intersect|union|subtract|symdiff."""
    if op == "union":
        return BoxSet(list(a.boxes) + list(b.boxes))
    if op == "intersect":
        return _combine(a, b, _intersect_lists)
    if op == "subtract":
        return _combine(a, b, _subtract_lists)
    if op == "symdiff":
        return _combine(
            a,
            b,
            lambda xs, ys: _merge_intervals(
                list(_subtract_lists(xs, ys)) + list(_subtract_lists(ys, xs))
            ),
        )
    raise ValueError(f"unknown set operation {op!r}")


def intersect(a: BoxSet, b: BoxSet) -> BoxSet:
    return combine(a, b, "intersect")


def union(a: BoxSet, b: BoxSet) -> BoxSet:
    return combine(a, b, "union")


def subtract(a: BoxSet, b: BoxSet) -> BoxSet:
    return combine(a, b, "subtract")


def is_subset_mod_null(a: BoxSet, b: BoxSet) -> bool:
    """True iff a is contained in b up to a lambda-null set."""
    return subtract(a, b).measure == 0


def equal_mod_null(a: BoxSet, b: BoxSet) -> bool:
    return a.boxes == b.boxes


# -- group actions on box sets -------------------------------------------------


def translate_box(g: GroupElement, b: Box, side: str) -> Box:
    """Translate one box; left translation by a level-1 element reflects.

    The reflected interval [g.a - q, g.a - p) is renormalized to the
    equivalent half-open form (g.a - q, g.a - p], a null-set change.
    """
    if side == "left":
        zlo, zhi = b.zlo + g.x, b.zhi + g.x
        if g.eps == 0:
            p, q = b.p + g.a, b.q + g.a
        else:
            p, q = g.a - b.q, g.a - b.p
        return Box(g.eps ^ b.eps, zlo, zhi, p, q)
    if side == "right":
        zlo, zhi = b.zlo + g.x, b.zhi + g.x
        shift = -g.a if b.eps else g.a
        return Box(b.eps ^ g.eps, zlo, zhi, b.p + shift, b.q + shift)
    raise ValueError("side must be 'left' or 'right'")


def translate(g: GroupElement, s: BoxSet, side: str) -> BoxSet:
    """g*s (left) or s*g (right), in canonical form modulo null sets."""
    return BoxSet([translate_box(g, b, side) for b in s.boxes])


def invert_set(s: BoxSet) -> BoxSet:
    """{g^-1 : g in s} in canonical form modulo null sets.

    On level 0 both coordinates negate; on level 1 the real part is fixed.
    The integer range (zlo, zhi] maps onto (-zhi-1, -zlo-1].
    """
    out = []
    for b in s.boxes:
        zlo, zhi = -b.zhi - 1, -b.zlo - 1
        if b.eps == 0:
            out.append(Box(0, zlo, zhi, -b.q, -b.p))
        else:
            out.append(Box(1, zlo, zhi, b.p, b.q))
    return BoxSet(out)


def product(a: BoxSet, b: BoxSet) -> BoxSet:
    """Algebraic product {g*h : g in a, h in b}, exact modulo null sets."""
    out = []
    for x in a.boxes:
        for y in b.boxes:
            zlo, zhi = x.zlo + y.zlo + 1, x.zhi + y.zhi
            if x.eps == 0:
                p, q = x.p + y.p, x.q + y.q
            else:
                p, q = x.p - y.q, x.q - y.p
            out.append(Box(x.eps ^ y.eps, zlo, zhi, p, q))
    return BoxSet(out)


class SpreadResult(NamedTuple):
    set: BoxSet
    disjoint: bool


def spread(s: BoxSet, elems: Iterable[GroupElement], side: str) -> SpreadResult:
    """Union of the translates of s by each element, with a disjointness flag.

    The flag is exact: the translates are pairwise disjoint modulo null sets
    iff the measure of the union equals the sum of the translate measures.
    """
    boxes = []
    total = Fraction(0)
    for e in elems:
        for b in s.boxes:
            nb = translate_box(e, b, side)
            boxes.append(nb)
            total += nb.measure
    result = BoxSet(boxes)
    return SpreadResult(result, result.measure == total)


# -- finite probability distributions ------------------------------------------


class DiscreteDist:
    """A finite probability distribution with exact rational masses."""

    __slots__ = ("mass",)

    def __init__(self, mass: dict):
        clean = {}
        total = Fraction(0)
        for atom, m in mass.items():
            m = _rat(m)
            if m < 0:
                raise ValueError("negative mass")
            if m:
                clean[atom] = m
                total += m
        if total != 1:
            raise ValueError(f"masses must sum to 1, got {total}")
        self.mass = clean

    @staticmethod
    def uniform(atoms) -> "DiscreteDist":
        atoms = list(atoms)
        n = len(atoms)
        if n == 0:
            raise ValueError("uniform distribution needs at least one atom")
        w = Fraction(1, n)
        out: dict = {}
        for a in atoms:
            out[a] = out.get(a, Fraction(0)) + w
        return DiscreteDist(out)

    @staticmethod
    def from_counts(counts: dict) -> "DiscreteDist":
        total = sum(counts.values())
        return DiscreteDist({a: Fraction(c, total) for a, c in counts.items() if c})

    def __call__(self, atom) -> Fraction:
        return self.mass.get(atom, Fraction(0))

    def __eq__(self, other):
        return isinstance(other, DiscreteDist) and self.mass == other.mass

    def __repr__(self):
        return f"DiscreteDist({len(self.mass)} atoms)"


def dist_l1(d1: DiscreteDist, d2: DiscreteDist) -> Fraction:
    """Total variation style L1 distance, an exact rational in [0, 2]."""
    support = set(d1.mass) | set(d2.mass)
    return sum((abs(d1(a) - d2(a)) for a in support), Fraction(0))


def l1_to_uniform(d: DiscreteDist, total_atoms: int) -> Fraction:
    """L1 distance from d to the uniform distribution on total_atoms atoms.

    The uniform side never needs materializing: atoms outside the support
    of d each contribute exactly 1/total_atoms.
    """
    u = Fraction(1, total_atoms)
    seen = len(d.mass)
    if seen > total_atoms:
        raise ValueError("support larger than the uniform universe")
    acc = sum((abs(m - u) for m in d.mass.values()), Fraction(0))
    return acc + (total_atoms - seen) * u


def pushforward(d: DiscreteDist, f: Callable) -> DiscreteDist:
    """Image distribution of d under the atom map f."""
    out: dict = {}
    for atom, m in d.mass.items():
        img = f(atom)
        out[img] = out.get(img, Fraction(0)) + m
    return DiscreteDist(out)
