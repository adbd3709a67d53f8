"""Points of the inductive-limit space, the action, and cylinder measures.

A point is a truncated expansion: a base level n, a coordinate f inside
the level box F_n, and a tail of window digits h_n, h_{n+1}, ...; digit
h_k selects the translate c_{k+1}(h_k) used when the point is re-read one
level deeper,

    (f, h_k, h_{k+1}, ...)  ->  (f * c_{k+1}(h_k), h_{k+1}, ...).

The action of a group element g re-reads the point deep enough that the
new coordinate g * f * c lands inside the next level box and applies it
there; operations that would need digits beyond the truncation fail
loudly with :class:`TailExhausted` rather than inventing a tail.

Measures are exact rationals.  The finite-depth surrogate normalizes the
deepest built level to mass one, so an n-cylinder [A]_n has measure
w_n * lambda(A)/lambda(F_n) with the exact weight w_n = mu(X_n)/mu(X_N);
all identities tested are covariant under this normalization, and the
weights converge to the classical normalization as the depth grows.

The exact evaluator for mu(T_g [A]_n intersect [B]_n) refines cylinder
pieces until each transports (g * piece inside its level box), translates
the boxes, intersects, and sums.  Pieces still untransportable at the
deepest built level are never approximated: their total mass is reported
exactly (partial mode) or raises :class:`DepthExhausted` (strict mode).
"""

from __future__ import annotations

import math
from bisect import bisect_right
from dataclasses import dataclass
from fractions import Fraction
from random import Random
from typing import Optional, Sequence

from . import boxset as bs
from .boxset import BoxSet
from .group import GroupElement, invert, multiply, _rat
from .tower import ConstructionError, Tower, square_grid


class TailExhausted(Exception):
    """The operation needs expansion digits beyond the truncation."""

    def __init__(self, message, needed_level=None):
        super().__init__(message)
        self.needed_level = needed_level


class DepthExhausted(Exception):
    """An exact measure evaluation would need levels beyond the built depth."""

    def __init__(self, message, needed_depth=None, unreachable=None):
        super().__init__(message)
        self.needed_depth = needed_depth
        self.unreachable = unreachable


GridPoint = tuple[int, int]


@dataclass(frozen=True)
class PointExpansion:
    level: int
    f: GroupElement
    digits: tuple[GridPoint, ...]

    def key(self):
        return (self.level, self.f.x, self.f.a, self.f.eps, self.digits)


@dataclass(frozen=True)
class Cylinder:
    """The set of points whose level-n coordinate lies in A, A inside F_n."""

    level: int
    A: BoxSet


class MeasureContext:
    """Tower plus the exact normalization weights of each level."""

    def __init__(self, tower: Tower):
        self.tower = tower
        self.depth = tower.depth
        mu = []
        prod = 1
        for n in range(self.depth + 1):
            if n > 0:
                prod *= tower.c_count(n)
            mu.append(Fraction(tower.F(n).measure, prod))
        self.weights = tuple(m / mu[self.depth] for m in mu)
        self._refine_cache: dict = {}
        self._index_cache: dict = {}

    @staticmethod
    def build(r_seq, master_seed) -> "MeasureContext":
        return MeasureContext(Tower.build(r_seq, master_seed))

    @property
    def params(self):
        return self.tower.params

    def weight(self, n: int) -> Fraction:
        return self.weights[n]

    def F(self, n: int) -> BoxSet:
        return self.tower.F(n)

    def cylinder(self, level: int, A: BoxSet) -> Cylinder:
        if not bs.is_subset_mod_null(A, self.F(level)):
            raise ValueError(f"set is not contained in the level-{level} box")
        return Cylinder(level, A)

    def full_cylinder(self, level: Optional[int] = None) -> Cylinder:
        level = self.depth if level is None else level
        return Cylinder(level, self.F(level))

    # -- cylinder measures ------------------------------------------------

    def cylinder_measure(self, c: Cylinder) -> Fraction:
        if c.level > self.depth:
            raise ValueError(f"cylinder level {c.level} beyond depth {self.depth}")
        return self.weight(c.level) * c.A.measure / self.F(c.level).measure

    def refined_boxset(self, c: Cylinder, to_level: int) -> BoxSet:
        if to_level < c.level:
            raise ValueError("can only refine to a deeper level")
        if to_level > self.depth:
            raise ValueError(f"refinement level {to_level} beyond depth {self.depth}")
        key = (c.level, to_level, c.A)
        if key in self._refine_cache:
            return self._refine_cache[key]
        A = c.A
        for k in range(c.level, to_level):
            result = bs.spread(A, self.tower.translates(k + 1), "right")
            if not result.disjoint:
                raise ConstructionError(
                    f"refinement translates overlap at level {k}"
                )
            A = result.set
        self._refine_cache[key] = A
        return A

    def refine_cylinder(self, c: Cylinder, to_level: int) -> Cylinder:
        return Cylinder(to_level, self.refined_boxset(c, to_level))

    def point_index(self, c: Cylinder, level: int) -> "PointIndex":
        key = (c.level, level, c.A)
        if key not in self._index_cache:
            self._index_cache[key] = PointIndex(self.refined_boxset(c, level))
        return self._index_cache[key]

    # -- the exact transported-intersection evaluator ----------------------

    def intersect_measure(
        self, g: GroupElement, a: Cylinder, b: Cylinder
    ) -> Fraction:
        value, unreachable = self.intersect_measure_partial(g, a, b)
        if unreachable:
            raise DepthExhausted(
                f"evaluating the transport of {g} exactly needs depth "
                f"{self.depth + 1}; unreachable mass {unreachable}",
                needed_depth=self.depth + 1,
                unreachable=unreachable,
            )
        return value

    def intersect_measure_partial(
        self, g: GroupElement, a: Cylinder, b: Cylinder
    ) -> tuple[Fraction, Fraction]:
        """Exact mu(T_g[a] intersect [b]) plus the exact untransported mass.

        The true value lies in [value, value + unreachable]; unreachable is
        the mass of pieces whose transport needs levels beyond the depth.
        """
        n0 = max(a.level, b.level)
        value = Fraction(0)
        unreachable = Fraction(0)
        work = [(n0, self.refined_boxset(a, n0))]
        while work:
            k, P = work.pop()
            if P.is_empty():
                continue
            Fk = self.F(k)
            ginvF = bs.translate(invert(g), Fk, "left")
            Pin = bs.intersect(P, ginvF)
            if not Pin.is_empty():
                moved = bs.translate(g, Pin, "left")
                hit = bs.intersect(moved, self.refined_boxset(b, k))
                value += self.weight(k) * hit.measure / Fk.measure
            Pout = bs.subtract(P, ginvF)
            if Pout.is_empty():
                continue
            if k == self.depth:
                unreachable += self.weight(k) * Pout.measure / Fk.measure
            else:
                nxt = bs.spread(Pout, self.tower.translates(k + 1), "right")
                work.append((k + 1, nxt.set))
        return value, unreachable

    # -- lattice bookkeeping for off-grid sampling --------------------------

    def lattice_den(self, extra: Sequence[int] = ()) -> int:
        den = 1
        for n in range(1, self.depth + 1):
            den = math.lcm(den, n * n)
        for e in extra:
            den = math.lcm(den, int(e))
        return den


class PointIndex:
    """Membership index for a box set: (eps, z) -> sorted interval list."""

    def __init__(self, s: BoxSet):
        table: dict = {}
        for b in s.boxes:
            for z in range(b.zlo + 1, b.zhi + 1):
                table.setdefault((b.eps, z), []).append((b.p, b.q))
        self.table = {k: sorted(v) for k, v in table.items()}

    def contains(self, g: GroupElement) -> bool:
        row = self.table.get((g.eps, g.x))
        if not row:
            return False
        i = bisect_right(row, (g.a,)) - 1
        for j in (i, i + 1):
            if 0 <= j < len(row) and row[j][0] < g.a <= row[j][1]:
                return True
        return False


# -- expansions ---------------------------------------------------------------------


def embed_point(ctx: MeasureContext, x: PointExpansion) -> PointExpansion:
    """Re-read the point one level deeper by folding in its next digit."""
    if not x.digits:
        raise TailExhausted(
            f"expansion at level {x.level} has no further digits",
            needed_level=x.level + 1,
        )
    h = x.digits[0]
    smap = ctx.tower.maps[x.level]
    f2 = multiply(x.f, smap.c(h))
    if not ctx.F(x.level + 1).contains_point(f2):
        raise ConstructionError(
            f"embedded coordinate {f2} escaped the level-{x.level + 1} box"
        )
    return PointExpansion(x.level + 1, f2, x.digits[1:])


def normalize_point(
    ctx: MeasureContext, x: PointExpansion, to_level: int
) -> PointExpansion:
    if to_level < x.level:
        raise ValueError("points cannot be un-embedded")
    while x.level < to_level:
        x = embed_point(ctx, x)
    return x


def points_equal(ctx: MeasureContext, x: PointExpansion, y: PointExpansion) -> bool:
    lvl = max(x.level, y.level)
    return normalize_point(ctx, x, lvl) == normalize_point(ctx, y, lvl)


def act(ctx: MeasureContext, g: GroupElement, x: PointExpansion) -> PointExpansion:
    """Apply T_g: promote until g lands the new coordinate in its level box.

    The candidate coordinate at base level k is g * f_k * c_{k+1}(h_k);
    the first level at which it lies in F_{k+1} (an exact, endpoint-aware
    membership test) is used.  Running out of digits raises TailExhausted
    with the level that would have been needed.
    """
    cur = x
    while True:
        if not cur.digits:
            raise TailExhausted(
                f"acting by {g} needs digits below level {cur.level}",
                needed_level=cur.level + 1,
            )
        smap = ctx.tower.maps[cur.level]
        cand = multiply(g, multiply(cur.f, smap.c(cur.digits[0])))
        if ctx.F(cur.level + 1).contains_point(cand):
            return PointExpansion(cur.level + 1, cand, cur.digits[1:])
        cur = embed_point(ctx, cur)


def point_in_cylinder(ctx: MeasureContext, x: PointExpansion, c: Cylinder) -> bool:
    if x.level < c.level:
        x = normalize_point(ctx, x, c.level)
    return ctx.point_index(c, x.level).contains(x.f)


# -- the level-flip involutions -------------------------------------------------------


def involution_apply(ctx: MeasureContext, b, x: PointExpansion) -> PointExpansion:
    """The factor involution S_b = T_(0,b,1); an exact involution on points."""
    return act(ctx, GroupElement(0, _rat(b), 1), x)


def factor_key(ctx: MeasureContext, b, x: PointExpansion):
    """Canonical representative of the two-point orbit {x, S_b x}.

    Both points are normalized to the full depth (consuming all digits)
    and the lexicographically smaller coordinate is returned, so two
    points get the same key iff they lie on the same orbit.
    """
    y = involution_apply(ctx, b, x)
    xn = normalize_point(ctx, x, ctx.depth)
    yn = normalize_point(ctx, y, ctx.depth)
    return min(xn.key(), yn.key())


# -- samplers -------------------------------------------------------------------------


def offgrid_rational(rng: Random, lo: Fraction, hi: Fraction, lattice_den: int) -> Fraction:
    """A rational strictly inside (lo, hi) avoiding the lattice (1/den)Z.

    Values m/(p*den) with p never dividing m stay off the lattice, and
    remain off it under any shift by lattice rationals or reflection
    around lattice points, so sampled coordinates never land on box
    boundaries anywhere in the tower.
    """
    p = 1000003
    den = p * lattice_den
    lo_n = math.floor(lo * den)
    hi_n = math.ceil(hi * den)
    if hi_n - lo_n < 3:
        raise ValueError("interval too small for off-grid sampling")
    while True:
        m = rng.randrange(lo_n + 1, hi_n)
        if m % p:
            return Fraction(m, den)


def conditioned_radius(r_n: int, n: int) -> int:
    """Shrunken digit radius keeping windows clear of the grid boundary."""
    if n == 0:
        return 0
    return (r_n * (n * n - 1)) // (n * n)


def sample_point(
    ctx: MeasureContext,
    rng: Random,
    *,
    base_level: int = 0,
    tail_to: Optional[int] = None,
    conditioned: bool = False,
    extra_denominators: Sequence[int] = (),
) -> PointExpansion:
    """A random truncated expansion with an off-lattice real coordinate.

    Digits are uniform on each window grid, or on the shrunken interior
    grids when conditioned sampling is requested (needed by the joining
    experiments so that the whole averaging window acts without running
    off the truncation).
    """
    tail_to = ctx.depth if tail_to is None else tail_to
    if not base_level <= tail_to <= ctx.depth:
        raise ValueError("digit range out of bounds")
    radius = 1 if base_level == 0 else ctx.params.a[base_level]
    z = rng.randrange(-radius + 1, radius + 1)
    eps = rng.randrange(2)
    lat = ctx.lattice_den(extra_denominators)
    real = offgrid_rational(rng, Fraction(-radius), Fraction(radius), lat)
    digits = []
    for i in range(base_level, tail_to):
        r_i = conditioned_radius(ctx.params.r[i], i) if conditioned else ctx.params.r[i]
        digits.append((rng.randint(-r_i, r_i), rng.randint(-r_i, r_i)))
    return PointExpansion(base_level, GroupElement(z, real, eps), tuple(digits))


# -- serialization ---------------------------------------------------------------------


def point_to_json_obj(x: PointExpansion) -> dict:
    return {
        "schema": "cfaction.point/1",
        "level": x.level,
        "f": [x.f.x, str(x.f.a), x.f.eps],
        "digits": [list(h) for h in x.digits],
    }


def point_from_json_obj(obj: dict) -> PointExpansion:
    fx, fa, feps = obj["f"]
    return PointExpansion(
        obj["level"],
        GroupElement(fx, Fraction(fa), feps),
        tuple((i, j) for i, j in obj["digits"]),
    )


def cylinder_to_json_obj(c: Cylinder) -> dict:
    return {
        "schema": "cfaction.cylinder/1",
        "level": c.level,
        "boxes": [[b.eps, b.zlo, b.zhi, str(b.p), str(b.q)] for b in c.A.boxes],
    }


def cylinder_from_json_obj(obj: dict) -> Cylinder:
    boxes = [
        bs.Box(eps, zlo, zhi, Fraction(p), Fraction(q))
        for eps, zlo, zhi, p, q in obj["boxes"]
    ]
    return Cylinder(obj["level"], BoxSet(boxes))
