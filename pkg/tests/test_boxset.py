"""Box-set algebra: canonical forms, Haar measure, translations, products.

The Boolean operations are checked against an independent rasterization
oracle: cut both operands into elementary cells on the common breakpoint
grid and decide each cell by membership logic.
"""

from fractions import Fraction
from random import Random

import pytest

from cfaction import boxset as bs
from cfaction.boxset import Box, BoxSet, DiscreteDist, dist_l1, l1_to_uniform, pushforward
from cfaction.group import GroupElement, IDENTITY, invert, multiply


def rand_boxset(rng: Random, span=4, rects=3) -> BoxSet:
    out = []
    for _ in range(rng.randrange(1, rects + 1)):
        zlo = rng.randrange(-span, span)
        zhi = rng.randrange(zlo + 1, span + 1)
        a = Fraction(rng.randrange(-8 * span, 8 * span), 8)
        b = Fraction(rng.randrange(-8 * span, 8 * span), 8)
        if a == b:
            b += Fraction(1, 8)
        out.append(Box(rng.randrange(2), zlo, zhi, min(a, b), max(a, b)))
    return BoxSet(out)


def raster_measure(sets, keep) -> Fraction:
    """Oracle: elementary-cell measure of a Boolean combination."""
    total = Fraction(0)
    for eps in (0, 1):
        zs = sorted(
            {b.zlo for s in sets for b in s.boxes if b.eps == eps}
            | {b.zhi for s in sets for b in s.boxes if b.eps == eps}
        )
        rs = sorted(
            {b.p for s in sets for b in s.boxes if b.eps == eps}
            | {b.q for s in sets for b in s.boxes if b.eps == eps}
        )
        for zlo, zhi in zip(zs, zs[1:]):
            for p, q in zip(rs, rs[1:]):
                flags = []
                for s in sets:
                    flags.append(
                        any(
                            b.eps == eps
                            and b.zlo <= zlo
                            and zhi <= b.zhi
                            and b.p <= p
                            and q <= b.q
                            for b in s.boxes
                        )
                    )
                if keep(*flags):
                    total += (zhi - zlo) * (q - p)
    return total


def test_canonicalization_merges_and_is_idempotent():
    a = BoxSet([Box(0, 0, 2, Fraction(0), Fraction(2)), Box(0, 0, 2, Fraction(1), Fraction(3))])
    assert a.boxes == (Box(0, 0, 2, Fraction(0), Fraction(3)),)
    assert BoxSet(a.boxes) == a
    # adjacent integer runs with identical intervals merge
    b = BoxSet([Box(1, 0, 1, Fraction(0), Fraction(1)), Box(1, 1, 2, Fraction(0), Fraction(1))])
    assert b.boxes == (Box(1, 0, 2, Fraction(0), Fraction(1)),)


def test_measure_examples():
    assert BoxSet.empty().measure == 0
    assert BoxSet.symmetric(5, 5).measure == 200  # the first level box
    assert BoxSet.symmetric(1, 1).measure == 8


def test_combine_against_raster_oracle():
    rng = Random(1)
    ops = {
        "union": lambda x, y: x or y,
        "intersect": lambda x, y: x and y,
        "subtract": lambda x, y: x and not y,
        "symdiff": lambda x, y: x != y,
    }
    for trial in range(120):
        a, b = rand_boxset(rng), rand_boxset(rng)
        for op, keep in ops.items():
            got = bs.combine(a, b, op).measure
            want = raster_measure([a, b], keep)
            assert got == want, (trial, op)


def test_symdiff_measure_identity():
    rng = Random(2)
    for _ in range(80):
        a, b = rand_boxset(rng), rand_boxset(rng)
        lhs = bs.combine(a, b, "symdiff").measure
        rhs = a.measure + b.measure - 2 * bs.intersect(a, b).measure
        assert lhs == rhs


def test_de_morgan_mod_null():
    rng = Random(3)
    frame = BoxSet.symmetric(5, 5)
    for _ in range(60):
        a, b = rand_boxset(rng), rand_boxset(rng)
        a, b = bs.intersect(a, frame), bs.intersect(b, frame)
        lhs = bs.subtract(frame, bs.union(a, b))
        rhs = bs.intersect(bs.subtract(frame, a), bs.subtract(frame, b))
        assert lhs == rhs


def test_translate_examples():
    s = BoxSet.from_box(0, 0, 1, 0, 1)
    assert bs.translate(IDENTITY, s, "left") == s
    # left multiplication by the level flip reflects the interval
    assert bs.translate(GroupElement(0, 0, 1), s, "left") == BoxSet.from_box(
        1, 0, 1, -1, 0
    )
    assert bs.translate(GroupElement(1, Fraction(1, 2), 0), s, "right") == BoxSet.from_box(
        0, 1, 2, Fraction(1, 2), Fraction(3, 2)
    )


def test_translate_preserves_measure_both_sides():
    rng = Random(4)
    for _ in range(100):
        s = rand_boxset(rng)
        g = GroupElement(
            rng.randrange(-3, 4), Fraction(rng.randrange(-12, 13), 4), rng.randrange(2)
        )
        assert bs.translate(g, s, "left").measure == s.measure
        assert bs.translate(g, s, "right").measure == s.measure


def test_translate_is_action():
    rng = Random(5)
    for _ in range(60):
        s = rand_boxset(rng)
        g = GroupElement(1, Fraction(1, 4), 1)
        h = GroupElement(-2, Fraction(3, 4), rng.randrange(2))
        assert bs.translate(g, bs.translate(h, s, "left"), "left") == bs.translate(
            multiply(g, h), s, "left"
        )
        assert bs.translate(g, bs.translate(h, s, "right"), "right") == bs.translate(
            multiply(h, g), s, "right"
        )


def test_invert_set():
    assert bs.invert_set(BoxSet.empty()) == BoxSet.empty()
    s = BoxSet.from_box(1, 2, 3, Fraction(1, 2), Fraction(5, 2))
    assert bs.invert_set(s) == BoxSet.from_box(1, -4, -3, Fraction(1, 2), Fraction(5, 2))
    rng = Random(6)
    for _ in range(100):
        s = rand_boxset(rng)
        assert bs.invert_set(s).measure == s.measure
        assert bs.invert_set(bs.invert_set(s)) == s


def test_invert_set_matches_pointwise_inversion():
    rng = Random(7)
    for _ in range(60):
        s = rand_boxset(rng)
        inv = bs.invert_set(s)
        g = GroupElement(
            rng.randrange(-4, 5), Fraction(rng.randrange(-65, 64), 16) + Fraction(1, 32), rng.randrange(2)
        )
        # off the interval endpoints, membership commutes with inversion
        assert s.contains_point(g) == inv.contains_point(invert(g))


def test_level_box_inversion_defect_is_the_boundary_slice():
    # the level box is NOT inversion-symmetric: the extreme integer slice
    # z = radius maps onto the missing slice z = -radius
    F = BoxSet.symmetric(5, 5)
    inv = bs.invert_set(F)
    assert inv != F
    diff = bs.combine(F, inv, "symdiff")
    assert diff.measure == 8 * 5  # two slices, interval length 10, two levels
    hulls = diff.bounds()
    assert tuple(hulls[0][:2]) == (-6, 5) and tuple(hulls[1][:2]) == (-6, 5)


def interior_point(rng: Random, s: BoxSet) -> GroupElement:
    b = s.boxes[rng.randrange(len(s.boxes))]
    z = b.zlo + 1 + rng.randrange(b.zhi - b.zlo)
    t = b.p + (b.q - b.p) * Fraction(rng.randrange(1, 64), 64) + Fraction(1, 2**20)
    return GroupElement(z, min(t, b.q), b.eps)


def test_product_membership_oracle():
    rng = Random(8)
    for _ in range(60):
        a, b = rand_boxset(rng), rand_boxset(rng)
        prod = bs.product(a, b)
        for _ in range(10):
            ga, gb = interior_point(rng, a), interior_point(rng, b)
            assert prod.contains_point(multiply(ga, gb))


def test_product_contains_identity_for_symmetric_factors():
    rng = Random(12)
    for _ in range(30):
        s = rand_boxset(rng)
        prod = bs.product(s, bs.invert_set(s))
        g = interior_point(rng, s)
        assert prod.contains_point(multiply(g, invert(g))) or prod.contains_point(
            IDENTITY
        )


def test_spread_examples():
    s = BoxSet.from_box(0, 0, 1, 0, 1)
    res = bs.spread(s, [IDENTITY], "left")
    assert res.set == s and res.disjoint
    shifts = [GroupElement(k, 0, 0) for k in (0, 1, 2)]
    res = bs.spread(s, shifts, "right")
    assert res.set.measure == 3 and res.disjoint
    overlapping = [GroupElement(0, 0, 0), GroupElement(0, Fraction(1, 2), 0)]
    res = bs.spread(s, overlapping, "right")
    assert not res.disjoint and res.set.measure == Fraction(3, 2)


def test_additivity_on_disjoint_sets():
    a = BoxSet.from_box(0, 0, 1, 0, 1)
    b = BoxSet.from_box(0, 0, 1, 1, 2)
    assert bs.union(a, b).measure == a.measure + b.measure


def test_subset_mod_null():
    assert bs.is_subset_mod_null(BoxSet.empty(), BoxSet.empty())
    big = BoxSet.symmetric(7, 7)
    small = BoxSet.symmetric(5, 5)
    assert bs.is_subset_mod_null(small, big)
    assert not bs.is_subset_mod_null(big, small)


def test_dist_l1():
    d = DiscreteDist.uniform([0, 1])
    assert dist_l1(d, d) == 0
    p0 = DiscreteDist({0: 1})
    p1 = DiscreteDist({1: 1})
    assert dist_l1(p0, p1) == 2
    emp = DiscreteDist({0: Fraction(3, 4), 1: Fraction(1, 4)})
    assert dist_l1(emp, d) == Fraction(1, 2)


def test_l1_to_uniform_matches_materialized():
    rng = Random(9)
    for _ in range(50):
        n = rng.randrange(2, 12)
        counts = {i: rng.randrange(0, 5) for i in range(rng.randrange(1, n + 1))}
        counts[0] = counts.get(0, 0) + 1
        emp = DiscreteDist.from_counts(counts)
        direct = dist_l1(emp, DiscreteDist.uniform(range(n)))
        assert l1_to_uniform(emp, n) == direct


def test_pushforward_contracts_l1():
    rng = Random(10)
    for _ in range(100):
        n = rng.randrange(2, 10)
        mk = lambda: DiscreteDist.from_counts(
            {i: rng.randrange(0, 4) + (1 if i == 0 else 0) for i in range(n)}
        )
        d1, d2 = mk(), mk()
        f = lambda i: i % rng.randrange(1, n)
        fn = {i: f(i) for i in range(n)}
        push = lambda d: pushforward(d, fn.__getitem__)
        assert dist_l1(push(d1), push(d2)) <= dist_l1(d1, d2)
    assert pushforward(d1, lambda x: x) == d1


def test_dist_validation():
    with pytest.raises(ValueError):
        DiscreteDist({0: Fraction(1, 2)})
    with pytest.raises(ValueError):
        DiscreteDist({0: Fraction(-1, 2), 1: Fraction(3, 2)})
