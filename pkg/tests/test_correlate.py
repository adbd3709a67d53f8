"""Exact correlation kernels and the three assembly engines.

The comb engine is checked against brute-force enumeration of the comb;
the two Lebesgue engines check each other through the translate-
correlation identity and a hand-integrated toy value.
"""

from fractions import Fraction
from random import Random

from cfaction import boxset as bs
from cfaction.boxset import BoxSet
from cfaction.correlate import (
    CombGrid,
    grid_pl_correlation,
    int_correlation,
    overlap_pl,
    pair_comb_sum,
    pair_integral_left,
    pair_integral_right,
    pl_eval,
    pl_integral_product,
    pl_reflect,
    range_negate,
)
from tests.test_boxset import rand_boxset


def test_overlap_pl_values():
    c = overlap_pl(0, 2, 0, 1)  # |(0,2] n ((0,1]+w)|
    assert pl_eval(c, -2) == 0
    assert pl_eval(c, 0) == 1
    assert pl_eval(c, Fraction(1, 2)) == 1
    assert pl_eval(c, Fraction(3, 2)) == Fraction(1, 2)
    assert pl_eval(c, 2) == 0
    tri = overlap_pl(0, 1, 0, 1)
    assert pl_eval(tri, 0) == 1 and pl_eval(tri, Fraction(1, 2)) == Fraction(1, 2)


def test_pl_integral_product_triangle():
    tri = overlap_pl(0, 1, 0, 1)
    # integral of the squared unit triangle is 2/3
    assert pl_integral_product(tri, tri) == Fraction(2, 3)
    assert pl_integral_product(tri, pl_reflect(tri)) == Fraction(2, 3)


def test_int_correlation_brute():
    rng = Random(0)
    for _ in range(200):
        rs = []
        for _ in range(4):
            lo = rng.randrange(-5, 5)
            rs.append((lo, rng.randrange(lo + 1, lo + 6)))
        a, b, u, v = rs
        brute = 0
        for uu in range(u[0] + 1, u[1] + 1):
            for vv in range(v[0] + 1, v[1] + 1):
                brute += max(
                    0, min(a[1] + uu, b[1] + vv) - max(a[0] + uu, b[0] + vv)
                )
        assert int_correlation(a, b, u, v) == brute


def test_grid_pl_correlation_brute():
    rng = Random(1)
    for _ in range(100):
        c = overlap_pl(
            Fraction(rng.randrange(-4, 0)),
            Fraction(rng.randrange(1, 5)),
            Fraction(rng.randrange(-3, 0)),
            Fraction(rng.randrange(1, 4)),
        )
        ka = (rng.randrange(-6, 0), rng.randrange(1, 7))
        kb = (rng.randrange(-6, 0), rng.randrange(1, 7))
        den = rng.randrange(1, 5)
        brute = sum(
            pl_eval(c, Fraction(k2 - k1, den))
            for k1 in range(ka[0] + 1, ka[1] + 1)
            for k2 in range(kb[0] + 1, kb[1] + 1)
        )
        assert grid_pl_correlation(c, ka, kb, den) == brute


def test_range_negate():
    assert range_negate((0, 3)) == (-4, -1)  # {1,2,3} -> {-3,-2,-1}
    assert range_negate(range_negate((-2, 5))) == (-2, 5)


def test_comb_sum_against_enumeration():
    grid = CombGrid(-1, 1, -1, 1, 1)
    pts = list(grid.points())
    assert len(pts) == grid.size == 8
    rng = Random(2)
    for _ in range(40):
        A, B = rand_boxset(rng), rand_boxset(rng)
        brute = Fraction(0)
        for x in pts:
            Ax = bs.translate(x, A, "right")
            for y in pts:
                brute += bs.intersect(Ax, bs.translate(y, B, "right")).measure
        assert pair_comb_sum(A, B, grid) == brute


def test_comb_sum_finer_grid_against_enumeration():
    grid = CombGrid(-2, 2, -8, 8, 4)
    pts = list(grid.points())
    rng = Random(3)
    for _ in range(10):
        A, B = rand_boxset(rng, span=3, rects=2), rand_boxset(rng, span=3, rects=2)
        brute = Fraction(0)
        for x in pts:
            Ax = bs.translate(x, A, "right")
            for y in pts:
                brute += bs.intersect(Ax, bs.translate(y, B, "right")).measure
        assert pair_comb_sum(A, B, grid) == brute


def test_translate_correlation_identity():
    rng = Random(4)
    for _ in range(60):
        A = rand_boxset(rng, span=3)
        B = rand_boxset(rng, span=3)
        S = rand_boxset(rng, span=2)
        assert pair_integral_right(A, B, S, S) == pair_integral_left(S, S, A, B)


def test_right_integral_toy_value():
    unit = BoxSet.from_box(0, 0, 1, 0, 1)
    assert pair_integral_right(unit, unit, unit, unit) == Fraction(2, 3)
    assert pair_integral_left(unit, unit, unit, unit) == Fraction(2, 3)


def test_right_integral_monte_carlo_spot():
    # crude stochastic sanity on one asymmetric instance
    rng = Random(5)
    A = BoxSet.from_box(1, -1, 1, Fraction(-1, 2), Fraction(3, 2))
    B = BoxSet.from_box(0, 0, 2, 0, 1)
    S = BoxSet.symmetric(1, 1)
    exact = pair_integral_right(A, B, S, S)
    total = Fraction(0)
    n = 4000
    from cfaction.lab import sample_point_in_boxset

    for _ in range(n):
        x = sample_point_in_boxset(rng, S)
        y = sample_point_in_boxset(rng, S)
        total += bs.intersect(
            bs.translate(x, A, "right"), bs.translate(y, B, "right")
        ).measure
    est = total / n * S.measure**2
    assert abs(est - exact) < Fraction(1, 2)
