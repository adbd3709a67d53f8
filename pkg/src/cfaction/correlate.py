"""Exact correlation kernels for box translates.

The quantities certified by the tower all reduce to sums or integrals of
the overlap length

    c(w) = |(p, q] intersect ((p', q'] + w)|

over integer grids (Dirac combs) or against Lebesgue measure on a box.
The overlap is a piecewise-linear trapezoid in the relative shift w, so

* comb sums become finite sums  sum_w count(w) * c(w/den)  over an integer
  window, and
* Lebesgue double integrals become  int c(w) * rho(w) dw  with rho a second
  trapezoid, i.e. an integral of a piecewise-quadratic function, evaluated
  exactly piece by piece (Simpson on each piece is exact for quadratics).

Everything is Fraction arithmetic; nothing here is approximate.

On top of the kernels, three assembly engines compute, for finite box
unions A, B, X, Y (see :mod:`cfaction.boxset`):

* ``pair_integral_right(A, B, X, Y)``  =  double integral over (x, y) in
  X x Y of lambda(Ax intersect By),
* ``pair_integral_left(S, T, A, B)``   =  double integral over (a, b) in
  A x B of lambda(aS intersect bT),
* ``pair_comb_sum(A, B, grid)``        =  the same correlation summed over
  a rectangular Dirac comb instead of integrated.

The right/left pair evaluates the two sides of the Fubini-type identity
for translate correlations through genuinely different assemblies.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from bisect import bisect_right

from .boxset import Box, BoxSet

PL = tuple  # tuple[tuple[Fraction, Fraction], ...], nodes of a piecewise-linear fn


def overlap_pl(p, q, p2, q2) -> PL:
    """The trapezoid w -> |(p,q] intersect ((p2,q2] + w)| as a node list."""
    p, q, p2, q2 = Fraction(p), Fraction(q), Fraction(p2), Fraction(q2)
    m = min(q - p, q2 - p2)
    xa, xd = p - q2, q - p2
    xb, xc = min(p - p2, q - q2), max(p - p2, q - q2)
    nodes = [(xa, Fraction(0)), (xb, m), (xc, m), (xd, Fraction(0))]
    out = [nodes[0]]
    for nd in nodes[1:]:
        if nd != out[-1]:
            out.append(nd)
    return tuple(out)


def pl_reflect(f: PL) -> PL:
    return tuple((-x, y) for x, y in reversed(f))


def pl_eval(f: PL, x) -> Fraction:
    x = Fraction(x)
    if not f or x < f[0][0] or x > f[-1][0]:
        return Fraction(0)
    xs = [nd[0] for nd in f]
    i = bisect_right(xs, x) - 1
    if i == len(f) - 1:
        return f[-1][1]
    x0, y0 = f[i]
    x1, y1 = f[i + 1]
    if x1 == x0:
        return y1
    return y0 + (y1 - y0) * (x - x0) / (x1 - x0)


def pl_integral_product(f: PL, g: PL) -> Fraction:
    """Exact integral of f*g over the real line (both piecewise linear)."""
    if not f or not g:
        return Fraction(0)
    lo = max(f[0][0], g[0][0])
    hi = min(f[-1][0], g[-1][0])
    if lo >= hi:
        return Fraction(0)
    cuts = sorted({x for x, _ in f} | {x for x, _ in g})
    cuts = [x for x in cuts if lo <= x <= hi]
    total = Fraction(0)
    for a, b in zip(cuts, cuts[1:]):
        if a == b:
            continue
        mid = (a + b) / 2
        fa, fb, fm = pl_eval(f, a), pl_eval(f, b), pl_eval(f, mid)
        ga, gb, gm = pl_eval(g, a), pl_eval(g, b), pl_eval(g, mid)
        total += (b - a) * (fa * ga + 4 * fm * gm + fb * gb) / 6
    return total


# -- integer-range kernels -----------------------------------------------------
# Integer ranges are half-open (lo, hi], i.e. {lo+1, ..., hi}.


def range_negate(r: tuple[int, int]) -> tuple[int, int]:
    """Image of the range under n -> -n, again as a half-open pair."""
    lo, hi = r
    return (-hi - 1, -lo - 1)


def int_correlation(
    base_a: tuple[int, int],
    base_b: tuple[int, int],
    shift_u: tuple[int, int],
    shift_v: tuple[int, int],
) -> int:
    """sum over u in shift_u, v in shift_v of |(base_a + u) ∩ (base_b + v)|."""
    alo, ahi = base_a
    blo, bhi = base_b
    ulo, uhi = shift_u
    vlo, vhi = shift_v
    w_lo = max(vlo - uhi + 1, alo - bhi + 1)
    w_hi = min(vhi - ulo - 1, ahi - blo - 1)
    total = 0
    for w in range(w_lo, w_hi + 1):
        cnt = min(uhi, vhi - w) - max(ulo, vlo - w)
        if cnt <= 0:
            continue
        ovl = min(ahi, bhi + w) - max(alo, blo + w)
        if ovl > 0:
            total += cnt * ovl
    return total


def grid_pl_correlation(
    f: PL, ka: tuple[int, int], kb: tuple[int, int], den: int
) -> Fraction:
    """sum over k1 in ka, k2 in kb of f((k2 - k1)/den)."""
    if not f:
        return Fraction(0)
    kalo, kahi = ka
    kblo, kbhi = kb
    import math

    w_lo = max(kblo - kahi + 1, math.ceil(f[0][0] * den))
    w_hi = min(kbhi - kalo - 1, math.floor(f[-1][0] * den))
    total = Fraction(0)
    for w in range(w_lo, w_hi + 1):
        cnt = min(kahi, kbhi - w) - max(kalo, kblo - w)
        if cnt > 0:
            total += cnt * pl_eval(f, Fraction(w, den))
    return total


def _signed_interval(p: Fraction, q: Fraction, eps: int) -> tuple[Fraction, Fraction]:
    """(p,q] or its negation (-q,-p], per the sign (-1)**eps."""
    return (p, q) if eps == 0 else (-q, -p)


# -- assembly engines -----------------------------------------------------------


def pair_integral_right(A: BoxSet, B: BoxSet, X: BoxSet, Y: BoxSet) -> Fraction:
    """Exact integral over (x, y) in X x Y of lambda(Ax intersect By).

    Right translation shifts the real part of a box at level eps by
    (-1)**eps times the translator's real part, so after reorienting the
    integration variables the real factor is an exact trapezoid-vs-trapezoid
    integral; the reorientation is harmless for Lebesgue measure.
    """
    total = Fraction(0)
    for alpha in A.boxes:
        for beta in B.boxes:
            c0 = overlap_pl(alpha.p, alpha.q, beta.p, beta.q)
            for gamma in X.boxes:
                for delta in Y.boxes:
                    if alpha.eps ^ gamma.eps != beta.eps ^ delta.eps:
                        continue
                    zfac = int_correlation(
                        (alpha.zlo, alpha.zhi),
                        (beta.zlo, beta.zhi),
                        (gamma.zlo, gamma.zhi),
                        (delta.zlo, delta.zhi),
                    )
                    if not zfac:
                        continue
                    e1 = _signed_interval(gamma.p, gamma.q, alpha.eps)
                    e2 = _signed_interval(delta.p, delta.q, beta.eps)
                    rho = pl_reflect(overlap_pl(e1[0], e1[1], e2[0], e2[1]))
                    real = pl_integral_product(c0, rho)
                    if real:
                        total += zfac * real
    return total


def pair_integral_left(S: BoxSet, T: BoxSet, A: BoxSet, B: BoxSet) -> Fraction:
    """Exact integral over (a, b) in A x B of lambda(aS intersect bT).

    Left translation by a point at level 1 reflects the translated set's
    real intervals, so here the sign reorientation lands on the S/T boxes.
    """
    total = Fraction(0)
    for alpha in A.boxes:
        for beta in B.boxes:
            rho = pl_reflect(overlap_pl(alpha.p, alpha.q, beta.p, beta.q))
            for gamma in S.boxes:
                for delta in T.boxes:
                    if alpha.eps ^ gamma.eps != beta.eps ^ delta.eps:
                        continue
                    zfac = int_correlation(
                        (gamma.zlo, gamma.zhi),
                        (delta.zlo, delta.zhi),
                        (alpha.zlo, alpha.zhi),
                        (beta.zlo, beta.zhi),
                    )
                    if not zfac:
                        continue
                    e1 = _signed_interval(gamma.p, gamma.q, alpha.eps)
                    e2 = _signed_interval(delta.p, delta.q, beta.eps)
                    c0 = overlap_pl(e1[0], e1[1], e2[0], e2[1])
                    real = pl_integral_product(c0, rho)
                    if real:
                        total += zfac * real
    return total


@dataclass(frozen=True)
class CombGrid:
    """A rectangular Dirac comb: z in (z_lo,z_hi], reals k/den for k in
    (k_lo,k_hi], both levels."""

    z_lo: int
    z_hi: int
    k_lo: int
    k_hi: int
    den: int

    @property
    def size(self) -> int:
        return (self.z_hi - self.z_lo) * (self.k_hi - self.k_lo) * 2

    def points(self):
        from .group import GroupElement

        for z in range(self.z_lo + 1, self.z_hi + 1):
            for k in range(self.k_lo + 1, self.k_hi + 1):
                for eps in (0, 1):
                    yield GroupElement(z, Fraction(k, self.den), eps)


def pair_comb_sum(A: BoxSet, B: BoxSet, grid: CombGrid) -> Fraction:
    """sum over comb points (x, y) of lambda(Ax intersect By), exact.

    Unlike the Lebesgue integral, the comb's half-open index grid is not
    symmetric under negation, so the sign reorientation is applied to the
    integer index windows rather than absorbed by symmetry.
    """
    zr = (grid.z_lo, grid.z_hi)
    kr = (grid.k_lo, grid.k_hi)
    total = Fraction(0)
    for alpha in A.boxes:
        ka = kr if alpha.eps == 0 else range_negate(kr)
        for beta in B.boxes:
            kb = kr if beta.eps == 0 else range_negate(kr)
            zfac = int_correlation(
                (alpha.zlo, alpha.zhi), (beta.zlo, beta.zhi), zr, zr
            )
            if not zfac:
                continue
            c0 = overlap_pl(alpha.p, alpha.q, beta.p, beta.q)
            real = grid_pl_correlation(c0, ka, kb, grid.den)
            if real:
                total += 2 * zfac * real
    return total
