"""The tower of the construction: parameters, level sets, combs, spacer maps.

Level data, for an increasing sequence of cut counts r_0 < r_1 < ...:

* scale recurrences  atilde_0 = 1,  a_n = (2 r_{n-1} + 1) atilde_{n-1},
  b_n = (2n - 1) atilde_{n-1},  atilde_n = a_n + b_n + n;
* symmetric product boxes F_n (radius a_n), S_n (radius b_n) and
  Ftilde_n (radius atilde_n), with S_n in F_n and F_n S_n in Ftilde_n;
* integer grids H_n = {-r_n..r_n}^2 and I_n = {-n..n}^2;
* the exact tilings  F_{n+1} = disjoint union of Ftilde_n phi_n(h), h in
  H_n, and S_{n+1} = the same over I_n, where phi_n is the lattice
  homomorphism with scale atilde_n.

A spacer map s_n assigns to each window h in H_n a random comb point
s_n(h) in the Dirac comb D_n inside S_n; the chosen translate of F_n in
window h is then c_{n+1}(h) = s_n(h) phi_n(h), and C_{n+1} is the set of
those translates.  The half-open conventions make the window structure
exact: F_n c_{n+1}(h) lies inside window h, different windows are
disjoint, and everything is verifiable as identities of canonical box
sets.

Level 0 is degenerate: the comb spacing would be 1/0^2, so this module
takes F_0 to be the full window box Ftilde_0 and uses the two-element
level-flip set {(0,0,0), (0,0,1)} as both S_0 and D_0.  That is the unique
choice making the level-0 tiling exact with equally many comb points on
each level.  Certifications whose thresholds are 1/n are not defined at
level 0 and start at level 1.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from fractions import Fraction
from random import Random
from typing import Optional, Sequence

from . import boxset as bs
from .boxset import Box, BoxSet, DiscreteDist, dist_l1, l1_to_uniform
from .correlate import (
    CombGrid,
    pair_comb_sum,
    pair_integral_right,
)
from .group import GroupElement, IDENTITY, _rat, invert, multiply, phi_pair


class ConstructionError(Exception):
    """A structural condition of the construction failed exactly."""


class PartitionBudgetError(Exception):
    """A partition refinement exceeded its configured atom budget."""


GridPoint = tuple[int, int]


def square_grid(radius: int) -> tuple[GridPoint, ...]:
    """{-radius..radius}^2 in row-major order."""
    rng = range(-radius, radius + 1)
    return tuple((i, j) for i in rng for j in rng)


# -- parameters -----------------------------------------------------------------


@dataclass(frozen=True)
class TowerParams:
    """Cut counts r and the derived integer scales a, b, atilde."""

    r: tuple[int, ...]
    a: tuple[int, ...]
    b: tuple[int, ...]
    atilde: tuple[int, ...]

    @property
    def depth(self) -> int:
        """Largest buildable level: levels 0..depth, translate sets C_1..C_depth."""
        return len(self.r)

    def diagnostics(self) -> list[tuple[int, Fraction]]:
        """The ratios n^4 / r_n; the construction wants them to tend to 0."""
        return [(n, Fraction(n**4, rn)) for n, rn in enumerate(self.r)]

    def to_json_obj(self) -> dict:
        return {"schema": "cfaction.params/1", "r": list(self.r)}


def build_params(r_seq: Sequence[int]) -> TowerParams:
    r = tuple(int(x) for x in r_seq)
    if not r:
        raise ValueError("need at least one cut count")
    if any(x < 1 for x in r):
        raise ValueError("cut counts must be positive")
    if any(y <= x for x, y in zip(r, r[1:])):
        raise ValueError("cut counts must be strictly increasing")
    a = [0]
    b = [0]
    atilde = [1]
    for n in range(1, len(r) + 1):
        a.append((2 * r[n - 1] + 1) * atilde[n - 1])
        b.append((2 * n - 1) * atilde[n - 1])
        atilde.append(a[n] + b[n] + n)
    return TowerParams(r, tuple(a), tuple(b), tuple(atilde))


# -- level sets -------------------------------------------------------------------


@dataclass(frozen=True)
class LevelSets:
    """The three nested boxes of one level plus its integer grids."""

    n: int
    F: BoxSet
    S: BoxSet
    Ftilde: BoxSet
    H: tuple[GridPoint, ...]
    I: tuple[GridPoint, ...]


def level_box(radius: int) -> BoxSet:
    return BoxSet.symmetric(radius, radius)


def build_level_sets(p: TowerParams, n: int) -> LevelSets:
    """Build F_n, S_n, Ftilde_n with their containments verified exactly."""
    if not 1 <= n <= p.depth:
        raise ValueError(f"level {n} out of range 1..{p.depth}")
    F = level_box(p.a[n])
    S = level_box(p.b[n])
    Ft = level_box(p.atilde[n])
    if not bs.is_subset_mod_null(S, F):
        raise ConstructionError(f"S_{n} not contained in F_{n}")
    FS = bs.product(F, S)
    SF = bs.product(S, F)
    if FS != SF or not bs.is_subset_mod_null(FS, Ft):
        raise ConstructionError(f"F_{n} S_{n} containment in Ftilde_{n} failed")
    H = square_grid(p.r[n]) if n < p.depth else ()
    return LevelSets(n, F, S, Ft, H, square_grid(n))


# -- Dirac combs -------------------------------------------------------------------


@dataclass(frozen=True)
class DiracComb:
    """The equidistributed grid inside S_n used to draw spacers."""

    n: int
    points: tuple[GroupElement, ...]

    @property
    def size(self) -> int:
        return len(self.points)

    def kappa(self) -> DiscreteDist:
        return DiscreteDist.uniform(self.points)


LEVEL0_COMB = DiracComb(0, (IDENTITY, GroupElement(0, Fraction(0), 1)))


def comb_grid(p: TowerParams, n: int) -> CombGrid:
    if n < 1:
        raise ValueError("comb grid defined for levels >= 1")
    bn = p.b[n]
    return CombGrid(-bn, bn, -(n**2) * bn, n**2 * bn, n**2)


def dirac_comb(p: TowerParams, n: int) -> DiracComb:
    """Points (z, k/n^2, m) with z in (-b_n,b_n], k in (-n^2 b_n, n^2 b_n]."""
    if n < 1:
        raise ValueError("dirac_comb requires n >= 1; level 0 uses the level-flip pair")
    return DiracComb(n, tuple(comb_grid(p, n).points()))


def comb_for_level(p: TowerParams, n: int) -> DiracComb:
    return LEVEL0_COMB if n == 0 else dirac_comb(p, n)


# -- spacer maps -------------------------------------------------------------------


@dataclass(frozen=True)
class SpacerMap:
    """A total map from the window grid H_n into the comb D_n.

    The derived translates c(h) = s(h) * phi_n(h) are pairwise distinct
    because the comb lies well inside each window; this is validated at
    construction.
    """

    n: int
    atilde_n: int
    domain_radius: int
    mapping: dict
    seed: Optional[int] = None
    _c_map: dict = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        dom = square_grid(self.domain_radius)
        if set(self.mapping) != set(dom):
            raise ValueError("mapping must be total on the window grid")
        c_map = {h: multiply(self.mapping[h], phi_pair(self.atilde_n, h)) for h in dom}
        if len(set(c_map.values())) != len(dom):
            raise ConstructionError(
                f"translate map at level {self.n} is not injective"
            )
        object.__setattr__(self, "_c_map", c_map)

    @property
    def domain(self) -> tuple[GridPoint, ...]:
        return square_grid(self.domain_radius)

    def spacer(self, h: GridPoint) -> GroupElement:
        return self.mapping[h]

    def c(self, h: GridPoint) -> GroupElement:
        return self._c_map[h]

    @property
    def translates(self) -> tuple[GroupElement, ...]:
        """C_{n+1}, in row-major window order."""
        return tuple(self._c_map[h] for h in self.domain)

    def to_json_obj(self) -> dict:
        return {
            "schema": "cfaction.spacermap/1",
            "level": self.n,
            "atilde": self.atilde_n,
            "radius": self.domain_radius,
            "seed": self.seed,
            "map": [
                [h[0], h[1], s.x, str(s.a), s.eps]
                for h, s in sorted(self.mapping.items())
            ],
        }

    @staticmethod
    def from_json_obj(obj: dict) -> "SpacerMap":
        mapping = {
            (i, j): GroupElement(x, Fraction(a), eps)
            for i, j, x, a, eps in obj["map"]
        }
        return SpacerMap(
            obj["level"], obj["atilde"], obj["radius"], mapping, obj.get("seed")
        )


def derive_seed(master, *labels) -> int:
    """Deterministic 64-bit child seed from a master seed and labels."""
    text = ":".join([str(master), *map(str, labels)])
    return int.from_bytes(
        hashlib.blake2b(text.encode(), digest_size=8).digest(), "big"
    )


def sample_spacer_map(p: TowerParams, n: int, seed: int) -> SpacerMap:
    """Uniform i.i.d. spacer choices per window, reproducible from the seed."""
    if not 0 <= n < p.depth:
        raise ValueError(f"spacer level {n} out of range 0..{p.depth - 1}")
    comb = comb_for_level(p, n)
    rng = Random(seed)
    mapping = {h: comb.points[rng.randrange(comb.size)] for h in square_grid(p.r[n])}
    return SpacerMap(n, p.atilde[n], p.r[n], mapping, seed)


# -- the assembled tower -------------------------------------------------------------


class Tower:
    """Params, level sets and one spacer map per level, built consecutively."""

    def __init__(self, params: TowerParams, maps: Sequence[SpacerMap]):
        if len(maps) > params.depth:
            raise ValueError("more spacer maps than buildable levels")
        for n, m in enumerate(maps):
            if m.n != n:
                raise ValueError(f"spacer map #{n} is for level {m.n}")
            if m.domain_radius != params.r[n] or m.atilde_n != params.atilde[n]:
                raise ValueError(f"spacer map #{n} does not match the parameters")
        self.params = params
        self.maps = tuple(maps)
        self._levels = {}

    @staticmethod
    def build(r_seq: Sequence[int], master_seed) -> "Tower":
        p = build_params(r_seq)
        maps = [
            sample_spacer_map(p, n, derive_seed(master_seed, "spacer", n))
            for n in range(p.depth)
        ]
        return Tower(p, maps)

    @property
    def depth(self) -> int:
        return len(self.maps)

    def F(self, n: int) -> BoxSet:
        if n == 0:
            return level_box(1)
        return self.level(n).F

    def S(self, n: int) -> BoxSet:
        return self.level(n).S

    def Ftilde(self, n: int) -> BoxSet:
        if n == 0:
            return level_box(1)
        return self.level(n).Ftilde

    def level(self, n: int) -> LevelSets:
        if n not in self._levels:
            self._levels[n] = build_level_sets(self.params, n)
        return self._levels[n]

    def H(self, n: int) -> tuple[GridPoint, ...]:
        return square_grid(self.params.r[n])

    def translates(self, k: int) -> tuple[GroupElement, ...]:
        """C_k, the level-k translate set (1 <= k <= depth)."""
        if not 1 <= k <= self.depth:
            raise ValueError(f"translate set C_{k} not built")
        return self.maps[k - 1].translates

    def c_count(self, k: int) -> int:
        return len(self.translates(k))

    def to_json_obj(self) -> dict:
        return {
            "schema": "cfaction.tower/1",
            "r": list(self.params.r),
            "maps": [m.to_json_obj() for m in self.maps],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_json_obj(), sort_keys=True, indent=1)

    @staticmethod
    def from_json_obj(obj: dict) -> "Tower":
        p = build_params(obj["r"])
        return Tower(p, [SpacerMap.from_json_obj(m) for m in obj["maps"]])


# -- certifications -------------------------------------------------------------------


@dataclass(frozen=True)
class BalanceReport:
    level: int
    deviation: Fraction
    threshold: Optional[Fraction]
    passed: bool


def level_balance_deviation(mapping: dict) -> Fraction:
    """L1 distance between the level distribution of the map and fair coin."""
    dist = DiscreteDist.uniform([s.eps for s in mapping.values()])
    fair = DiscreteDist({0: Fraction(1, 2), 1: Fraction(1, 2)})
    return dist_l1(dist, fair)


def certify_balanced(m: SpacerMap) -> BalanceReport:
    """Exact deviation of the spacer levels from a fair coin, vs 1/n."""
    dev = level_balance_deviation(m.mapping)
    if m.n == 0:
        return BalanceReport(0, dev, None, True)
    thr = Fraction(1, m.n)
    return BalanceReport(m.n, dev, thr, dev < thr)


@dataclass
class DjlemReport:
    level: int
    threshold: Fraction
    exhaustive: bool
    rows: list  # (N, h, h', distance)
    skipped: list  # (N, note)
    max_distance: Optional[Fraction]
    passed: Optional[bool]


def certify_djlem(
    p: TowerParams,
    m: SpacerMap,
    *,
    N_list: Optional[Sequence[int]] = None,
    pair_budget: int = 64,
    seed: int = 0,
    exhaustive: bool = False,
) -> DjlemReport:
    """Shifted-pair equidistribution of the spacer map, exact distances.

    For a horizontal stride window of length N the joint distribution of
    (s(h + (t,0)), s(h' + (t,0))), 0 <= t < N, is compared in L1 to the
    uniform distribution on comb pairs.  Admissible N exceed r_n / n^2;
    pairs h != h' range over the strip where both rows stay inside the
    grid.  At desk scales the 1/n bound typically fails; the report
    records the exact achieved distances either way.
    """
    n = m.n
    if n < 1:
        raise ValueError("certification thresholds are undefined at level 0")
    r = p.r[n]
    comb = comb_for_level(p, n)
    pair_universe = comb.size**2
    threshold = Fraction(1, n)
    if N_list is None:
        lo = Fraction(r, n**2)
        first = int(lo) + 1
        N_list = list(range(first, 2 * r + 2)) if exhaustive else [first, 2 * r + 1]
    rows = []
    skipped = []
    rng = Random(seed)
    for N in N_list:
        if not N > Fraction(r, n**2):
            raise ValueError(f"window length {N} violates N > r_n/n^2")
        strip = [h for h in square_grid(r) if h[0] + N - 1 <= r]
        if len(strip) < 2:
            skipped.append((N, "no admissible pairs"))
            continue
        if exhaustive:
            pairs = [(h, hp) for h in strip for hp in strip if h != hp]
        else:
            pairs = []
            for _ in range(pair_budget):
                i = rng.randrange(len(strip))
                j = rng.randrange(len(strip) - 1)
                if j >= i:
                    j += 1
                pairs.append((strip[i], strip[j]))
        for h, hp in pairs:
            counts: dict = {}
            for t in range(N):
                key = (m.spacer((h[0] + t, h[1])), m.spacer((hp[0] + t, hp[1])))
                counts[key] = counts.get(key, 0) + 1
            emp = DiscreteDist.from_counts(counts)
            rows.append((N, h, hp, l1_to_uniform(emp, pair_universe)))
    max_d = max((row[3] for row in rows), default=None)
    passed = None if max_d is None else max_d < threshold
    return DjlemReport(n, threshold, exhaustive, rows, skipped, max_d, passed)


# -- the finite partitions -------------------------------------------------------------


class XiPartition:
    """Rectangle partition of F_n into rows of short intervals.

    Rows are indexed by (eps, z).  Each row's cut set is the base grid of
    step 1/n refined by the endpoints of every translate A*c of an atom A
    of the previous partition by a level-n translate c, and closed under
    set inversion row-wise.  Rows are computed lazily and cached; a row
    whose refinement exceeds the budget raises PartitionBudgetError.

    Exactness caveat, reported rather than hidden: F_n itself is not
    inversion-symmetric (the integer slice z = a_n inverts onto the
    missing slice z = -a_n), so atoms in the extreme slice have inverses
    outside F_n; all interior rows are closed under inversion exactly.
    """

    def __init__(
        self,
        p: TowerParams,
        n: int,
        prev: Optional[tuple["XiPartition", SpacerMap]] = None,
        *,
        row_budget: int = 65536,
    ):
        if n < 0 or n > p.depth:
            raise ValueError(f"level {n} out of range")
        if prev is not None:
            xi_prev, smap = prev
            if xi_prev.n != n - 1 or smap.n != n - 1:
                raise ValueError("prev data must belong to the previous level")
        self.params = p
        self.n = n
        self.prev = prev
        self.row_budget = row_budget
        self.radius = 1 if n == 0 else p.a[n]
        self._rows: dict = {}

    # one row of atoms sits over a single integer z and level eps
    def z_values(self) -> range:
        return range(-self.radius + 1, self.radius + 1)

    @property
    def base_step(self) -> Fraction:
        return Fraction(2) if self.n == 0 else Fraction(1, self.n)

    def _base_cuts(self) -> list[Fraction]:
        a = Fraction(self.radius)
        step = self.base_step
        k = int((2 * a) / step)
        return [-a + i * step for i in range(k + 1)]

    def _translate_cuts(self, eps: int, z: int) -> set:
        if self.prev is None:
            return set()
        xi_prev, smap = self.prev
        out: set = set()
        lo, hi = -Fraction(self.radius), Fraction(self.radius)
        for h in smap.domain:
            c = smap.c(h)
            zp = z - c.x
            ep = eps ^ c.eps
            if not (-xi_prev.radius + 1 <= zp <= xi_prev.radius):
                continue
            shift = c.a if ep == 0 else -c.a
            for cut in xi_prev.row_cuts(ep, zp):
                v = cut + shift
                if lo < v < hi:
                    out.add(v)
        return out

    def row_cuts(self, eps: int, z: int) -> tuple:
        key = (eps, z)
        if key in self._rows:
            return self._rows[key]
        if z not in self.z_values():
            raise ValueError(f"row z={z} outside the level box")
        cuts = set(self._base_cuts())
        cuts |= self._translate_cuts(eps, z)
        if -z in self.z_values():
            mirrored = self._translate_cuts(eps, -z)
            if eps == 0:
                cuts |= {-v for v in mirrored}
            else:
                cuts |= mirrored
        if len(cuts) - 1 > self.row_budget:
            raise PartitionBudgetError(
                f"row (eps={eps}, z={z}) needs {len(cuts) - 1} atoms; "
                f"budget is {self.row_budget}"
            )
        out = tuple(sorted(cuts))
        self._rows[key] = out
        return out

    def atoms_in_row(self, eps: int, z: int):
        cuts = self.row_cuts(eps, z)
        return [(p, q) for p, q in zip(cuts, cuts[1:])]

    def iter_atoms(self):
        for eps in (0, 1):
            for z in self.z_values():
                for p, q in self.atoms_in_row(eps, z):
                    yield (eps, z, p, q)

    def atom_count(self) -> int:
        return sum(
            len(self.row_cuts(eps, z)) - 1
            for eps in (0, 1)
            for z in self.z_values()
        )

    def atom_box(self, atom) -> BoxSet:
        eps, z, p, q = atom
        return BoxSet.from_box(eps, z - 1, z, p, q)

    def max_atom_diameter(self) -> Fraction:
        return max(
            q - p
            for eps in (0, 1)
            for z in self.z_values()
            for p, q in self.atoms_in_row(eps, z)
        )

    def sample_atom(self, rng: Random):
        eps = rng.randrange(2)
        z = rng.randrange(-self.radius + 1, self.radius + 1)
        row = self.atoms_in_row(eps, z)
        p, q = row[rng.randrange(len(row))]
        return (eps, z, p, q)

    def sample_union(self, rng: Random, max_atoms: int) -> BoxSet:
        k = rng.randrange(1, max_atoms + 1)
        out = BoxSet.empty()
        for _ in range(k):
            out = bs.union(out, self.atom_box(self.sample_atom(rng)))
        return out

    def is_measurable(self, s: BoxSet) -> bool:
        """True iff s is a union of atoms (each box cut-aligned per row)."""
        for b in s.boxes:
            for z in range(b.zlo + 1, b.zhi + 1):
                if z not in self.z_values():
                    return False
                cuts = self.row_cuts(b.eps, z)
                if b.p not in cuts or b.q not in cuts:
                    return False
        return True

    def symmetry_report(self) -> dict:
        """Row-wise inversion closure; the extreme slice cannot close."""
        boundary = [(eps, self.radius) for eps in (0, 1)]
        interior_ok = True
        for eps in (0, 1):
            for z in self.z_values():
                if -z not in self.z_values():
                    continue
                cuts = self.row_cuts(eps, z)
                mirror = self.row_cuts(eps, -z)
                expected = (
                    tuple(sorted(-v for v in cuts)) if eps == 0 else cuts
                )
                if expected != mirror:
                    interior_ok = False
        return {"interior_symmetric": interior_ok, "boundary_rows": boundary}


def xi_partition(
    p: TowerParams,
    n: int,
    prev: Optional[tuple[XiPartition, SpacerMap]] = None,
    *,
    row_budget: int = 65536,
) -> XiPartition:
    return XiPartition(p, n, prev, row_budget=row_budget)


# -- comb-vs-Haar certification -----------------------------------------------------


@dataclass
class DiscrReport:
    level: int
    threshold: Fraction
    exhaustive: bool
    pair_count: int
    atom_max: Optional[Fraction]
    union_probe_max: Optional[Fraction]
    sum_bound: Optional[Fraction]
    rows: list  # bounded sample of (label, lhs, rhs, |diff|)
    discarded: int
    passed_atoms: Optional[bool]
    passed_probe: Optional[bool]


def _comb_average(A: BoxSet, B: BoxSet, grid: CombGrid, f_measure: Fraction) -> Fraction:
    return pair_comb_sum(A, B, grid) / (grid.size**2 * f_measure)


def _haar_average(
    A: BoxSet, B: BoxSet, S: BoxSet, f_measure: Fraction
) -> Fraction:
    return pair_integral_right(A, B, S, S) / (S.measure**2 * f_measure)


def side_condition_ok(A: BoxSet, g: GroupElement, S: BoxSet, F: BoxSet) -> bool:
    """A g S inside F, the admissibility hypothesis of the certificate."""
    return bs.is_subset_mod_null(bs.product(bs.translate(g, A, "right"), S), F)


def certify_discr_meas(
    p: TowerParams,
    n: int,
    xi: XiPartition,
    *,
    sample_budget: int = 12,
    atoms_per_set: int = 3,
    seed: int = 0,
    exhaustive: bool = False,
    probe_iterations: int = 40,
) -> DiscrReport:
    """Comb average vs normalized Haar average of translate correlations.

    For admissible sets A, B and translators g, h the certificate compares

        (1/|D_n|^2) sum over comb pairs of lambda(Agx n Bhy)/lambda(F_n)

    with the same average taken against Lebesgue measure on S_n x S_n, and
    reports exact deviations against the 1/n target.

    Exhaustive mode evaluates every admissible single-atom pair at the
    identity translators.  Both averages are additive in A and in B, so
    the atom table determines the deviation of every union pair; the
    report carries the atom maximum, the rigorous (usually coarse) sum
    bound over all unions, and a greedy lower-bound probe of the worst
    union pair.  Sampled mode draws unions and translators directly.
    """
    if n < 1:
        raise ValueError("certification thresholds are undefined at level 1+ only")
    if xi.n != n:
        raise ValueError("partition level mismatch")
    threshold = Fraction(1, n)
    grid = comb_grid(p, n)
    S = level_box(p.b[n])
    F = level_box(p.a[n])
    f_measure = F.measure
    rows: list = []
    discarded = 0
    atom_max = union_probe_max = sum_bound = None
    pair_count = 0

    if exhaustive:
        atoms = [
            atom
            for atom in xi.iter_atoms()
            if side_condition_ok(xi.atom_box(atom), IDENTITY, S, F)
        ]
        boxes = [xi.atom_box(a) for a in atoms]
        diffs = []
        for i, Abox in enumerate(boxes):
            row = []
            for j, Bbox in enumerate(boxes):
                lhs = _comb_average(Abox, Bbox, grid, f_measure)
                rhs = _haar_average(Abox, Bbox, S, f_measure)
                row.append(lhs - rhs)
            diffs.append(row)
        pair_count = len(boxes) ** 2
        flat = [d for row in diffs for d in row]
        atom_max = max((abs(d) for d in flat), default=Fraction(0))
        sum_bound = sum((abs(d) for d in flat), Fraction(0))
        union_probe_max = _greedy_union_probe(diffs, probe_iterations)
        for i, a in enumerate(atoms[: min(4, len(atoms))]):
            rows.append((f"atom{i}/atom{i}", None, None, abs(diffs[i][i])))
    else:
        rng = Random(seed)
        worst = Fraction(0)
        tries = 0
        while pair_count < sample_budget and tries < sample_budget * 8:
            tries += 1
            A = xi.sample_union(rng, atoms_per_set)
            B = xi.sample_union(rng, atoms_per_set)
            g = _sample_translator(rng, p, n)
            h = _sample_translator(rng, p, n)
            Ag = bs.translate(g, A, "right")
            Bh = bs.translate(h, B, "right")
            if not (
                bs.is_subset_mod_null(bs.product(Ag, S), F)
                and bs.is_subset_mod_null(bs.product(Bh, S), F)
            ):
                discarded += 1
                continue
            lhs = _comb_average(Ag, Bh, grid, f_measure)
            rhs = _haar_average(Ag, Bh, S, f_measure)
            d = abs(lhs - rhs)
            worst = max(worst, d)
            rows.append((f"sample{pair_count}", lhs, rhs, d))
            pair_count += 1
        atom_max = worst if pair_count else None

    passed_atoms = None if atom_max is None else atom_max < threshold
    passed_probe = (
        None if union_probe_max is None else union_probe_max < threshold
    )
    return DiscrReport(
        n,
        threshold,
        exhaustive,
        pair_count,
        atom_max,
        union_probe_max,
        sum_bound,
        rows,
        discarded,
        passed_atoms,
        passed_probe,
    )


def _greedy_union_probe(diffs: list, iterations: int) -> Fraction:
    """Greedy local search for a union pair with a large |sum of diffs|.

    Returns an exact lower bound on the supremum of the deviation over
    all measurable union pairs (the exact supremum is a binary bilinear
    optimum and is not computed).
    """
    k = len(diffs)
    if k == 0:
        return Fraction(0)
    best = Fraction(0)
    for sign in (1, -1):
        u = [1] * k
        v = [1] * k
        for _ in range(iterations):
            changed = False
            row_gain = [sum(d for d, keep in zip(row, v) if keep) for row in diffs]
            for i in range(k):
                want = 1 if sign * row_gain[i] > 0 else 0
                if u[i] != want:
                    u[i] = want
                    changed = True
            col_gain = [
                sum(diffs[i][j] for i in range(k) if u[i]) for j in range(k)
            ]
            for j in range(k):
                want = 1 if sign * col_gain[j] > 0 else 0
                if v[j] != want:
                    v[j] = want
                    changed = True
            if not changed:
                break
        val = sum(diffs[i][j] for i in range(k) if u[i] for j in range(k) if v[j])
        best = max(best, abs(val))
    return best


def _sample_translator(rng: Random, p: TowerParams, n: int) -> GroupElement:
    """A small random element of F_n, biased toward the admissible core."""
    span = max(p.a[n] - 2 * p.b[n], 1)
    z = rng.randrange(-span + 1, span + 1)
    den = 4 * n
    num = rng.randrange(-span * den + 1, span * den + 1)
    return GroupElement(z, Fraction(num, den), rng.randrange(2))


# -- the (C,F) conditions ---------------------------------------------------------------


@dataclass
class GapQueryResult:
    g: GroupElement
    per_level: dict
    least_level: Optional[int]
    slack: dict


@dataclass
class CFReport:
    levels: list  # (level k, |C_{k+1}|, cf2, cf3, cf4)
    gap_queries: list


def _overhang(product_set: BoxSet, frame: BoxSet) -> dict:
    """Per-axis exceedance of the product hull beyond the frame hull."""
    out = {}
    ph, fh = product_set.bounds(), frame.bounds()
    for eps in (0, 1):
        if ph[eps] is None or fh[eps] is None:
            continue
        pz_lo, pz_hi, pr_lo, pr_hi = ph[eps]
        fz_lo, fz_hi, fr_lo, fr_hi = fh[eps]
        out[eps] = {
            "z": (max(0, fz_lo - pz_lo), max(0, pz_hi - fz_hi)),
            "real": (max(Fraction(0), fr_lo - pr_lo), max(Fraction(0), pr_hi - fr_hi)),
        }
    return out


def verify_cf_conditions(
    p: TowerParams,
    maps: Sequence[SpacerMap],
    gap_queries: Sequence[GroupElement] = (),
) -> CFReport:
    """Exact verification of the translate-set conditions at every level.

    Checks, for each built level k: the translate set C_{k+1} has more than
    one element; F_k C_{k+1} sits inside F_{k+1}; distinct translates of
    F_k are disjoint.  Any violation raises ConstructionError naming the
    level, the condition, and an offending pair.  For each query g the
    report records at which levels g F_k C_{k+1} stays inside F_{k+1},
    the least level from which the containment always holds, and the
    exact per-axis slack deficit at failing levels.
    """
    tower = Tower(p, maps)
    levels = []
    for k in range(len(maps)):
        C = tower.translates(k + 1)
        cf2 = len(C) > 1
        if not cf2:
            raise ConstructionError(f"(CF2) failed at level {k}: |C|={len(C)}")
        Fk, Fk1 = tower.F(k), tower.F(k + 1)
        spread = bs.spread(Fk, C, "right")
        cf3 = bs.is_subset_mod_null(spread.set, Fk1)
        if not cf3:
            raise ConstructionError(
                f"(CF3) failed at level {k}: translates of F_{k} leave F_{k + 1}"
            )
        cf4 = spread.disjoint
        if not cf4:
            pair = _find_overlapping_pair(Fk, C)
            raise ConstructionError(
                f"(CF4) failed at level {k}: translates by {pair[0]} and "
                f"{pair[1]} overlap"
            )
        levels.append((k, len(C), cf2, cf3, cf4))

    queries = []
    for g in gap_queries:
        per_level = {}
        slack = {}
        for k in range(len(maps)):
            moved = bs.spread(
                bs.translate(g, tower.F(k), "left"), tower.translates(k + 1), "right"
            ).set
            ok = bs.is_subset_mod_null(moved, tower.F(k + 1))
            per_level[k] = ok
            if not ok:
                slack[k] = _overhang(moved, tower.F(k + 1))
        least = None
        for k in sorted(per_level, reverse=True):
            if per_level[k]:
                least = k
            else:
                break
        queries.append(GapQueryResult(g, per_level, least, slack))
    return CFReport(levels, queries)


def _find_overlapping_pair(Fk: BoxSet, C: Sequence[GroupElement]):
    sets = [bs.translate(c, Fk, "right") for c in C]
    for i in range(len(C)):
        for j in range(i + 1, len(C)):
            if bs.intersect(sets[i], sets[j]).measure:
                return (C[i], C[j])
    return (None, None)


# -- window sandwich of the translated core -----------------------------------------


@dataclass(frozen=True)
class MainlemWindows:
    Lminus: BoxSet
    Lplus: BoxSet
    fS: BoxSet
    sym_ratio: Fraction


def mainlem_windows(
    p: TowerParams, n: int, fprime: GroupElement, h: GridPoint
) -> MainlemWindows:
    """Window sandwich of a translated core set f S_n.

    For f = fprime * phi_{n-1}(h) with fprime in Ftilde_{n-1}, the set
    f S_n is squeezed between unions of whole windows: inner windows
    indexed by the grid of radius n-2 around h (around the reflected
    index h* on the opposite level), outer ones by radius n.  Both
    inclusions are exact modulo null sets, and the inner defect ratio
    lambda(fS_n minus inner) / lambda(S_n) is returned.
    """
    if n < 2:
        raise ValueError("window sandwich needs n >= 2")
    if n > p.depth:
        raise ValueError(f"level {n} not buildable")
    at = p.atilde[n - 1]
    Ft = level_box(at)
    if not Ft.contains_point(fprime):
        raise ValueError("fprime must lie in Ftilde_{n-1}")
    f = multiply(fprime, phi_pair(at, h))
    alpha = fprime.eps
    beta = 1 - alpha
    hstar = (h[0], -h[1])
    S = level_box(p.b[n])
    fS = bs.translate(f, S, "left")

    def windows(level_eps: int, center: GridPoint, radius: int) -> BoxSet:
        part = BoxSet([Box(level_eps, -at, at, Fraction(-at), Fraction(at))])
        elems = [
            phi_pair(at, (center[0] + u, center[1] + v))
            for u, v in square_grid(radius)
        ]
        return bs.spread(part, elems, "right").set

    lminus = bs.union(windows(alpha, h, n - 2), windows(beta, hstar, n - 2))
    lplus = bs.union(windows(alpha, h, n), windows(beta, hstar, n))
    if not bs.is_subset_mod_null(lminus, fS):
        raise ConstructionError("inner window union escapes the translated core")
    if not bs.is_subset_mod_null(fS, lplus):
        raise ConstructionError("translated core escapes the outer window union")
    ratio = bs.combine(fS, lminus, "symdiff").measure / S.measure
    return MainlemWindows(lminus, lplus, fS, ratio)


# -- the transport core -------------------------------------------------------------


def core_set(p: TowerParams, n: int) -> BoxSet:
    """{f in F_n : f S_n S_n^{-1} inside F_n}, exact modulo null sets.

    Computed generically: every box R of the product S_n S_n^{-1} imposes
    one interval constraint per axis on f (with the real-axis constraint
    reflected on level 1), and the core is F_n intersected with all of
    them.
    """
    if not 1 <= n <= p.depth:
        raise ValueError(f"level {n} out of range")
    a = p.a[n]
    S = level_box(p.b[n])
    spread_set = bs.product(S, bs.invert_set(S))
    af = Fraction(a)
    constraints = {
        0: [-a, a, -af, af],
        1: [-a, a, -af, af],
    }
    for R in spread_set.boxes:
        z_lo, z_hi = -a - R.zlo - 1, a - R.zhi
        for m in (0, 1):
            c = constraints[m]
            c[0] = max(c[0], z_lo)
            c[1] = min(c[1], z_hi)
            if m == 0:
                c[2] = max(c[2], -af - R.p)
                c[3] = min(c[3], af - R.q)
            else:
                c[2] = max(c[2], R.q - af)
                c[3] = min(c[3], R.p + af)
    boxes = []
    for m in (0, 1):
        z_lo, z_hi, r_lo, r_hi = constraints[m]
        if z_lo < z_hi and r_lo < r_hi:
            boxes.append(Box(m, z_lo, z_hi, r_lo, r_hi))
    return bs.intersect(BoxSet(boxes), level_box(a))
