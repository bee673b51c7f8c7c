"""Geometric facts used by the lower-bound arguments, checked on finite instances.

* rationals of bounded height in a box of tiny volume are affinely dependent;
* hyperplane neighbourhoods carry a power-small share of a ball's mass;
* greedy selection of disjoint rectangles whose enlargements cover a family.

All membership and incidence tests use exact rational arithmetic.
"""
from __future__ import annotations

import math
from collections import defaultdict
from dataclasses import dataclass, field
from fractions import Fraction
from itertools import product

import numpy as np

from .errors import PreconditionError
from .fractal import DigitSystem, measure_of_region, sample_points_exact
from .regions import RegionUnion, rationalize

# ---------------------------------------------------------------------------
# simplex lemma


@dataclass
class RationalPointSet:
    """Distinct rational points ``p/q`` (``q <= Q``) of a box, in lowest terms."""

    dim: int
    points: list  # (p tuple, q)

    def values(self):
        return [tuple(Fraction(pj, q) for pj in p) for p, q in self.points]


@dataclass
class SimplexResult:
    coplanar: bool
    witness: list | None
    points: RationalPointSet
    admissible: bool
    volume: Fraction
    bound: Fraction


def _as_box(box, d):
    if d == 1 and not isinstance(box[0], (tuple, list)):
        box = (box,)
    box = tuple((Fraction(a), Fraction(b)) for a, b in box)
    if len(box) != d:
        raise PreconditionError("box dimension mismatch")
    if any(b < a for a, b in box):
        raise PreconditionError("malformed box")
    return box


def simplex_bound(d: int, Q: int) -> Fraction:
    """Largest admissible volume ``Q**-(1+d) / d!``."""
    return Fraction(1, Q ** (d + 1) * math.factorial(d))


def rational_points(d: int, Q: int, box) -> RationalPointSet:
    """Every rational point with denominator at most Q in the closed box."""
    box = _as_box(box, d)
    seen = set()
    pts = []
    for q in range(1, Q + 1):
        ranges = [range(math.ceil(q * a), math.floor(q * b) + 1) for a, b in box]
        for p in product(*ranges):
            g = math.gcd(q, *p)
            key = (tuple(v // g for v in p), q // g)
            if key not in seen:
                seen.add(key)
                pts.append(key)
    return RationalPointSet(d, pts)


def _affine_basis(points, d):
    """Indices of a maximal affinely independent subset (homogeneous elimination)."""
    rows = []  # (row, pivot)
    basis = []
    for i, (p, q) in enumerate(points):
        v = [Fraction(x) for x in p] + [Fraction(q)]
        for row, piv in rows:
            if v[piv]:
                f = v[piv] / row[piv]
                v = [a - f * b for a, b in zip(v, row)]
        piv = next((k for k, a in enumerate(v) if a), None)
        if piv is not None:
            rows.append((v, piv))
            basis.append(i)
            if len(basis) == d + 1:
                break
    return basis


def simplex_check(d: int, Q: int, box, demonstration: bool = False) -> SimplexResult:
    """Do all rationals with ``q <= Q`` in ``box`` lie on one affine hyperplane?

    The box must have volume at most ``Q**-(1+d)/d!``.  With
    ``demonstration=True`` larger boxes are accepted and flagged, which shows
    the volume condition is needed.

    >>> simplex_check(1, 10, (Fraction(3, 10), Fraction(309, 1000))).coplanar
    True
    """
    if d < 1 or Q < 1:
        raise PreconditionError("need d >= 1 and Q >= 1")
    box = _as_box(box, d)
    vol = math.prod((b - a for a, b in box), start=Fraction(1))
    bound = simplex_bound(d, Q)
    admissible = vol <= bound
    if not admissible and not demonstration:
        raise PreconditionError(f"box volume {vol} exceeds Q^-(1+d)/d! = {bound}")
    pts = rational_points(d, Q, box)
    basis = _affine_basis(pts.points, d)
    witness = None
    if len(basis) == d + 1:
        witness = [tuple(Fraction(pj, pts.points[i][1]) for pj in pts.points[i][0])
                   for i in basis]
    return SimplexResult(witness is None, witness, pts, admissible, vol, bound)


def random_admissible_box(d: int, Q: int, rng: np.random.Generator) -> tuple:
    """A random box of volume at most the simplex bound.

    Sides are elongated (aspect ratio up to ``Q**(d+1)``) and half the boxes
    are centred near a random rational of height at most Q, so that many of
    them contain several points.
    """
    bound = simplex_bound(d, Q)
    vol = bound * Fraction(int(rng.integers(500, 1001)), 1000)
    if d == 1:
        sides = [vol]
    else:
        logs = rng.uniform(-1.0, 1.0, d)
        logs -= logs.mean()
        spread = (d + 1) * math.log(Q) / 2 if Q > 1 else 1.0
        target = float(vol) ** (1.0 / d)
        sides = [min(Fraction(1), rationalize(target * math.exp(spread * s), 1 << 40))
                 for s in logs[:-1]]
        rest = vol / math.prod(sides, start=Fraction(1))
        sides.append(rest)
    if rng.random() < 0.5:
        q = int(rng.integers(1, Q + 1))
        centre = [Fraction(int(rng.integers(0, q + 1)), q) for _ in range(d)]
        centre = [c + s * Fraction(int(rng.integers(-500, 501)), 1000)
                  for c, s in zip(centre, sides)]
    else:
        centre = [rationalize(float(rng.random()), 1 << 40) for _ in range(d)]
    return tuple((c - s / 2, c + s / 2) for c, s in zip(centre, sides))


@dataclass
class SimplexTrials:
    d: int
    Q: int
    trials: int
    violations: int
    multi_point: int
    max_points: int
    witnesses: list = field(default_factory=list)
    rows: list = field(default_factory=list)


def simplex_trials(d: int, Q: int, trials: int, seed: int = 0) -> SimplexTrials:
    """Run :func:`simplex_check` on ``trials`` random admissible boxes."""
    rng = np.random.default_rng([seed, d, Q])
    out = SimplexTrials(d, Q, trials, 0, 0, 0)
    for t in range(trials):
        box = random_admissible_box(d, Q, rng)
        res = simplex_check(d, Q, box)
        n = len(res.points.points)
        out.max_points = max(out.max_points, n)
        out.multi_point += n >= d + 1
        if not res.coplanar:
            out.violations += 1
            out.witnesses.append((box, res.witness))
        out.rows.append((t, n, res.coplanar))
    return out


# ---------------------------------------------------------------------------
# absolute decay


@dataclass
class DecaySample:
    r: float
    eps: float
    kind: str
    ratio: float
    err: float


@dataclass
class DecayReport:
    C_emp: float
    exponent: float
    samples: list
    bins: list
    slope: float | None


# unit normals with rational entries for sloped lines
_NORMALS = ((3, 4), (4, 3), (3, -4), (4, -3))


def _strip_box_mass(sys: DigitSystem, box, a, lo: Fraction, hi: Fraction,
                    rel_tol: float = 0.02, max_cells: int = 1 << 20):
    """Bounds on ``mu(box ∩ {lo < a.z < hi})`` by descending product cylinders.

    A cylinder is kept whole when it lies inside both sets, dropped when it
    misses either, and split otherwise.  Split cylinders left at the end
    only count towards the upper bound.
    """
    b = sys.base
    D = [np.array(Dj, dtype=np.int64) for Dj in sys.digits]
    m = len(D[0]) * len(D[1])
    cells = np.zeros((1, 2), dtype=np.int64)
    inside = Fraction(0)
    a1, a2 = a
    off_lo = min(0, a1) + min(0, a2)
    off_hi = max(0, a1) + max(0, a2)
    n = 0
    while True:
        scale = b ** n
        f = a1 * cells[:, 0] + a2 * cells[:, 1]
        fmin, fmax = f + off_lo, f + off_hi
        L, H = lo * scale, hi * scale
        s_in = (fmin >= math.ceil(L)) & (fmax <= math.floor(H))
        s_out = (fmax <= math.floor(L)) | (fmin >= math.ceil(H))
        b_in = np.ones(len(cells), bool)
        b_out = np.zeros(len(cells), bool)
        for j in range(2):
            x0, x1 = box[j][0] * scale, box[j][1] * scale
            c = cells[:, j]
            b_in &= (c >= math.ceil(x0)) & (c + 1 <= math.floor(x1))
            b_out |= (c + 1 <= math.floor(x0)) | (c >= math.ceil(x1))
        full = s_in & b_in
        gone = s_out | b_out
        inside += Fraction(int(full.sum()), m ** n)
        cells = cells[~full & ~gone]
        partial = Fraction(len(cells), m ** n)
        if not len(cells) or partial <= rel_tol * (inside + partial) \
                or len(cells) * m > max_cells or n >= 25:
            return inside, inside + partial
        cells = np.repeat(cells * b, m, axis=0)
        add = np.array([(x, y) for x in D[0] for y in D[1]], dtype=np.int64)
        cells = cells + np.tile(add, (len(cells) // m, 1))
        n += 1


def _box_mass(sys, box):
    return measure_of_region(sys, [box] if sys.dim == 2 else [box[0]])


def decay_check(sys: DigitSystem, n_samples: int, seed: int = 0,
                eps_ratio=(1e-3, 1.0), r_range=None) -> DecayReport:
    """Worst observed ``mu(B ∩ L^eps) (r/eps)**(delta+1-d) / mu(B)``.

    ``x`` is drawn from the natural measure, ``r`` and ``eps/r`` log-uniformly.
    Balls are sup-norm balls.  In d=1 the hyperplane is a point (the centre
    or a random point of the ball); in d=2 it is an axis-parallel line or a
    line with normal in ``{(3,4), (4,3), (3,-4), (4,-3)}/5``.  The numerator
    uses the upper measure bound and the denominator the lower one.
    """
    d = sys.dim
    if d not in (1, 2):
        raise PreconditionError("decay checks are implemented for d in {1, 2}")
    delta = sys.hausdorff_dim()
    if d == 2 and delta <= 1:
        raise PreconditionError("d = 2 needs delta > 1")
    if n_samples < 1:
        raise PreconditionError("need at least one sample")
    expo = delta + 1 - d
    lo_r, hi_r = r_range or (float(sys.base) ** -6, 0.25)
    e_lo, e_hi = eps_ratio
    if d == 2:
        e_lo = max(e_lo, 1e-2)
    rng = np.random.default_rng([seed, 7])
    xs = sample_points_exact(sys, n_samples, 24, seed)
    samples = []
    for x in xs:
        r = rationalize(math.exp(rng.uniform(math.log(lo_r), math.log(hi_r))), 1 << 30)
        t = math.exp(rng.uniform(math.log(e_lo), math.log(e_hi)))
        eps = rationalize(float(r) * t, 1 << 40)
        if eps <= 0 or eps >= r:
            continue
        ball = tuple((xj - r, xj + r) for xj in x)
        through = rng.random() < 0.5
        off = [Fraction(0) if through else rationalize(float(rng.uniform(-1, 1)), 1 << 20) * r
               for _ in range(d)]
        y = tuple(xj + o for xj, o in zip(x, off))
        muB = _box_mass(sys, ball).lower
        if muB == 0:
            continue
        if d == 1:
            kind = "point"
            a0 = max(ball[0][0], y[0] - eps, Fraction(0))
            a1 = min(ball[0][1], y[0] + eps, Fraction(1))
            mv = measure_of_region(sys, [(a0, a1)]) if a0 <= a1 else None
            num, num_lo = (mv.upper, mv.lower) if mv else (0, 0)
        else:
            k = int(rng.integers(0, 6))
            if k < 2:
                kind = f"axis{k}"
                sub = list(ball)
                sub[k] = (max(ball[k][0], y[k] - eps, Fraction(0)),
                          min(ball[k][1], y[k] + eps, Fraction(1)))
                mv = measure_of_region(sys, [tuple(sub)]) if sub[k][0] <= sub[k][1] else None
                num, num_lo = (mv.upper, mv.lower) if mv else (0, 0)
            else:
                a = _NORMALS[k - 2]
                kind = f"slope{a[0]}/{a[1]}"
                # |a.(z - y)| / 5 < eps
                c = a[0] * y[0] + a[1] * y[1]
                num_lo, num = _strip_box_mass(sys, ball, a, c - 5 * eps, c + 5 * eps)
        scale = (r / eps) ** expo if expo else 1.0
        ratio = float(num / muB) * float(scale)
        err = float((num - num_lo) / muB) * float(scale)
        samples.append(DecaySample(float(r), float(eps), kind, ratio, err))
    if not samples:
        raise PreconditionError("no usable samples")
    bins, slope = _decay_trend(samples)
    return DecayReport(max(s.ratio for s in samples), expo, samples, bins, slope)


def _decay_trend(samples, nbins: int = 6):
    """Per-bin maxima over ``log(eps/r)`` and their log-log regression slope."""
    t = np.log([s.eps / s.r for s in samples])
    c = np.array([s.ratio for s in samples])
    edges = np.linspace(t.min(), t.max() + 1e-12, nbins + 1)
    bins = []
    for a, b in zip(edges, edges[1:]):
        sel = (t >= a) & (t < b) & (c > 0)
        if sel.sum() >= 5:
            bins.append((float(math.exp((a + b) / 2)), float(c[sel].max()), int(sel.sum())))
    if len(bins) < 3:
        return bins, None
    fit = np.polyfit(np.log([b[0] for b in bins]), np.log([b[1] for b in bins]), 1)
    return bins, float(fit[0])


# ---------------------------------------------------------------------------
# 5r covering for rectangles


@dataclass(frozen=True)
class Rect:
    """Closed box with exact centre and half-sides; ``scale`` orders the greedy pass."""

    center: tuple
    half: tuple
    scale: float = 0.0


def rect_from_scale(center, r, u_vec) -> Rect:
    """Box with half-sides ``r**u_j`` (rounded to fractions)."""
    r = float(r)
    if r <= 0:
        raise PreconditionError("scale must be positive")
    half = tuple(rationalize(r ** float(u), 1 << 40) for u in u_vec)
    if any(h <= 0 for h in half):
        raise PreconditionError("half-side underflows")
    return Rect(tuple(Fraction(c) for c in center), half, r)


def cover_factor(u_vec) -> float:
    """Enlargement ``5**(max u / min u)``."""
    u = [float(v) for v in u_vec]
    if not u or min(u) <= 0:
        raise PreconditionError("exponents must be positive")
    return 5.0 ** (max(u) / min(u))


@dataclass
class CoverResult:
    selected: list
    factor: float
    disjoint: bool
    covered: bool
    blockers: dict


_REL = 1e-9


def _floats(R: Rect):
    return [float(c) for c in R.center], [float(h) for h in R.half]


def _meets(r: Rect, s: Rect, fr=None, fs=None) -> bool:
    """Closed boxes intersect; floats decide unless within rounding of a tie."""
    if fr is not None:
        (rc, rh), (sc, sh) = fr, fs
        sure_in = True
        for a, b, h, k in zip(rc, sc, rh, sh):
            gap, reach = abs(a - b), h + k
            if gap > reach * (1 + _REL) + 1e-300:
                return False
            if gap >= reach * (1 - _REL):
                sure_in = False
        if sure_in:
            return True
    return all(abs(a - b) <= h + k for a, b, h, k in zip(r.center, s.center, r.half, s.half))


def _inside_enlarged(r: Rect, s: Rect, t: Fraction, fr=None, fs=None) -> bool:
    if fr is not None:
        (rc, rh), (sc, sh) = fr, fs
        tf = float(t)
        if all(abs(a - b) + h < tf * k * (1 - _REL)
               for a, b, h, k in zip(rc, sc, rh, sh)):
            return True
    return all(abs(a - b) + h <= t * k
               for a, b, h, k in zip(r.center, s.center, r.half, s.half))


def _check_exponents(rects, u_vec, rel: float = 1e-6):
    for R in rects:
        if R.scale <= 0 or R.scale == 1:
            raise PreconditionError("each rectangle needs a scale in (0, 1) or (1, inf)")
        lr = math.log(R.scale)
        for h, u in zip(R.half, u_vec):
            if abs(math.log(h) - float(u) * lr) > rel * max(1.0, abs(float(u) * lr)):
                raise PreconditionError("rectangles do not share the exponent vector")


def greedy_disjoint(rects, factor: float) -> CoverResult:
    """Greedy maximal disjoint subfamily, largest scale first, then by centre.

    Each rejected box records the selected box it meets (``blockers``); the
    cover check asks that box, enlarged by ``factor`` about its centre, to
    contain the rejected one.  When that fails for some box, the union of
    all enlarged boxes is tested directly (d <= 2).
    """
    if not rects:
        return CoverResult([], factor, True, True, {})
    d = len(rects[0].center)
    order = sorted(range(len(rects)),
                   key=lambda i: (-rects[i].scale, rects[i].center))
    cell = [2 * float(max(R.half[j] for R in rects)) for j in range(d)]
    fl = [_floats(R) for R in rects]
    grid = defaultdict(list)

    def key(R):
        return tuple(int(math.floor(float(c) / w)) for c, w in zip(R.center, cell))

    selected, blockers = [], {}
    for i in order:
        R = rects[i]
        k = key(R)
        hit = None
        for off in product((-1, 0, 1), repeat=d):
            for j in grid.get(tuple(a + o for a, o in zip(k, off)), ()):
                if _meets(R, rects[j], fl[i], fl[j]):
                    hit = j
                    break
            if hit is not None:
                break
        if hit is None:
            selected.append(i)
            grid[k].append(i)
        else:
            blockers[i] = hit
    disjoint = _pairwise_disjoint([rects[i] for i in selected], cell)
    t = Fraction(math.floor(factor * 10 ** 9) - 1, 10 ** 9)
    covered = all(_inside_enlarged(rects[i], rects[j], t, fl[i], fl[j])
                  for i, j in blockers.items())
    if not covered and d <= 2:
        covered = _union_covers(rects, selected, t)
    return CoverResult(sorted(selected), factor, disjoint, covered, blockers)


def _pairwise_disjoint(sel, cell) -> bool:
    d = len(cell)
    fl = [_floats(R) for R in sel]
    grid = defaultdict(list)
    for idx, R in enumerate(sel):
        grid[tuple(int(math.floor(float(c) / w)) for c, w in zip(R.center, cell))].append(idx)
    for idx, R in enumerate(sel):
        k = tuple(int(math.floor(float(c) / w)) for c, w in zip(R.center, cell))
        for off in product((-1, 0, 1), repeat=d):
            for j in grid.get(tuple(a + o for a, o in zip(k, off)), ()):
                if j != idx and _meets(R, sel[j], fl[idx], fl[j]):
                    return False
    return True


def _union_covers(rects, selected, t: Fraction) -> bool:
    d = len(rects[0].center)
    big = [tuple((c - t * h, c + t * h) for c, h in zip(S.center, S.half))
           for S in (rects[i] for i in selected)]
    for R in rects:
        box = tuple((c - h, c + h) for c, h in zip(R.center, R.half))
        clipped = []
        for B in big:
            lo = [max(a[0], b[0]) for a, b in zip(B, box)]
            hi = [min(a[1], b[1]) for a, b in zip(B, box)]
            if all(l <= h for l, h in zip(lo, hi)):
                clipped.append(tuple(zip(lo, hi)))
        if not clipped:
            return False
        comps = [c[0] for c in clipped] if d == 1 else clipped
        vol = RegionUnion(comps, d).volume()
        if vol != math.prod((h - l for l, h in box), start=Fraction(1)):
            return False
    return True


def five_r_cover(rects, u_vec) -> CoverResult:
    """Disjoint subfamily whose ``5**(max u/min u)``-enlargements cover the family.

    Every rectangle must have half-sides ``r_i**u_j`` for its own scale ``r_i``.
    """
    u_vec = tuple(u_vec)
    rects = list(rects)
    for R in rects:
        if len(R.center) != len(u_vec) or len(R.half) != len(u_vec):
            raise PreconditionError("rectangle dimension does not match u")
    factor = cover_factor(u_vec)
    _check_exponents(rects, u_vec)
    return greedy_disjoint(rects, factor)


def random_rect_family(n: int, u_vec, rng: np.random.Generator,
                       r_range=(1e-3, 1e-1), centers: int = 0) -> list:
    """``n`` rectangles with log-uniform scales and rational centres in the unit cube.

    With ``centers > 0`` the centres are drawn from that many clusters, which
    forces heavy overlap.
    """
    if n < 0:
        raise PreconditionError("family size must be non-negative")
    lo, hi = (float(v) for v in r_range)
    if not 0 < lo <= hi:
        raise PreconditionError("need 0 < r_lo <= r_hi")
    d = len(tuple(u_vec))
    hubs = rng.random((centers, d)) if centers > 0 else None
    out = []
    for _ in range(n):
        r = math.exp(rng.uniform(math.log(lo), math.log(hi)))
        if hubs is not None:
            base = hubs[rng.integers(0, centers)]
            c = [min(1.0, max(0.0, float(v) + rng.normal(0, 2 * r))) for v in base]
        else:
            c = [float(v) for v in rng.random(d)]
        out.append(rect_from_scale([Fraction(v).limit_denominator(1 << 30) for v in c],
                                   r, u_vec))
    return out
