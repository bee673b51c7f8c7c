"""Missing-digits sets ``K(b, D)``, their cylinders and natural measure."""
from __future__ import annotations

import json
import math
from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from .cells import Scale, max_depth_for


@dataclass(frozen=True)
class DigitSystem:
    """Base ``b`` with one admissible digit set per coordinate.

    >>> DigitSystem(3, ((0, 2),)).hausdorff_dim()
    0.6309297535714574
    """

    base: int
    digits: tuple
    lebesgue: bool = False

    def __post_init__(self):
        b = int(self.base)
        if b < 3:
            raise ValueError("base must be at least 3")
        digs = tuple(tuple(sorted(set(int(a) for a in D))) for D in self.digits)
        if not digs:
            raise ValueError("need at least one coordinate")
        for D in digs:
            if not D or any(a < 0 or a >= b for a in D):
                raise ValueError(f"digits {D} out of range for base {b}")
        full = all(len(D) == b for D in digs)
        object.__setattr__(self, "base", b)
        object.__setattr__(self, "digits", digs)
        object.__setattr__(self, "lebesgue", bool(self.lebesgue) or full)

    @classmethod
    def uniform(cls, base: int, digits, dim: int = 1) -> "DigitSystem":
        return cls(base, tuple(tuple(digits) for _ in range(dim)))

    @classmethod
    def full(cls, base: int, dim: int = 1) -> "DigitSystem":
        return cls(base, tuple(tuple(range(base)) for _ in range(dim)), True)

    @property
    def dim(self) -> int:
        return len(self.digits)

    @property
    def count(self) -> int:
        return math.prod(len(D) for D in self.digits)

    def hausdorff_dim(self) -> float:
        return sum(math.log(len(D)) / math.log(self.base) for D in self.digits)

    def hull(self, j: int = 0) -> tuple[Fraction, Fraction]:
        """Smallest interval containing the j-th coordinate projection of K."""
        D = self.digits[j]
        return Fraction(D[0], self.base - 1), Fraction(D[-1], self.base - 1)

    def scale(self, j: int = 0, depth: int | None = None) -> Scale:
        return _scale(self.base, self.digits[j], depth)

    def to_json(self) -> str:
        return json.dumps({"base": self.base, "dim": self.dim,
                           "digits": [list(D) for D in self.digits]})

    @classmethod
    def from_json(cls, text) -> "DigitSystem":
        obj = json.loads(text) if isinstance(text, str) else text
        digs = obj["digits"]
        if digs and not isinstance(digs[0], (list, tuple)):
            digs = [digs] * int(obj.get("dim", 1))
        if "dim" in obj and len(digs) != int(obj["dim"]):
            raise ValueError("dim does not match the number of digit sets")
        return cls(int(obj["base"]), tuple(tuple(D) for D in digs))


_SCALES: dict = {}


def _scale(base, digits, depth):
    key = (base, tuple(digits), depth)
    if key not in _SCALES:
        _SCALES[key] = Scale(base, digits, depth)
    return _SCALES[key]


def hausdorff_dim(sys: DigitSystem) -> float:
    return sys.hausdorff_dim()


@dataclass(frozen=True)
class CylinderWord:
    """Digit word; in dimension d each letter is a d-tuple."""

    word: tuple = ()

    def __post_init__(self):
        object.__setattr__(self, "word", tuple(
            tuple(int(c) for c in a) if isinstance(a, (tuple, list)) else int(a)
            for a in self.word))

    @property
    def depth(self) -> int:
        return len(self.word)

    def letters(self, dim: int):
        for a in self.word:
            if isinstance(a, tuple):
                yield a
            elif dim == 1:
                yield (a,)
            else:
                raise ValueError(f"letter {a} needs one digit per coordinate")

    def is_prefix_of(self, other: "CylinderWord") -> bool:
        return other.word[: self.depth] == self.word


def cylinder_box(sys: DigitSystem, w: CylinderWord | tuple) -> tuple:
    """Closed b-adic box of the cylinder ``w`` as ``((lo, hi), ...)`` per axis."""
    if not isinstance(w, CylinderWord):
        w = CylinderWord(tuple(w))
    b = sys.base
    lo = [0] * sys.dim
    for letter in w.letters(sys.dim):
        if len(letter) != sys.dim:
            raise ValueError("letter dimension mismatch")
        for j, a in enumerate(letter):
            if a not in sys.digits[j]:
                raise ValueError(f"digit {a} not admissible on axis {j}")
            lo[j] = lo[j] * b + a
    side = Fraction(1, b ** w.depth)
    return tuple((lo[j] * side, (lo[j] + 1) * side) for j in range(sys.dim))


@dataclass(frozen=True)
class MeasureValue:
    """Exact rational estimate with a rigorous symmetric error bound."""

    value: Fraction
    error_bound: Fraction

    @property
    def lower(self) -> Fraction:
        return max(Fraction(0), self.value - self.error_bound)

    @property
    def upper(self) -> Fraction:
        return min(Fraction(1), self.value + self.error_bound)

    @classmethod
    def from_bounds(cls, lo: Fraction, hi: Fraction) -> "MeasureValue":
        return cls((lo + hi) / 2, (hi - lo) / 2)

    def __float__(self) -> float:
        return float(self.value)


def _axis_bracket(sc: Scale, a: Fraction, c: Fraction):
    """Certain and possible cell ranges of the closed interval [a, c]."""
    Xa, Ea = sc.cell(a.numerator, a.denominator)
    Xc, Ec = sc.cell(c.numerator, c.denominator)
    possible = (Xa, Xc if Ec else min(Xc + 1, sc.size))
    certain = (Xa if Ea else Xa + 1, Xc)
    return certain, possible


def _merge_int(ranges):
    out = []
    for s, e in sorted(r for r in ranges if r[1] > r[0]):
        if out and s <= out[-1][1]:
            if e > out[-1][1]:
                out[-1][1] = e
        else:
            out.append([s, e])
    return out


def _mass_1d(sc: Scale, ranges) -> int:
    return sum(sc.cdf(e) - sc.cdf(s) for s, e in _merge_int(ranges))


def _mass_2d(sx: Scale, sy: Scale, boxes) -> int:
    """Exact product mass of a union of cell boxes (sweep over x breakpoints)."""
    boxes = [bx for bx in boxes if bx[1] > bx[0] and bx[3] > bx[2]]
    if not boxes:
        return 0
    xs = sorted({v for bx in boxes for v in bx[:2]})
    tot = 0
    for x0, x1 in zip(xs, xs[1:]):
        ys = [(bx[2], bx[3]) for bx in boxes if bx[0] <= x0 and bx[1] >= x1]
        if ys:
            wx = sx.cdf(x1) - sx.cdf(x0)
            if wx:
                tot += wx * _mass_1d(sy, ys)
    return tot


def measure_of_region(sys: DigitSystem, region, max_depth: int | None = None) -> MeasureValue:
    """``mu(region)`` resolved down to cylinders of depth ``max_depth``.

    ``region`` is a :class:`~jarnik.regions.RegionUnion` or a list of components.
    Cylinders meeting the region only partially at the cutoff depth are the
    only source of error; b-adic endpoints resolve exactly.
    """
    comps = getattr(region, "components", region)
    if max_depth is None:
        max_depth = max_depth_for(sys.base)
    scales = [_scale(sys.base, D, max_depth) for D in sys.digits]
    if sys.dim == 1:
        sc = scales[0]
        cert, poss = [], []
        for comp in comps:
            a, c = _interval(comp)
            if c < a:
                raise ValueError("malformed component")
            ce, po = _axis_bracket(sc, a, c)
            cert.append(ce)
            poss.append(po)
        lo = Fraction(_mass_1d(sc, cert), sc.total)
        hi = Fraction(_mass_1d(sc, poss), sc.total)
        return MeasureValue.from_bounds(lo, hi)
    if sys.dim != 2:
        raise ValueError("measures are implemented for d in {1, 2}")
    sx, sy = scales
    cert, poss = [], []
    for comp in comps:
        (a, c), (e, f) = (_interval(comp[0]), _interval(comp[1]))
        if c < a or f < e:
            raise ValueError("malformed component")
        cx, px = _axis_bracket(sx, a, c)
        cy, py = _axis_bracket(sy, e, f)
        cert.append((*cx, *cy))
        poss.append((*px, *py))
    unit = sx.total * sy.total
    lo = Fraction(_mass_2d(sx, sy, cert), unit)
    hi = Fraction(_mass_2d(sx, sy, poss), unit)
    return MeasureValue.from_bounds(lo, hi)


def _interval(comp):
    a, c = comp
    return max(Fraction(a), Fraction(0)), min(Fraction(c), Fraction(1))


# ---------------------------------------------------------------------------
# distances


def _axis_distance(base: int, D: tuple, x: Fraction, max_depth: int):
    """Exact distance from ``x`` to the one-dimensional missing-digits set.

    Walks the base-b expansion of x.  The nearest points of K on either side
    are the extreme points of the last admissible sibling cylinders; the walk
    stops at the first inadmissible digit, or when the remainder repeats
    (then every digit is admissible and x lies in K).
    """
    b = base
    kmin = Fraction(D[0], b - 1)
    kmax = Fraction(D[-1], b - 1)
    if x <= kmin:
        return kmin - x, kmin - x
    if x >= kmax:
        return x - kmax, x - kmax
    num, den = x.numerator, x.denominator
    left = right = None
    prefix = Fraction(0)
    scale = Fraction(1)
    seen = set()
    r = num  # x = prefix + r/den * scale
    for _ in range(max_depth):
        if r in seen:
            return Fraction(0), Fraction(0)
        seen.add(r)
        scale /= b
        t, r = divmod(r * b, den)
        below = [a for a in D if a < t]
        above = [a for a in D if a > t]
        if below:
            left = prefix + below[-1] * scale + kmax * scale
        if above:
            right = prefix + above[0] * scale + kmin * scale
        if t not in D:
            cands = [x - left] if left is not None else []
            if right is not None:
                cands.append(right - x)
            d = min(cands)
            return d, d
        prefix += t * scale
    cands = [abs(x - (prefix + kmin * scale))]
    if left is not None:
        cands.append(x - left)
    if right is not None:
        cands.append(right - x)
    return Fraction(0), min(cands)


def distance_to_set(sys: DigitSystem, x, max_depth: int = 10_000):
    """Sup-norm distance ``(lower, upper)`` from a rational point to K.

    >>> distance_to_set(DigitSystem(3, ((0, 2),)), Fraction(1, 2))
    (Fraction(1, 6), Fraction(1, 6))
    """
    if not isinstance(x, (tuple, list)):
        x = (x,)
    if len(x) != sys.dim:
        raise ValueError("point dimension mismatch")
    lo = up = Fraction(0)
    for j, xj in enumerate(x):
        l, u = _axis_distance(sys.base, sys.digits[j], Fraction(xj), max_depth)
        lo = max(lo, l)
        up = max(up, u)
    return lo, up


# ---------------------------------------------------------------------------
# sampling

BLOCK = 1024


def sample_digits(sys: DigitSystem, n: int, depth: int, seed: int) -> np.ndarray:
    """Digit array of shape ``(n, dim, depth)`` drawn from the natural measure.

    Point ``i`` comes from block ``i // 1024`` of a Philox stream whose counter
    is keyed by the block number, so any slice can be regenerated on its own.
    """
    if n < 1 or depth < 1:
        raise ValueError("need n >= 1 and depth >= 1")
    out = np.empty((n, sys.dim, depth), dtype=np.int64)
    tables = [np.array(D, dtype=np.int64) for D in sys.digits]
    for k in range(-(-n // BLOCK)):
        bitgen = np.random.Philox(key=int(seed) & (2**64 - 1), counter=[0, k, 0, 0])
        rng = np.random.Generator(bitgen)
        lo = k * BLOCK
        hi = min(n, lo + BLOCK)
        for j, D in enumerate(tables):
            idx = rng.integers(0, D.size, size=(BLOCK, depth))
            out[lo:hi, j, :] = D[idx[: hi - lo]]
    return out


def sample_measure(sys: DigitSystem, n: int, depth: int, seed: int) -> np.ndarray:
    """``n`` points (float array ``(n, dim)``), each a left corner of a K-cylinder."""
    dig = sample_digits(sys, n, depth, seed)
    w = float(sys.base) ** -np.arange(1, depth + 1)
    return dig.astype(float) @ w


def sample_points_exact(sys: DigitSystem, n: int, depth: int, seed: int) -> list:
    """Same points as :func:`sample_measure` as tuples of Fractions."""
    dig = sample_digits(sys, n, depth, seed)
    b = sys.base
    den = b ** depth
    pts = []
    for row in dig:
        pt = []
        for axis in row:
            v = 0
            for a in axis:
                v = v * b + int(a)
            pt.append(Fraction(v, den))
        pts.append(tuple(pt))
    return pts
