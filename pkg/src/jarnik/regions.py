"""Exact approximation regions built from shifted rationals ``(p + theta)/q``."""
from __future__ import annotations

import json
import math
from dataclasses import dataclass
from fractions import Fraction
from itertools import product

from .fractal import DigitSystem, distance_to_set


def as_fraction(v) -> Fraction:
    if isinstance(v, str):
        return Fraction(v.strip())
    if isinstance(v, float):
        return Fraction(v).limit_denominator(1 << 30)
    return Fraction(v)


def rationalize(x: float, max_den: int = 1 << 30) -> Fraction:
    """Closest fraction to a float with bounded denominator."""
    return Fraction(x).limit_denominator(max_den)


def _fmt(x: Fraction) -> str:
    return f"{x.numerator}/{x.denominator}"


@dataclass(frozen=True)
class ShiftedRational:
    """The point ``(p + theta)/q``; ``p`` and ``theta`` have one entry per axis."""

    p: tuple
    q: int
    theta: tuple

    @property
    def value(self) -> tuple:
        return tuple((Fraction(pj) + Fraction(tj)) / self.q
                     for pj, tj in zip(self.p, self.theta))

    def coprime(self) -> bool:
        return math.gcd(self.q, *self.p) == 1


def _merge_intervals(ivs):
    # float() of a Fraction is correctly rounded, hence monotone: a strict float
    # inequality settles the exact one and only float ties compare Fractions
    keyed = sorted(((float(a), a, float(c), c) for a, c in ivs), key=lambda t: t[0])
    out = []
    for fa, a, fc, c in _tie_sorted(keyed):
        if fc < fa or (fc == fa and c < a):
            continue
        if out:
            fe = out[-1][2]
            if fa < fe or (fa == fe and a <= out[-1][1]):
                if fc > fe or (fc == fe and c > out[-1][1]):
                    out[-1] = (out[-1][0], c, fc)
                continue
        out.append((a, c, fc))
    return [(a, c) for a, c, _ in out]


def _tie_sorted(keyed):
    """Re-sort runs of equal float keys exactly (the float sort is stable)."""
    i = 0
    n = len(keyed)
    while i < n:
        j = i + 1
        while j < n and keyed[j][0] == keyed[i][0]:
            j += 1
        if j - i > 1:
            yield from sorted(keyed[i:j], key=lambda t: (t[1], t[3]))
        else:
            yield keyed[i]
        i = j


def _normalize_boxes(boxes):
    """Canonical decomposition into x-strips with merged y-intervals.

    Adjacent strips carrying the same y-intervals are joined, so the result
    is unique for a given point set (closed components, shared edges allowed).
    """
    boxes = [b for b in boxes if b[0][1] >= b[0][0] and b[1][1] >= b[1][0]]
    if not boxes:
        return []
    xs = sorted({v for (x, _) in boxes for v in x})
    strips = []
    for x0, x1 in zip(xs, xs[1:]):
        ys = _merge_intervals([y for (x, y) in boxes if x[0] <= x0 and x[1] >= x1])
        if ys:
            strips.append([x0, x1, ys])
    # degenerate boxes of zero width survive only as segments
    for v in xs:
        ys = [y for (x, y) in boxes if x[0] == x[1] == v]
        if ys and not any(s[0] <= v <= s[1] for s in strips):
            strips.append([v, v, _merge_intervals(ys)])
    strips.sort(key=lambda s: (s[0], s[1]))
    merged = []
    for s in strips:
        if merged and merged[-1][1] == s[0] and merged[-1][2] == s[2]:
            merged[-1][1] = s[1]
        else:
            merged.append(s)
    return [((x0, x1), y) for x0, x1, ys in merged for y in ys]


class RegionUnion:
    """Normalized union of closed intervals (d=1) or axis boxes (d=2)."""

    def __init__(self, components, dim: int = 1, normalized: bool = False):
        self.dim = dim
        if dim == 1:
            comps = [(as_fraction(a), as_fraction(c)) for a, c in components]
            self.components = comps if normalized else _merge_intervals(comps)
        elif dim == 2:
            comps = [((as_fraction(x[0]), as_fraction(x[1])),
                      (as_fraction(y[0]), as_fraction(y[1]))) for x, y in components]
            self.components = comps if normalized else _normalize_boxes(comps)
        else:
            raise ValueError("regions exist for d in {1, 2}")

    def normalize(self) -> "RegionUnion":
        return RegionUnion(self.components, self.dim)

    def __eq__(self, other):
        return (isinstance(other, RegionUnion) and self.dim == other.dim
                and self.components == other.components)

    def __len__(self):
        return len(self.components)

    def __repr__(self):
        return f"RegionUnion(dim={self.dim}, n={len(self)})"

    def volume(self) -> Fraction:
        if self.dim == 1:
            return sum((c - a for a, c in self.components), Fraction(0))
        return sum(((x[1] - x[0]) * (y[1] - y[0]) for x, y in self.components),
                   Fraction(0))

    def contains(self, x) -> bool:
        if self.dim == 1:
            x = Fraction(x)
            return any(a <= x <= c for a, c in self.components)
        return any(b[0][0] <= x[0] <= b[0][1] and b[1][0] <= x[1] <= b[1][1]
                   for b in self.components)

    def covers(self, other: "RegionUnion") -> bool:
        """True if every component of ``other`` lies inside this union."""
        if self.dim == 1:
            return all(any(a <= s and e <= c for a, c in self.components)
                       for s, e in other.components)
        mine = RegionUnion(self.components + other.components, 2)
        return mine == self

    def intersect_box(self, box) -> "RegionUnion":
        if self.dim == 1:
            lo, hi = (as_fraction(v) for v in box)
            return RegionUnion([(max(a, lo), min(c, hi)) for a, c in self.components
                                if c >= lo and a <= hi], 1)
        (x0, x1), (y0, y1) = [(as_fraction(a), as_fraction(b)) for a, b in box]
        out = []
        for x, y in self.components:
            xa, xc = max(x[0], x0), min(x[1], x1)
            ya, yc = max(y[0], y0), min(y[1], y1)
            if xa <= xc and ya <= yc:
                out.append(((xa, xc), (ya, yc)))
        return RegionUnion(out, 2)

    def to_json(self) -> str:
        if self.dim == 1:
            return json.dumps([[_fmt(a), _fmt(c)] for a, c in self.components])
        return json.dumps([[[_fmt(x[0]), _fmt(x[1])], [_fmt(y[0]), _fmt(y[1])]]
                           for x, y in self.components])

    @classmethod
    def from_json(cls, text: str) -> "RegionUnion":
        data = json.loads(text)
        if data and isinstance(data[0][0], list):
            return cls(data, 2)
        return cls(data, 1)


def _unit(dim):
    return tuple((Fraction(0), Fraction(1)) for _ in range(dim))


def _clip_box(clip, dim):
    if clip is None:
        return _unit(dim)
    if dim == 1 and not isinstance(clip[0], (tuple, list)):
        clip = (clip,)
    return tuple((as_fraction(a), as_fraction(b)) for a, b in clip)


def _theta_vec(theta, dim):
    if isinstance(theta, (tuple, list)):
        return tuple(as_fraction(t) for t in theta)
    return (as_fraction(theta),) * dim


def _p_range(q: int, t: Fraction, r: Fraction, lo: Fraction, hi: Fraction):
    """All integers p with [(p+t-r)/q, (p+t+r)/q] meeting [lo, hi]."""
    return range(math.ceil(q * lo - t - r), math.floor(q * hi - t + r) + 1)


def _boxes_for_q(q, etas, theta, clip, coprime=False):
    dim = len(theta)
    axes = []
    for j in range(dim):
        lo, hi = clip[j]
        r = etas[j]
        axes.append([(p, max((p + theta[j] - r) / q, lo), min((p + theta[j] + r) / q, hi))
                     for p in _p_range(q, theta[j], r, lo, hi)])
    for combo in product(*axes):
        if coprime and math.gcd(q, *(c[0] for c in combo)) != 1:
            continue
        yield tuple((c[1], c[2]) for c in combo)


def _check_eta(eta):
    if not (0 < eta < Fraction(1, 2)):
        raise ValueError("eta must lie in (0, 1/2)")


def build_Aq_single(q: int, eta, theta=0, clip=None, dim: int = 1,
                    coprime: bool = False) -> RegionUnion:
    """``{x in clip : |x - (p+theta)/q| <= eta/q for some p}`` (closed sup-norm balls)."""
    eta = as_fraction(eta)
    _check_eta(eta)
    th = _theta_vec(theta, dim)
    dim = len(th)
    boxes = list(_boxes_for_q(int(q), (eta,) * dim, th, _clip_box(clip, dim), coprime))
    return RegionUnion([b[0] for b in boxes] if dim == 1 else boxes, dim)


def build_AQ(Q: int, eta, theta=0, clip=None, dim: int = 1,
             coprime: bool = False) -> RegionUnion:
    """Union of the single-q regions over ``Q <= q < 2Q``.

    >>> build_AQ(1, Fraction(1, 10)).to_json()
    '[["0/1", "1/10"], ["9/10", "1/1"]]'
    """
    if Q < 1:
        raise ValueError("Q must be positive")
    eta = as_fraction(eta)
    _check_eta(eta)
    th = _theta_vec(theta, dim)
    dim = len(th)
    cl = _clip_box(clip, dim)
    boxes = [b for q in range(Q, 2 * Q)
             for b in _boxes_for_q(q, (eta,) * dim, th, cl, coprime)]
    return RegionUnion([b[0] for b in boxes] if dim == 1 else boxes, dim)


def build_rect(q: int, etas, clip=None) -> RegionUnion:
    """``R(q, eta) = {x in [0,1]^2 : ||q x_j|| <= eta_j}``."""
    etas = tuple(as_fraction(e) for e in etas)
    for e in etas:
        _check_eta(e)
    dim = len(etas)
    cl = _clip_box(clip, dim)
    boxes = list(_boxes_for_q(int(q), etas, (Fraction(0),) * dim, cl))
    return RegionUnion([b[0] for b in boxes] if dim == 1 else boxes, dim)


def _near_candidates_1d(base, D, q, t, radius, max_level=12):
    """p whose point (p+t)/q lies within ``radius`` of a K-cylinder.

    The cylinder tree is walked to the level where the side drops below the
    radius; each surviving cylinder, widened by the radius, gives a p-range.
    """
    level = 0
    while (Fraction(1, base ** level) > radius and level < max_level
           and len(D) ** (level + 1) <= 100_000):
        level += 1
    kmin = Fraction(D[0], base - 1)
    kmax = Fraction(D[-1], base - 1)
    side = Fraction(1, base ** level)
    found = set()
    stack = [(0, 0)]
    while stack:
        lev, idx = stack.pop()
        if lev == level:
            lo = idx * side + kmin * side - radius
            hi = idx * side + kmax * side + radius
            found.update(range(math.ceil(q * lo - t), math.floor(q * hi - t) + 1))
            continue
        for a in D:
            stack.append((lev + 1, idx * base + a))
    return sorted(found)


def enumerate_rationals_near_set(sys: DigitSystem, q_range, radius, theta=0,
                                 coprime: bool = False) -> list:
    """All ``(p, q)`` with ``dist((p+theta)/q, K) < radius`` (sup norm)."""
    radius = as_fraction(radius)
    if radius <= 0:
        raise ValueError("radius must be positive")
    th = _theta_vec(theta, sys.dim)
    out = []
    for q in q_range:
        per_axis = []
        for j in range(sys.dim):
            keep = []
            for p in _near_candidates_1d(sys.base, sys.digits[j], q, th[j], radius):
                sub = DigitSystem(sys.base, (sys.digits[j],))
                lo, up = distance_to_set(sub, (p + th[j]) / q)
                if up < radius:
                    keep.append(p)
            per_axis.append(keep)
        for ps in product(*per_axis):
            sr = ShiftedRational(tuple(ps), q, th)
            if coprime and not sr.coprime():
                continue
            out.append(sr)
    return out
