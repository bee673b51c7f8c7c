"""Audits of the counting estimates for shifted-rational neighbourhoods.

Every audited quantity is a ratio ``measured / predicted``.  The measured
mass comes with a rigorous bracket from the cell engine; the bracket is
carried through as ``err`` (half-width of the ratio interval).  Balls are
cylinders, so their masses are exact powers of ``1/#D``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from statistics import median

import numpy as np

from .cells import Scale, box_union_mass, float_depth, interval_ranges, u128
from .errors import ConsistencyError, PreconditionError
from .fractal import CylinderWord, DigitSystem, _scale
from .sweep import UnionResult, single_q_masses, union_cells, union_cells_farey

ETA_DEN = 1 << 30


def eta_for(Q: int, tau: float) -> Fraction:
    """``Q**-tau`` rounded to a fraction with denominator at most ``2**30``."""
    return Fraction(float(Q) ** -float(tau)).limit_denominator(ETA_DEN)


def consistency_bound(d: int, delta: float, beta: float) -> float:
    """Largest alpha compatible with local counting: ``(1+δ-βδ)/(d-δ)``."""
    if delta >= d:
        return math.inf
    return (1 + delta - beta * delta) / (d - delta)


@dataclass(frozen=True)
class AuditGrid:
    Q_list: tuple
    taus: tuple
    theta: Fraction = Fraction(0)
    alpha: float | None = None
    beta: float = 0.2
    max_balls: int = 16
    seed: int = 0
    q_min: int = 1

    def __post_init__(self):
        object.__setattr__(self, "Q_list", tuple(int(q) for q in self.Q_list))
        object.__setattr__(self, "taus", tuple(float(t) for t in self.taus))
        object.__setattr__(self, "theta", Fraction(self.theta))
        if self.alpha is None:
            object.__setattr__(self, "alpha", max(self.taus) if self.taus else 1.0)

    def validate(self, sys: DigitSystem):
        d = sys.dim
        delta = sys.hausdorff_dim()
        if not self.Q_list or not self.taus:
            raise PreconditionError("empty audit grid")
        if any(Q < 1 for Q in self.Q_list):
            raise PreconditionError("Q must be positive")
        if not 0 < self.beta < 1:
            raise PreconditionError("beta must lie in (0, 1)")
        for tau in self.taus:
            if tau < 1 / d - 1e-12 or tau > self.alpha + 1e-12:
                raise PreconditionError(
                    f"eta = Q^-{tau} leaves the range Q^-alpha <= eta <= Q^-1/d "
                    f"(alpha = {self.alpha}, d = {d})")
        bound = consistency_bound(d, delta, self.beta)
        if self.alpha > bound:
            raise ConsistencyError(
                f"alpha = {self.alpha} exceeds (1+δ-βδ)/(d-δ) = {bound:.6g}; "
                "no system can have the local counting property on this grid")

    def ball_depth(self, base: int, Q: int) -> int:
        """Deepest cylinder level whose side ``b**-k`` is still ``>= Q**-beta``."""
        k = 0
        while (k + 1) * math.log(base) <= self.beta * math.log(Q) + 1e-12:
            k += 1
        return k


@dataclass(frozen=True)
class AuditCell:
    Q: int
    tau: float | None
    eta: Fraction
    ball_id: str
    num: Fraction
    den: Fraction
    err: Fraction
    flags: tuple = ()

    @property
    def ratio(self) -> Fraction:
        return self.num / self.den


def summarize(cells) -> dict:
    """Geometric summary over unflagged cells with positive ratio."""
    vals = [float(c.ratio) for c in cells if not c.flags and c.ratio > 0]
    out = {"cells": len(cells), "flagged": sum(1 for c in cells if c.flags)}
    if not vals:
        out.update(min=None, max=None, median=None, geo_mean=None, spread=None)
        return out
    logs = [math.log(v) for v in vals]
    out.update(min=min(vals), max=max(vals), median=median(vals),
               geo_mean=math.exp(sum(logs) / len(logs)), spread=max(vals) / min(vals))
    return out


@dataclass
class AuditReport:
    cells: list
    metadata: dict = field(default_factory=dict)

    @property
    def summary(self) -> dict:
        return summarize(self.cells)

    def by_Q(self) -> dict:
        out: dict = {}
        for c in self.cells:
            out.setdefault(c.Q, []).append(c)
        return {Q: summarize(cs) for Q, cs in sorted(out.items())}

    def spread_trend(self) -> dict:
        """Least-squares slope of ``log spread`` against ``log Q`` with its standard error."""
        per = [(Q, s["spread"]) for Q, s in self.by_Q().items() if s["spread"]]
        if len(per) < 3:
            return {"slope": None, "stderr": None, "points": per}
        x = np.log([p[0] for p in per])
        y = np.log([p[1] for p in per])
        from scipy.stats import linregress
        fit = linregress(x, y)
        return {"slope": float(fit.slope), "stderr": float(fit.stderr), "points": per}


# ---------------------------------------------------------------------------
# one-dimensional unions


def _check_1d(sys: DigitSystem):
    if sys.dim != 1:
        raise PreconditionError("A_Q audits are implemented for d = 1")


def audit_scale(sys: DigitSystem, j: int = 0, depth: int | None = None) -> Scale:
    return _scale(sys.base, sys.digits[j], depth or float_depth(sys.base))


def word_window(sc: Scale, digits) -> tuple[int, int]:
    """Cell window ``[W0, W1)`` of a one-axis cylinder word."""
    idx = 0
    for a in digits:
        idx = idx * sc.base + int(a)
    w = sc.base ** (sc.depth - len(digits))
    return idx * w, (idx + 1) * w


def aq_union(sc: Scale, Q: int, eta: Fraction, theta=0, window=None,
             levels=()) -> UnionResult:
    """Mass bounds of ``A_Q(eta, theta)`` (``Q <= q < 2Q``) inside a cell window."""
    theta = Fraction(theta)
    eta = Fraction(eta)
    if eta <= 0:
        raise PreconditionError("eta must be positive")
    if theta == 0:
        return union_cells_farey(sc, Q, 2 * Q - 1, [eta] * Q, window=window,
                                 levels=levels)
    return union_cells(sc, range(Q, 2 * Q), [eta] * Q, theta, window=window,
                       levels=levels)


def _ball_words(sys: DigitSystem, depth: int, limit: int, seed: int, Q: int):
    D = sys.digits[0]
    m = len(D)
    if m ** depth <= limit:
        words = [()]
        for _ in range(depth):
            words = [w + (a,) for w in words for a in D]
        return words
    rng = np.random.default_rng([seed, Q, depth])
    picked = set()
    while len(picked) < limit:
        picked.add(tuple(int(D[i]) for i in rng.integers(0, m, depth)))
    return sorted(picked)


def ball_id(word) -> str:
    return "w" + "".join(str(a) for a in word)


def local_counting_audit(sys: DigitSystem, grid: AuditGrid,
                         depth: int | None = None) -> AuditReport:
    """Ratios ``mu(B ∩ A_Q(eta,theta)) / (mu(B) Q eta)`` over cylinder balls.

    For each Q the balls are cylinders of every depth ``k`` with
    ``b**-k >= Q**-beta`` (at most ``grid.max_balls`` per depth).
    """
    _check_1d(sys)
    grid.validate(sys)
    sc = audit_scale(sys, 0, depth)
    m = len(sys.digits[0])
    cells = []
    for Q in grid.Q_list:
        kmax = grid.ball_depth(sys.base, Q)
        if kmax > sc.depth:
            raise PreconditionError("ball depth exceeds the cell depth")
        for tau in grid.taus:
            eta = eta_for(Q, tau)
            for k in range(kmax + 1):
                for w in _ball_words(sys, k, grid.max_balls, grid.seed, Q):
                    res = aq_union(sc, Q, eta, grid.theta, window=word_window(sc, w))
                    muB = Fraction(1, m ** k)
                    den = muB * Q * eta
                    flags = []
                    if res.hi == 0:
                        flags.append("empty")
                    if Q < grid.q_min:
                        flags.append("below_q_min")
                    cells.append(AuditCell(Q, tau, eta, ball_id(w), res.value, den,
                                           res.error / den, tuple(flags)))
    meta = {"sys": sys.to_json(), "theta": str(grid.theta), "alpha": grid.alpha,
            "beta": grid.beta, "seed": grid.seed, "cell_depth": sc.depth}
    return AuditReport(cells, meta)


@dataclass(frozen=True)
class RatioValue:
    ratio: float
    err: float
    num: Fraction
    den: Fraction


def global_counting_audit(sys: DigitSystem, Q: int, eta, theta=0,
                          depth: int | None = None) -> RatioValue:
    """``mu(A_Q(eta, theta)) / (Q eta)`` with its bracket."""
    _check_1d(sys)
    eta = Fraction(eta)
    res = aq_union(audit_scale(sys, 0, depth), Q, eta, theta)
    den = Q * eta
    return RatioValue(float(res.value / den), float(res.error / den), res.value, den)


@dataclass(frozen=True)
class CoverCount:
    N: int
    N_lo: int
    depth: int
    ratio: float
    global_ratio: float
    inflation_bound: float


def cover_depth(base: int, Q: int, eta: Fraction) -> int:
    """Smallest ``n`` with ``b**-n <= eta / Q``."""
    target = Q / Fraction(eta)
    n = 0
    while base ** n < target:
        n += 1
    return n


def covering_count_audit(sys: DigitSystem, Q: int, eta, theta=0,
                         depth: int | None = None) -> CoverCount:
    """Number of depth-``ceil(log_b(Q/eta))`` cylinders of K meeting ``A_Q``.

    ``N`` counts cells met with positive mass by the possible cell ranges and
    ``N_lo`` those met by the certain ranges; the true count lies between.
    The b-adic proxy for radius ``eta/Q`` balls changes constants by at most
    ``b**delta`` (reported as ``inflation_bound``).
    """
    _check_1d(sys)
    eta = Fraction(eta)
    sc = audit_scale(sys, 0, depth)
    n = cover_depth(sys.base, Q, eta)
    if n > sc.depth:
        raise PreconditionError(f"cover depth {n} exceeds the cell depth {sc.depth}")
    res = aq_union(sc, Q, eta, theta, levels=(n,))
    lo, hi = res.counts[n]
    delta = sys.hausdorff_dim()
    pred = Q ** (1 + delta) * float(eta) ** (1 - delta)
    return CoverCount(hi, lo, n, hi / pred, float(res.value / (Q * eta)),
                      sys.base ** delta)


# ---------------------------------------------------------------------------
# two-dimensional rectangles R(q, eta)


def _check_2d(sys: DigitSystem):
    if sys.dim != 2:
        raise PreconditionError("rectangle audits need a two-dimensional product system")


def _check_etas(etas):
    etas = tuple(Fraction(e) for e in etas)
    if len(etas) != 2:
        raise PreconditionError("need one eta per axis")
    for e in etas:
        if not 0 < e < Fraction(1, 2):
            raise PreconditionError("each eta_j must lie in (0, 1/2)")
    return etas


def _windows(scales, word: CylinderWord):
    per_axis = [[] for _ in scales]
    for letter in word.letters(len(scales)):
        for j, a in enumerate(letter):
            per_axis[j].append(a)
    return [word_window(sc, ds) for sc, ds in zip(scales, per_axis)]


def _word_check(sys: DigitSystem, word: CylinderWord):
    for letter in word.letters(sys.dim):
        for j, a in enumerate(letter):
            if a not in sys.digits[j]:
                raise PreconditionError(f"digit {a} not admissible on axis {j}")


def nondivergence_audit(sys: DigitSystem, word, Q: int, etas,
                        depth: int | None = None) -> RatioValue:
    """``sum_{q<=Q} mu_w(R(q, eta)) / (Q eta_1 eta_2)`` for a cylinder ``w``.

    For a product measure each summand factorises over the axes.
    """
    _check_2d(sys)
    etas = _check_etas(etas)
    word = word if isinstance(word, CylinderWord) else CylinderWord(tuple(word))
    _word_check(sys, word)
    scales = [audit_scale(sys, j, depth) for j in range(2)]
    wins = _windows(scales, word)
    qs = list(range(1, Q + 1))
    lo_t, hi_t = 1, 1
    los, his = [], []
    for sc, win, e in zip(scales, wins, etas):
        lo, hi = single_q_masses(sc, qs, [e] * Q, 0, window=win)
        los.append([int(v) for v in lo])
        his.append([int(v) for v in hi])
        cyl = sc.cdf(win[1]) - sc.cdf(win[0])
        lo_t *= cyl
        hi_t *= cyl
    s_lo = sum(a * b for a, b in zip(*los))
    s_hi = sum(a * b for a, b in zip(*his))
    mid = Fraction(s_lo + s_hi, 2 * lo_t)
    den = Q * etas[0] * etas[1]
    err = Fraction(s_hi - s_lo, 2 * lo_t) / den
    return RatioValue(float(mid / den), float(err), mid, den)


def rect_ranges(sc: Scale, window, qs, eta: Fraction):
    """Per-q cell ranges of ``{x : ||q x|| <= eta}`` inside a window.

    Returns ``(q, ps, pe, cs, ce)`` arrays with one row per neighbourhood
    that meets the window with positive mass.
    """
    W0, W1 = window
    lo = Fraction(W0, sc.size)
    hi = Fraction(W1, sc.size)
    E, e = eta.denominator, eta.numerator
    qcol, pcol = [], []
    for q in qs:
        p0 = math.floor(q * lo - eta)
        p1 = math.ceil(q * hi + eta)
        qcol.append(np.full(p1 - p0 + 1, q, np.int64))
        pcol.append(np.arange(p0, p1 + 1, dtype=np.int64))
    if not qcol:
        z = np.empty(0, np.int64)
        return z, z, z, z, z
    q = np.concatenate(qcol)
    p = np.concatenate(pcol)
    den = q * E
    Xa, Ea = sc.cells(p * E - e, den)
    Xc, Ec = sc.cells(p * E + e, den)
    ps, pe, cs, ce = interval_ranges(Xa, Ea, Xc, Ec, W0, W1)
    ok = pe > ps
    q, ps, pe, cs, ce = q[ok], ps[ok], pe[ok], cs[ok], ce[ok]
    if not sc.full:
        pos = sc.cdfs(pe) > sc.cdfs(ps)
        q, ps, pe, cs, ce = q[pos], ps[pos], pe[pos], cs[pos], ce[pos]
    return q, ps, pe, cs, ce


def _product_boxes(ax, ay):
    """Cartesian product per q of the two axes' ranges."""
    qx, qy = ax[0], ay[0]
    out = [[] for _ in range(8)]
    for q in np.unique(qx):
        sx = slice(np.searchsorted(qx, q, "left"), np.searchsorted(qx, q, "right"))
        sy = slice(np.searchsorted(qy, q, "left"), np.searchsorted(qy, q, "right"))
        nx = sx.stop - sx.start
        ny = sy.stop - sy.start
        if nx == 0 or ny == 0:
            continue
        for k, arr in enumerate(ax[1:]):
            out[k].append(np.repeat(arr[sx], ny))
        for k, arr in enumerate(ay[1:]):
            out[4 + k].append(np.tile(arr[sy], nx))
    if not out[0]:
        return [np.empty(0, np.int64)] * 8
    return [np.concatenate(o) for o in out]


@dataclass(frozen=True)
class UnionMass2D:
    lo: int
    hi: int
    ball: int
    boxes: int

    @property
    def ratio(self) -> Fraction:
        return Fraction(self.lo + self.hi, 2 * self.ball)

    @property
    def err(self) -> Fraction:
        return Fraction(self.hi - self.lo, 2 * self.ball)


def rect_union_in_ball(sys: DigitSystem, word: CylinderWord, qs, etas,
                       depth: int | None = None) -> UnionMass2D:
    """Mass bounds of ``B ∩ ∪_q R(q, eta)`` for a cylinder ``B`` (units of the cell grid)."""
    scales = [audit_scale(sys, j, depth) for j in range(2)]
    wins = _windows(scales, word)
    axes = [rect_ranges(sc, win, qs, e) for sc, win, e in zip(scales, wins, etas)]
    xps, xpe, xcs, xce, yps, ype, ycs, yce = _product_boxes(axes[0], axes[1])
    sx, sy = scales
    hi = u128(box_union_mass(xps, xpe, yps, ype, *sx.kernel_args(), *sy.kernel_args()))
    lo = u128(box_union_mass(xcs, xce, ycs, yce, *sx.kernel_args(), *sy.kernel_args()))
    ball = 1
    for sc, win in zip(scales, wins):
        ball *= sc.cdf(win[1]) - sc.cdf(win[0])
    return UnionMass2D(lo, hi, ball, int(xps.size))


def calibrate_c(sys: DigitSystem, word, Q: int, etas, depth: int | None = None,
                choices=tuple(Fraction(1, 2 ** k) for k in range(1, 9))):
    """Largest ``c`` whose low range ``q <= cQ`` covers at most half of ``mu(B)``.

    Returns ``(c, table)``; ``c`` is None when no candidate qualifies.
    """
    _check_2d(sys)
    etas = _check_etas(etas)
    word = word if isinstance(word, CylinderWord) else CylinderWord(tuple(word))
    table = []
    for c in choices:
        top = math.floor(c * Q)
        if top < 1:
            table.append((c, Fraction(0)))
            return c, table
        res = rect_union_in_ball(sys, word, range(1, top + 1), etas, depth)
        frac = Fraction(res.hi, res.ball)
        table.append((c, frac))
        if 2 * frac <= 1:
            return c, table
    return None, table


def ubiquity_audit(sys: DigitSystem, word, Q: int, etas, c,
                   depth: int | None = None) -> RatioValue:
    """``mu(B ∩ ∪_{ceil(cQ) <= q <= 2Q} R(q, eta)) / mu(B)``."""
    _check_2d(sys)
    etas = _check_etas(etas)
    if etas[0] * etas[1] != Fraction(1, Q):
        raise PreconditionError("the rectangle shape must satisfy eta_1 eta_2 = 1/Q")
    c = Fraction(c)
    if not 0 < c < 2:
        raise PreconditionError("c must lie in (0, 2)")
    word = word if isinstance(word, CylinderWord) else CylinderWord(tuple(word))
    _word_check(sys, word)
    res = rect_union_in_ball(sys, word, range(math.ceil(c * Q), 2 * Q + 1), etas, depth)
    return RatioValue(float(res.ratio), float(res.err), res.ratio, Fraction(1))


def ubiquity_ball_depth(base: int, Q: int, budget: float = 1e6) -> int:
    """Cylinder depth keeping the expected rectangle count near ``budget``."""
    k = 0
    while (8 / 3) * Q ** 3 * float(base) ** (-2 * k) > budget:
        k += 1
    return k


def default_ball(sys: DigitSystem, depth: int, seed: int = 0) -> CylinderWord:
    """A seed-determined cylinder of the given depth."""
    rng = np.random.default_rng([seed, depth])
    letters = []
    for _ in range(depth):
        letters.append(tuple(int(D[rng.integers(0, len(D))]) for D in sys.digits))
    return CylinderWord(tuple(letters))
