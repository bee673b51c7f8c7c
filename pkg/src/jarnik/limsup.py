"""Finite stages of the limsup set, box counting, and mass-distribution audits.

A finite stage keeps the neighbourhoods ``|q x - p - theta| < q**-tau`` for
``Q0 <= q <= Q1`` only.  The mass-distribution audits build the measure ``nu``
used in the lower-bound arguments on a finite instance and record how large
``nu(B(x, r)) mu(B) / r**s`` gets in each range of ``r`` the argument treats
separately.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np
from numba import njit

from .cells import Scale, _cdf1, float_depth
from .counting import _check_etas, _windows, _word_check, audit_scale, calibrate_c, \
    word_window
from .errors import PreconditionError
from .fractal import CylinderWord, DigitSystem, _scale, cylinder_box
from .geometry import Rect, cover_factor, greedy_disjoint
from .regions import RegionUnion, build_Aq_single
from .sweep import union_cells, union_cells_farey

ETA_DEN = 1 << 30
STAGE_BUDGET = 10 ** 7


def stage_eta(q: int, tau) -> Fraction:
    """``q**-tau`` as a fraction (denominator at most ``2**30``)."""
    if q == 1:
        return Fraction(1)
    return Fraction(float(q) ** -float(tau)).limit_denominator(ETA_DEN)


@dataclass
class FiniteStageSet:
    """``∪_{q=Q0}^{Q1} A(q, q**-tau, theta)`` clipped to the unit cube."""

    sys: DigitSystem
    tau: float
    theta: Fraction
    Q0: int
    Q1: int
    region: RegionUnion | None = None

    def etas(self):
        return [stage_eta(q, self.tau) for q in range(self.Q0, self.Q1 + 1)]

    def component_estimate(self) -> int:
        return sum((q + 2) ** self.sys.dim for q in range(self.Q0, self.Q1 + 1))

    def widths(self) -> tuple:
        """Widths of the widest and narrowest neighbourhoods."""
        e = self.etas()
        return float(2 * e[0] / self.Q0), float(2 * e[-1] / self.Q1)


def build_finite_stage(sys: DigitSystem, tau, theta, Q0: int, Q1: int,
                       materialize: bool = True,
                       budget: int = STAGE_BUDGET) -> FiniteStageSet:
    """Finite stage of the well-approximable set.

    With ``materialize`` the exact region is built (refused beyond ``budget``
    components); otherwise only the parameters are kept and counting goes
    through the cell engine.
    """
    d = sys.dim
    if not float(tau) * d > 1:
        raise PreconditionError("need tau > 1/d")
    if not 1 <= Q0 <= Q1:
        raise PreconditionError("need 1 <= Q0 <= Q1")
    theta = Fraction(theta)
    st = FiniteStageSet(sys, float(tau), theta, int(Q0), int(Q1))
    if not materialize:
        return st
    if st.component_estimate() > min(budget, STAGE_BUDGET):
        raise PreconditionError(
            f"stage needs about {st.component_estimate()} components (budget {budget})")
    unit = tuple((Fraction(0), Fraction(1)) for _ in range(d))
    comps = []
    for q, eta in zip(range(Q0, Q1 + 1), st.etas()):
        if eta >= Fraction(1, 2):
            comps = [unit[0] if d == 1 else unit]
            break
        comps.extend(build_Aq_single(q, eta, theta, dim=d).components)
    st.region = RegionUnion(comps, d)
    return st


# ---------------------------------------------------------------------------
# box counting


@dataclass
class BoxDimResult:
    slope: float
    counts: dict  # depth -> (lower, upper)
    residual: float
    depths: tuple
    notes: list = field(default_factory=list)


def auto_depths(stage: FiniteStageSet, safety: int = 1) -> tuple:
    """Depths whose cell side lies between the widest and narrowest widths."""
    b = stage.sys.base
    wide, narrow = stage.widths()
    lo = max(1, math.ceil(math.log(1 / wide, b)) + safety)
    hi = math.floor(math.log(1 / narrow, b)) - safety
    return tuple(range(lo, hi + 1))


def _count_1d(stage: FiniteStageSet, depths) -> dict:
    sys = stage.sys
    sc = audit_scale(sys, 0, max(float_depth(sys.base), max(depths)))
    if max(depths) > sc.depth:
        raise PreconditionError("depth beyond the cell grid")
    if stage.theta == 0:
        res = union_cells_farey(sc, stage.Q0, stage.Q1, stage.etas(), levels=depths)
    else:
        res = union_cells(sc, range(stage.Q0, stage.Q1 + 1), stage.etas(), stage.theta,
                          levels=depths)
    return {n: res.counts[n] for n in depths}


def _axis_cells(sc: Scale, a: Fraction, c: Fraction, n: int) -> list:
    """Depth-n cells whose intersection with [a, c] may carry positive mass."""
    Xa, _ = sc.cell(a.numerator, a.denominator)
    Xc, Ec = sc.cell(c.numerator, c.denominator)
    Xc = Xc if Ec else min(Xc + 1, sc.size)
    W = sc.base ** (sc.depth - n)
    out = []
    for k in range(Xa // W, -(-Xc // W)):
        s, e = max(Xa, k * W), min(Xc, (k + 1) * W)
        if e > s and sc.cdf(e) > sc.cdf(s):
            out.append(k)
    return out


def _count_2d(stage: FiniteStageSet, depths) -> dict:
    if stage.region is None:
        raise PreconditionError("two-dimensional box counts need a materialized stage")
    sys = stage.sys
    scales = [_scale(sys.base, D, float_depth(sys.base)) for D in sys.digits]
    out = {}
    for n in depths:
        hit = set()
        for box in stage.region.components:
            xs = _axis_cells(scales[0], *box[0], n)
            ys = _axis_cells(scales[1], *box[1], n)
            hit.update((i, j) for i in xs for j in ys)
        out[n] = (len(hit), len(hit))
    return out


def box_dim_estimate(sys: DigitSystem, stage: FiniteStageSet, depth_list=None) -> BoxDimResult:
    """Least-squares slope of ``log_b N_n`` against ``n``.

    ``N_n`` counts depth-n cylinders of K meeting the stage with positive
    mass; the lower count uses cells certainly inside the stage.
    """
    if stage.sys != sys:
        raise PreconditionError("stage was built for another digit system")
    depths = tuple(sorted(depth_list)) if depth_list else auto_depths(stage)
    if len(depths) < 2:
        raise PreconditionError("degenerate depth window")
    counts = _count_1d(stage, depths) if sys.dim == 1 else _count_2d(stage, depths)
    ns = np.array(depths, dtype=float)
    hi = np.array([counts[n][1] for n in depths], dtype=float)
    if (hi <= 0).any():
        raise PreconditionError("empty count in the depth window")
    y = np.log(hi) / math.log(sys.base)
    coef, res, *_ = np.polyfit(ns, y, 1, full=True)
    resid = float(math.sqrt(res[0] / len(ns))) if len(res) else 0.0
    return BoxDimResult(float(coef[0]), counts, resid, depths)


# ---------------------------------------------------------------------------
# the restricted measure nu = mu|_F / mu(F)


@njit(cache=True)
def _window_mass(s, e, pre, A, B, gtab, atab, cpow, bdiv, mrem, size, total):
    """Mass of ``∪[s_i, e_i) ∩ [A_j, B_j)`` per query (ranges sorted, disjoint)."""
    out = np.zeros(A.size, np.int64)
    for j in range(A.size):
        a = A[j]
        b = B[j]
        if b <= a:
            continue
        i0 = np.searchsorted(e, a, side="right")
        i1 = np.searchsorted(s, b, side="left") - 1
        if i0 > i1:
            continue
        tot = pre[i1 + 1] - pre[i0]
        lo = max(a, s[i0])
        tot -= (_cdf1(lo, gtab, atab, cpow, bdiv, mrem, size, total)
                - _cdf1(s[i0], gtab, atab, cpow, bdiv, mrem, size, total))
        hi = min(b, e[i1])
        tot -= (_cdf1(e[i1], gtab, atab, cpow, bdiv, mrem, size, total)
                - _cdf1(hi, gtab, atab, cpow, bdiv, mrem, size, total))
        out[j] = tot
    return out


def ordinal_cells(sc: Scale, u) -> np.ndarray:
    """Index of the ``u``-th cell of K (in increasing order) on the grid."""
    u = np.asarray(u, dtype=np.int64)
    D = np.array(sc.digits, dtype=np.int64)
    X = np.zeros_like(u)
    for i in range(sc.depth):
        dig = (u // sc.m ** (sc.depth - 1 - i)) % sc.m
        X = X * sc.base + D[dig]
    return X


@dataclass
class NuMeasure:
    """``nu`` as a restricted or ball-family measure with exact normalisation."""

    kind: str
    support: str
    scale: Scale | None = None
    certain: tuple = ()
    possible: tuple = ()
    mass_lo: int = 0
    mass_hi: int = 0
    balls: list = field(default_factory=list)

    @classmethod
    def restricted(cls, sc: Scale, comps, support: str) -> "NuMeasure":
        (cs, ce), (ps, pe) = comps
        args = sc.kernel_args()
        cert = _prefixed(cs, ce, args)
        poss = _prefixed(ps, pe, args)
        return cls("restricted", support, sc, cert, poss, int(cert[2][-1]),
                   int(poss[2][-1]))

    def total(self) -> Fraction:
        """``nu`` of the whole space; numerator and normaliser are the same set."""
        if self.kind == "restricted":
            s, e, pre = self.certain
            num = int(_window_mass(s, e, pre, np.array([0]), np.array([self.scale.size]),
                                   *self.scale.kernel_args())[0])
            return Fraction(num, self.mass_lo)
        return Fraction(len(self.balls), len(self.balls))

    def ball_bounds(self, A_out, B_out, A_in, B_in):
        """Bounds on ``nu`` of windows given by outer and inner cell ranges."""
        args = self.scale.kernel_args()
        hi = _window_mass(*self.possible, A_out, B_out, *args)
        lo = _window_mass(*self.certain, A_in, B_in, *args)
        return lo / self.mass_hi, hi / self.mass_lo

    def sample(self, n: int, rng: np.random.Generator) -> np.ndarray:
        """Cell indices of ``n`` draws from ``nu`` (certain part of F)."""
        s, e, pre = self.certain
        u = rng.integers(0, pre[-1], size=n)
        i = np.searchsorted(pre, u, side="right") - 1
        base = self.scale.cdfs(s[i])
        return ordinal_cells(self.scale, base + (u - pre[i]))


def _prefixed(s, e, args):
    s = np.ascontiguousarray(s, dtype=np.int64)
    e = np.ascontiguousarray(e, dtype=np.int64)
    from .cells import _cdf_kernel
    w = _cdf_kernel(e, *args) - _cdf_kernel(s, *args)
    pre = np.zeros(len(s) + 1, np.int64)
    np.cumsum(w, out=pre[1:])
    return s, e, pre


@dataclass
class CaseStat:
    name: str
    r_lo: float
    r_hi: float
    n: int
    sup_ratio: float
    median_ratio: float


@dataclass
class NuAudit:
    Q: int
    tau: float
    c: Fraction
    s: float
    mu_B: Fraction
    mu_F: float
    mu_F_err: float
    F_ratio: float
    nu_total: Fraction
    cases: dict
    notes: list = field(default_factory=list)


def nu_cases(d: int, delta: float, tau: float, beta: float, c: float, Q: int,
             diam: float, theta_zero: bool) -> dict:
    """Ranges ``[r_lo, r_hi)`` of the cases in the lower-bound argument.

    Open lower ends are cut a factor 8 (or 16) below the upper end.
    """
    u = delta + (1 + d) / (1 + tau) - d
    top = Q ** (-beta * delta / u)
    small = c * Q ** -(1 + tau)
    cases = {
        "1": (Q ** -beta, diam),
        "2": (top, Q ** -beta),
        "3A": (small / 8, top),
    }
    if theta_zero:
        simplex = Q ** -(1 + 1 / d) / (8 * math.factorial(d))
        cases["3B"] = (simplex, top)
        cases["4B"] = (small, simplex)
        cases["5B"] = (small / 16, small)
    return cases


def nu_restricted_audit(sys: DigitSystem, word, Q: int, tau, c, s: float,
                        n_samples: int, seed: int = 0, beta: float = 0.3,
                        theta=0, depth: int | None = None) -> NuAudit:
    """Sup over samples of ``nu(B(x,r)) mu(B) / r**s`` in each case range.

    ``F = B ∩ A_Q(c Q**-tau, theta)`` is built exactly on the cell grid and
    ``x`` is drawn from ``nu`` itself; ``r`` is log-uniform in each range.
    Ratios use the upper bound of ``nu``.
    """
    if sys.dim != 1:
        raise PreconditionError("the restricted audit is one-dimensional")
    c = Fraction(c)
    if c <= 0:
        raise PreconditionError("c must be positive")
    if not float(tau) > 1:
        raise PreconditionError("need tau > 1/d")
    if n_samples < 1:
        raise PreconditionError("need at least one sample")
    word = word if isinstance(word, CylinderWord) else CylinderWord(tuple(word))
    _word_check(sys, word)
    theta = Fraction(theta)
    sc = audit_scale(sys, 0, depth or 24)
    digits = [a for (a,) in word.letters(1)]
    win = word_window(sc, digits)
    eta = Fraction(c * Fraction(float(Q) ** -float(tau)).limit_denominator(ETA_DEN))
    res = union_cells(sc, range(Q, 2 * Q), [eta] * Q, theta, window=win, keep=True)
    if res.lo == 0:
        raise PreconditionError("F has no certified mass (empty F)")
    nu = NuMeasure.restricted(sc, res.comps, f"B∩A_Q(cQ^-tau) Q={Q}")
    m = len(sys.digits[0])
    muB = Fraction(1, m ** word.depth)
    delta = sys.hausdorff_dim()
    diam = float(Fraction(1, sys.base ** word.depth))
    cases = nu_cases(1, delta, float(tau), beta, float(c), Q, diam, theta == 0)
    rng = np.random.default_rng([seed, Q])
    X = nu.sample(n_samples, rng)
    size = sc.size
    stats = {}
    for name, (r_lo, r_hi) in cases.items():
        if not r_lo < r_hi:
            stats[name] = CaseStat(name, r_lo, r_hi, 0, float("nan"), float("nan"))
            continue
        r = np.exp(rng.uniform(math.log(r_lo), math.log(r_hi), n_samples))
        R = r * size
        Rc = np.ceil(R).astype(np.int64)
        Rf = np.floor(R).astype(np.int64)
        # the point lies somewhere in cell X; two cells of slack absorb float error
        A_out = np.maximum(X - Rc - 2, 0)
        B_out = np.minimum(X + 1 + Rc + 2, size)
        A_in = np.maximum(X + 1 - Rf + 2, 0)
        B_in = np.minimum(X + Rf - 2, size)
        _, hi = nu.ball_bounds(A_out, B_out, A_in, B_in)
        ratio = hi * float(muB) / r ** s
        stats[name] = CaseStat(name, r_lo, r_hi, n_samples, float(ratio.max()),
                               float(np.median(ratio)))
    mid = float(res.value)
    return NuAudit(Q, float(tau), c, s, muB, mid, float(res.error),
                   mid / (float(muB) * Q ** (1 - float(tau))), nu.total(), stats)


# ---------------------------------------------------------------------------
# the rectangle construction in the plane


@dataclass
class ProductAudit:
    Q: int
    tau: float
    c: Fraction
    word: tuple
    mu_B: Fraction
    n_rational: int
    n_selected: int
    n_balls: int
    count_ratio: float
    factor: float
    disjoint: bool
    covered: bool
    s: float
    cases: dict
    calibration: list = field(default_factory=list)


def product_ball_depth(base: int, Q: int, tau: float, margin: float = 4.0,
                       budget: float = 6e4) -> int:
    """Cylinder depth for the construction.

    The side stays at least ``margin`` long rectangle sides, and the depth
    grows while the expected number of rectangles, about
    ``(8/3) Q**3 side**2 / 2``, exceeds ``budget``.
    """
    long_side = 2 * 4 * float(Q) ** (float(tau) - 2)
    k = 0
    while (float(base) ** -(k + 1) >= margin * long_side
           and (4 / 3) * float(Q) ** 3 * float(base) ** (-2 * k) > budget):
        k += 1
    return k


def _check_product(sys: DigitSystem, tau):
    if sys.dim != 2:
        raise PreconditionError("the rectangle construction needs d = 2")
    if not 0.5 < float(tau) < 1:
        raise PreconditionError("need 1/2 < tau < 1")
    if len(sys.digits[1]) != sys.base:
        raise PreconditionError("the last coordinate must carry the full digit set")


def product_etas(Q: int, tau) -> tuple:
    """``(Q**-tau / 4, 1 / (Q eta_1))``; the product is exactly ``1/Q``."""
    e1 = Fraction(float(Q) ** -float(tau) / 4).limit_denominator(ETA_DEN)
    return e1, 1 / (Q * e1)


def _x_candidates(sc: Scale, win, qs, eta: Fraction):
    """``(q, p, X)``: neighbourhoods meeting the window with certified positive
    mass, and the first K-cell ``X`` certainly inside each."""
    W0, W1 = win
    lo, hi = Fraction(W0, sc.size), Fraction(W1, sc.size)
    E, e = eta.denominator, eta.numerator
    out_q, out_p = [], []
    for q in qs:
        p0 = math.floor(q * lo - eta)
        p1 = math.ceil(q * hi + eta)
        out_q.append(np.full(p1 - p0 + 1, q, np.int64))
        out_p.append(np.arange(p0, p1 + 1, dtype=np.int64))
    q = np.concatenate(out_q)
    p = np.concatenate(out_p)
    Xa, Ea = sc.cells(p * E - e, q * E)
    Xc, _ = sc.cells(p * E + e, q * E)
    cs = np.maximum(np.where(Ea, Xa, Xa + 1), W0)
    ce = np.minimum(Xc, W1)
    ok = ce > cs
    q, p, cs, ce = q[ok], p[ok], cs[ok], ce[ok]
    g0 = sc.cdfs(cs)
    pos = sc.cdfs(ce) > g0
    q, p, g0 = q[pos], p[pos], g0[pos]
    return q, p, ordinal_cells(sc, g0)


def product_construction_audit(sys: DigitSystem, word, Q: int, tau, c=None,
                               n_samples: int = 2000, seed: int = 0,
                               s_slack: float = 0.02,
                               depth: int | None = None) -> ProductAudit:
    """Run the planar rectangle construction inside a cylinder ``B``.

    Rationals ``(p1, p2)/q`` with ``cQ <= q <= 2Q`` whose rectangle
    ``B(p1/q, eta_1/q) x B(p2/q, eta_2/q)`` meets ``B ∩ K`` are collected; each
    gives the rectangle ``B(x1, eta_1/q) x B(p2/q, eta_2/q)`` around a point
    ``x1`` of ``K_1``.  A disjoint subfamily is selected greedily (smallest q
    first), shrunk to squares of half-side ``eta_1/q``, and ``nu`` spreads
    equal mass over the squares.
    """
    _check_product(sys, tau)
    tau = float(tau)
    word = word if isinstance(word, CylinderWord) else CylinderWord(tuple(word))
    _word_check(sys, word)
    e1, e2 = product_etas(Q, tau)
    _check_etas((e1, e2))
    table = []
    if c is None:
        c, table = calibrate_c(sys, word, Q, (e1, e2), depth)
        if c is None:
            raise PreconditionError("no calibration candidate qualifies")
    c = Fraction(c)
    scales = [audit_scale(sys, j, depth) for j in range(2)]
    sx = scales[0]
    wins = _windows(scales, word)
    box = cylinder_box(sys, word)
    qs = range(max(1, math.ceil(c * Q)), 2 * Q + 1)
    q1, p1, X1 = _x_candidates(sx, wins[0], qs, e1)
    # y axis is Lebesgue: open interval meets [a2, a2 + w] in positive length
    (a2, b2) = box[1]
    D = sx.digits
    off = Fraction(D[0], sx.base - 1)
    rects = []
    for q in np.unique(q1):
        q = int(q)
        sel = q1 == q
        lo = math.floor(q * a2 - e2)
        hi = math.ceil(q * b2 + e2)
        p2s = [p2 for p2 in range(lo, hi + 1)
               if Fraction(p2, q) - e2 / q < b2 and Fraction(p2, q) + e2 / q > a2]
        h = (e1 / q, e2 / q)
        for X in X1[sel]:
            x1 = (int(X) + off) / sx.size
            for p2 in p2s:
                rects.append(Rect((x1, Fraction(p2, q)), h, 1.0 / q))
    if not rects:
        raise PreconditionError("no rational rectangle meets B ∩ K")
    factor = cover_factor((1 + tau, 2 - tau))
    cov = greedy_disjoint(rects, factor)
    chosen = [rects[i] for i in cov.selected]
    delta = sys.hausdorff_dim()
    mB = Fraction(1, (len(D) * sys.base) ** word.depth)
    expo = (1 + tau) * (delta - 1) + 2 - tau
    count_ratio = len(chosen) / (float(mB) * Q ** expo)
    s = delta + 3 / (1 + tau) - 2 - s_slack
    cases = _ball_family_cases(sys, sx, chosen, Q, tau, float(box[0][1] - box[0][0]),
                               s, float(mB), n_samples, seed)
    return ProductAudit(Q, tau, c, word.word, mB, len(rects), len(chosen), len(chosen),
                        count_ratio, factor, cov.disjoint, cov.covered, s, cases, table)


def _ball_family_cases(sys, sx: Scale, chosen, Q, tau, diam, s, muB, n, seed):
    """Sups of ``nu(B(y,r)) mu(B) / r**s`` for the equal-weight square family."""
    cx = np.array([float(R.center[0]) for R in chosen])
    cy = np.array([float(R.center[1]) for R in chosen])
    rho = np.array([float(R.half[0]) for R in chosen])
    size = sx.size
    order = np.argsort(cx, kind="stable")
    cx, cy, rho = cx[order], cy[order], rho[order]
    # mu_1 of each square's x side: lower bound from cells certainly inside
    lo_c = np.ceil((cx - rho) * size).astype(np.int64) + 1
    hi_c = np.floor((cx + rho) * size).astype(np.int64) - 1
    mu1 = (sx.cdfs(np.maximum(hi_c, lo_c)) - sx.cdfs(lo_c)).astype(float)
    if (mu1 <= 0).any():
        raise PreconditionError("a square carries no certified mass")
    leb = 2 * rho
    rng = np.random.default_rng([seed, Q, 2])
    pick = rng.integers(0, len(cx), n)
    # y ~ mu restricted to the picked square
    g0 = sx.cdfs(lo_c[pick])
    g1 = sx.cdfs(np.maximum(hi_c[pick], lo_c[pick]))
    ux = (g0 + (rng.random(n) * (g1 - g0)).astype(np.int64)).astype(np.int64)
    yx = (ordinal_cells(sx, ux) + 0.5) / size
    yy = cy[pick] + (2 * rng.random(n) - 1) * rho[pick]
    ranges = {"1": (float(Q) ** -(1 + tau), diam),
              "2": (float(Q) ** -(1 + tau) / 16, float(Q) ** -(1 + tau))}
    out = {}
    m = len(chosen)
    for name, (r_lo, r_hi) in ranges.items():
        r = np.exp(rng.uniform(math.log(r_lo), math.log(r_hi), n))
        ratios = np.empty(n)
        for k in range(n):
            a = np.searchsorted(cx, yx[k] - r[k] - rho.max() - 1 / size, "left")
            b = np.searchsorted(cx, yx[k] + r[k] + rho.max() + 1 / size, "right")
            sl = slice(a, b)
            x0 = np.maximum(yx[k] - r[k], cx[sl] - rho[sl])
            x1 = np.minimum(yx[k] + r[k], cx[sl] + rho[sl])
            y0 = np.maximum(yy[k] - r[k], cy[sl] - rho[sl])
            y1 = np.minimum(yy[k] + r[k], cy[sl] + rho[sl])
            ok = (x1 > x0) & (y1 > y0)
            if not ok.any():
                ratios[k] = 0.0
                continue
            # upper bound on mu_1 of the overlap: cells possibly met, one cell slack
            A = np.floor(x0[ok] * size).astype(np.int64) - 1
            B = np.ceil(x1[ok] * size).astype(np.int64) + 1
            num = (sx.cdfs(B) - sx.cdfs(A)) / mu1[sl][ok]
            frac = (y1[ok] - y0[ok]) / leb[sl][ok]
            nu = float(np.sum(np.minimum(num, 1.0) * frac)) / m
            ratios[k] = nu * muB / r[k] ** s
        out[name] = CaseStat(name, r_lo, r_hi, n, float(ratios.max()),
                             float(np.median(ratios)))
    return out
