"""Fast exact unions of the neighbourhoods ``|x - (p+theta)/q| <= eta_q/q``.

Every interval is reduced to integer cell ranges on a :class:`~jarnik.cells.Scale`
grid, so merging and measuring never touch floating point.  Floats only steer
which ``p`` are worth looking at (with generous margins), which can add
candidates but never drop one.  Large families are processed in windows
aligned to the coarsest cell level of interest.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction
from math import lcm

import numpy as np
from numba import njit

from .cells import Scale, TWO53, _cdf1, _cell1, _merge_sorted, positive_cells

_RAW_BUDGET = 12_000_000


@dataclass
class UnionResult:
    """Mass bounds (units ``scale.total``) and optional cell counts/components."""

    lo: int
    hi: int
    total: int
    intervals: int = 0
    counts: dict = field(default_factory=dict)
    comps: tuple | None = None

    @property
    def value(self) -> Fraction:
        return Fraction(self.lo + self.hi, 2 * self.total)

    @property
    def error(self) -> Fraction:
        return Fraction(self.hi - self.lo, 2 * self.total)


def neighbourhood_params(qs, etas, theta: Fraction):
    """Integer encodings ``(L, tL, eL)`` per q of ``theta`` and ``eta_q``.

    The endpoints of the q-th family are ``(p*L + tL -/+ eL) / (q*L)``.
    """
    qs = [int(q) for q in qs]
    theta = Fraction(theta)
    L = np.empty(len(qs), dtype=object)
    tL = np.empty(len(qs), dtype=object)
    eL = np.empty(len(qs), dtype=object)
    for i, (q, eta) in enumerate(zip(qs, etas)):
        eta = Fraction(eta)
        den = lcm(theta.denominator, eta.denominator)
        L[i] = den
        tL[i] = theta.numerator * (den // theta.denominator)
        eL[i] = eta.numerator * (den // eta.denominator)
    return np.array(qs, dtype=object), L, tL, eL


@njit(cache=True)
def _count_raw(qs, thf, etf, wlo, whi):
    tot = 0
    for i in range(qs.size):
        q = qs[i]
        plo = np.int64(np.floor(q * wlo - thf[i] - etf[i])) - 1
        phi = np.int64(np.ceil(q * whi - thf[i] + etf[i])) + 1
        tot += phi - plo + 1
    return tot


@njit(cache=True)
def _gen(qs, L, tL, eL, thf, etf, wlo, whi, W0, W1, lev_pw, size,
         cum, nb, use_coarse):
    """Cell ranges of all candidate intervals meeting the window.

    Returns possible starts/ends and certain starts/ends (unclipped pairs with
    empty certain ranges are marked by end <= start).
    """
    n = 0
    for sweep in range(2):
        if sweep == 1:
            ps = np.empty(n, np.int64)
            pe = np.empty(n, np.int64)
            cs = np.empty(n, np.int64)
            ce = np.empty(n, np.int64)
            n = 0
        for i in range(qs.size):
            q = qs[i]
            Li = L[i]
            den = q * Li
            plo = np.int64(np.floor(q * wlo - thf[i] - etf[i])) - 1
            phi = np.int64(np.ceil(q * whi - thf[i] + etf[i])) + 1
            for p in range(plo, phi + 1):
                an = p * Li + tL[i] - eL[i]
                cn = p * Li + tL[i] + eL[i]
                if use_coarse:
                    af = an / den - 1e-12
                    cf = cn / den + 1e-12
                    if cf < wlo or af > whi:
                        continue
                    jl = np.int64(np.floor(af * nb))
                    jh = np.int64(np.floor(cf * nb))
                    if jl < 0:
                        jl = 0
                    if jh > nb - 1:
                        jh = nb - 1
                    if jh < jl or cum[jh + 1] - cum[jl] == 0:
                        continue
                if sweep == 0:
                    # cheap exact window test at cell level happens in pass 2
                    n += 1
                    continue
                Xa, Ea = _cell1(an, den, lev_pw, size)
                Xc, Ec = _cell1(cn, den, lev_pw, size)
                s1 = Xa if Xa > W0 else W0
                e1 = Xc if Ec else Xc + 1
                if e1 > W1:
                    e1 = W1
                if e1 <= s1:
                    continue
                s2 = Xa if Ea else Xa + 1
                if s2 < W0:
                    s2 = W0
                e2 = Xc if Xc < W1 else W1
                ps[n] = s1
                pe[n] = e1
                cs[n] = s2
                ce[n] = e2
                n += 1
    return ps[:n], pe[:n], cs[:n], ce[:n]


@njit(cache=True)
def _mass(cs, ce, gtab, atab, cpow, bdiv, mrem, size, total):
    tot = 0
    for i in range(cs.size):
        tot += (_cdf1(ce[i], gtab, atab, cpow, bdiv, mrem, size, total)
                - _cdf1(cs[i], gtab, atab, cpow, bdiv, mrem, size, total))
    return tot


@njit(cache=True)
def _drop_null(cs, ce, gtab, atab, cpow, bdiv, mrem, size, total):
    keep = np.zeros(cs.size, np.bool_)
    for i in range(cs.size):
        keep[i] = (_cdf1(ce[i], gtab, atab, cpow, bdiv, mrem, size, total)
                   > _cdf1(cs[i], gtab, atab, cpow, bdiv, mrem, size, total))
    return keep


def _merge(s, e):
    keep = e > s
    if not keep.all():
        s = s[keep]
        e = e[keep]
    return _merge_sorted(np.sort(s), np.sort(e))


def _coarse(scale: Scale):
    """Prefix count of K-cells at a coarse level, for pruning far intervals."""
    if scale.full:
        return np.zeros(2, np.int64), 1, False
    lev = 1
    while scale.base ** (lev + 1) <= (1 << 21) and scale.base ** -(lev + 1) > 1e-9:
        lev += 1
    coarse = Scale(scale.base, scale.digits, depth=lev)
    j = np.arange(scale.base ** lev + 1, dtype=np.int64)
    return coarse.cdfs(j), scale.base ** lev, True


def union_cells(scale: Scale, qs, etas, theta, window=None, levels=(),
                keep: bool = False, drop_null: bool = True) -> UnionResult:
    """Exact mass bounds of ``window ∩ ∪_q ∪_p [(p+θ-η_q)/q, (p+θ+η_q)/q]``.

    ``window`` is a pair of cell indices ``(W0, W1)`` (default: all of [0,1]).
    ``levels`` requests counts of depth-n cells meeting the union with positive
    mass (lower count from certain cells, upper from possible cells).
    """
    if not scale.fast:
        raise ValueError("fast unions need a depth with b**N < 2**63")
    W0, W1 = window if window is not None else (0, scale.size)
    qarr, L, tL, eL = neighbourhood_params(qs, etas, theta)
    if len(qarr) == 0:
        return UnionResult(0, 0, scale.total)
    dens = [int(q) * int(l) for q, l in zip(qarr, L)]
    nums = [abs(int(t)) + abs(int(e)) for t, e in zip(tL, eL)]
    if max(dens) >= TWO53 or max(nums) >= TWO53:
        raise ValueError("denominators too large for the fast path; round eta")
    qa = np.array([int(q) for q in qarr], dtype=np.int64)
    La = np.array([int(v) for v in L], dtype=np.int64)
    tLa = np.array([int(v) for v in tL], dtype=np.int64)
    eLa = np.array([int(v) for v in eL], dtype=np.int64)
    thf = tLa / La
    etf = eLa / La
    cum, nb, use_coarse = _coarse(scale)
    args = scale.kernel_args()
    align = 1
    if levels:
        align = scale.base ** (scale.depth - min(levels))
        if W0 % align or W1 % align:
            raise ValueError("window must be aligned to the coarsest level")
    span_cells = (W1 - W0) // align
    raw = _count_raw(qa, thf, etf, W0 / scale.size, W1 / scale.size)
    nwin = max(1, min(span_cells, -(-raw // _RAW_BUDGET)))
    lo = hi = 0
    counts = {n: [0, 0] for n in levels}
    kept_c, kept_p = [], []
    n_int = 0
    for k in range(nwin):
        a = W0 + (span_cells * k // nwin) * align
        b = W0 + (span_cells * (k + 1) // nwin) * align
        if b <= a:
            continue
        ps, pe, cs, ce = _gen(qa, La, tLa, eLa, thf, etf, a / scale.size,
                              b / scale.size, a, b, scale.lev_pw, scale.size,
                              cum, nb, use_coarse)
        n_int += ps.size
        ms, me = _merge(ps, pe)
        hi += _mass(ms, me, *args)
        ns, ne = _merge(cs, ce)
        lo += _mass(ns, ne, *args)
        for n in levels:
            counts[n][0] += positive_cells(ns, ne, n, scale.base, scale.depth,
                                           *args, scale.m)
            counts[n][1] += positive_cells(ms, me, n, scale.base, scale.depth,
                                           *args, scale.m)
        if keep:
            if drop_null:
                sel = _drop_null(ns, ne, *args)
                ns, ne = ns[sel], ne[sel]
                sel = _drop_null(ms, me, *args)
                ms, me = ms[sel], me[sel]
            kept_c.append((ns, ne))
            kept_p.append((ms, me))
    comps = None
    if keep:
        cat = lambda parts, i: (np.concatenate([p[i] for p in parts])
                                if parts else np.empty(0, np.int64))
        comps = ((cat(kept_c, 0), cat(kept_c, 1)), (cat(kept_p, 0), cat(kept_p, 1)))
    return UnionResult(lo, hi, scale.total, n_int,
                       {n: tuple(v) for n, v in counts.items()}, comps)


# ---------------------------------------------------------------------------
# theta = 0: stream the Farey sequence instead of sorting
#
# With theta = 0 every centre p/q is a Farey fraction a/b of order q_hi, and
# among its multiples kb in [q_lo, q_hi] the smallest gives the widest
# neighbourhood (eta_q/q is decreasing).  The Farey next-term recurrence
# yields the centres in increasing order, so the union can be merged on the
# fly with a short stack.


def farey_neighbours(x: Fraction, N: int) -> tuple:
    """Consecutive terms ``a/b <= x < c/d`` of the Farey sequence of order N."""
    x = Fraction(x)
    if not 0 <= x < 1:
        raise ValueError("x must lie in [0, 1)")
    ln, ld, rn, rd = 0, 1, 1, 1
    while True:
        mn, md = ln + rn, ld + rd
        if md > N:
            return ln, ld, rn, rd
        if mn * x.denominator <= x.numerator * md:
            # largest k with (ln + k rn)/(ld + k rd) <= x
            gap = rn * x.denominator - x.numerator * rd
            k = (x.numerator * ld - ln * x.denominator) // gap
            k = max(1, min(k, (N - ld) // rd))
            ln, ld = ln + k * rn, ld + k * rd
        else:
            num = rn * x.denominator - x.numerator * rd
            den = x.numerator * ld - ln * x.denominator
            k = (N - rd) // ld
            if den > 0:
                k = min(k, -(-num // den) - 1)
            k = max(1, k)
            rn, rd = rn + k * ln, rd + k * ld


@njit(cache=True)
def _flush(fs, fe, nf, st, gtab, atab, cpow, bdiv, mrem, size, total, lw, lunit,
           last, cnt, slot):
    """Add mass and positive-cell counts of finalized ranges ``[fs, fe)``.

    Ranges arrive in increasing order; ``last`` remembers the most recent
    counted cell per level so shared cells are counted once.
    """
    for i in range(nf):
        s = fs[i]
        e = fe[i]
        gs = _cdf1(s, gtab, atab, cpow, bdiv, mrem, size, total)
        ge = _cdf1(e, gtab, atab, cpow, bdiv, mrem, size, total)
        st[slot] += ge - gs
        if ge <= gs:
            continue
        for li in range(lw.size):
            W = lw[li]
            j0 = s // W
            j1 = (e - 1) // W
            k = 2 * li + slot
            if j0 == j1:
                if j0 != last[k]:
                    cnt[k] += 1
                    last[k] = j0
                continue
            g1 = _cdf1((j0 + 1) * W, gtab, atab, cpow, bdiv, mrem, size, total)
            if g1 > gs and j0 != last[k]:
                cnt[k] += 1
            g2 = _cdf1(j1 * W, gtab, atab, cpow, bdiv, mrem, size, total)
            cnt[k] += (g2 - g1) // lunit[li]
            last[k] = j1 - 1
            if ge > g2:
                cnt[k] += 1
                last[k] = j1
    return 0


@njit(cache=True)
def _push(ss, se, slot, bot, top, tmp_s, tmp_e, s, e):
    """Insert [s, e) into the sorted disjoint stack ``ss/se[slot, bot:top]``."""
    nt = 0
    while top > bot and se[slot, top - 1] >= s:
        if e < ss[slot, top - 1]:
            tmp_s[nt] = ss[slot, top - 1]
            tmp_e[nt] = se[slot, top - 1]
            nt += 1
            top -= 1
        else:
            if ss[slot, top - 1] < s:
                s = ss[slot, top - 1]
            if se[slot, top - 1] > e:
                e = se[slot, top - 1]
            top -= 1
    ss[slot, top] = s
    se[slot, top] = e
    top += 1
    while nt > 0:
        nt -= 1
        ss[slot, top] = tmp_s[nt]
        se[slot, top] = tmp_e[nt]
        top += 1
    return top


@njit(cache=True)
def _farey_stream(a, b, c, d, N, qlo, qhi, enum, eden, xend, W0, W1, reach,
                  lev_pw, gtab, atab, cpow, bdiv, mrem, size, total,
                  lw, lunit, cum, nb, use_coarse, cap, first_slot):
    st = np.zeros(2, np.int64)
    strad = 0
    cnt = np.zeros(2 * lw.size, np.int64)
    last = np.full(2 * lw.size, -1, np.int64)
    ss = np.empty((2, cap), np.int64)
    se = np.empty((2, cap), np.int64)
    bot = np.zeros(2, np.int64)
    top = np.zeros(2, np.int64)
    tmp_s = np.empty(cap, np.int64)
    tmp_e = np.empty(cap, np.int64)
    # finalized ranges wait here and are accounted in batches
    fs = np.empty((2, cap), np.int64)
    fe = np.empty((2, cap), np.int64)
    nf = np.zeros(2, np.int64)
    nterms = 0
    while a <= xend * b:
        k = (qlo + b - 1) // b
        q = k * b
        if q <= qhi:
            e = enum[q - qlo]
            E = eden[q - qlo]
            den = q * E
            an = a * k * E - e
            cn = a * k * E + e
            keep = True
            if use_coarse:
                af = an / den - 1e-12
                cf = cn / den + 1e-12
                jl = max(np.int64(np.floor(af * nb)), 0)
                jh = min(np.int64(np.floor(cf * nb)), nb - 1)
                keep = jh >= jl and cum[jh + 1] > cum[jl]
            if keep:
                nterms += 1
                Xa, Ea = _cell1(an, den, lev_pw, size)
                Xc, Ec = _cell1(cn, den, lev_pw, size)
                if first_slot == 1:
                    # full digit set: every straddling cell has mass one
                    if not Ea and Xa >= W0:
                        strad += 1
                    if not Ec and Xc < W1:
                        strad += 1
                for slot in range(first_slot, 2):
                    if slot == 0:
                        rs = max(Xa if Ea else Xa + 1, W0)
                        re = min(Xc, W1)
                    else:
                        rs = max(Xa, W0)
                        re = min(Xc if Ec else Xc + 1, W1)
                    if re <= rs:
                        continue
                    # finalize ranges that no later interval can reach
                    while bot[slot] < top[slot] and se[slot, bot[slot]] < rs - reach:
                        if nf[slot] == cap:
                            nf[slot] = _flush(fs[slot], fe[slot], cap, st, gtab, atab,
                                              cpow, bdiv, mrem, size, total, lw,
                                              lunit, last, cnt, slot)
                        fs[slot, nf[slot]] = ss[slot, bot[slot]]
                        fe[slot, nf[slot]] = se[slot, bot[slot]]
                        nf[slot] += 1
                        bot[slot] += 1
                    if top[slot] >= cap:
                        n = top[slot] - bot[slot]
                        if n >= cap // 2:
                            raise RuntimeError("merge stack overflow")
                        for i in range(n):
                            ss[slot, i] = ss[slot, bot[slot] + i]
                            se[slot, i] = se[slot, bot[slot] + i]
                        bot[slot] = 0
                        top[slot] = n
                    if top[slot] == bot[slot] or rs > se[slot, top[slot] - 1]:
                        ss[slot, top[slot]] = rs
                        se[slot, top[slot]] = re
                        top[slot] += 1
                    elif rs >= ss[slot, top[slot] - 1]:
                        if re > se[slot, top[slot] - 1]:
                            se[slot, top[slot] - 1] = re
                    else:
                        top[slot] = _push(ss, se, slot, bot[slot], top[slot],
                                          tmp_s, tmp_e, rs, re)
        # next Farey term
        if a >= b:
            break
        kk = (N + b) // d
        a, b, c, d = c, d, kk * c - a, kk * d - b
    for slot in range(first_slot, 2):
        _flush(fs[slot], fe[slot], nf[slot], st, gtab, atab, cpow, bdiv, mrem, size,
               total, lw, lunit, last, cnt, slot)
        n = top[slot] - bot[slot]
        _flush(ss[slot, bot[slot]:], se[slot, bot[slot]:], n, st, gtab, atab, cpow,
               bdiv, mrem, size, total, lw, lunit, last, cnt, slot)
    if first_slot == 1:
        st[0] = max(st[1] - strad, 0)
        for li in range(lw.size):
            cnt[2 * li] = cnt[2 * li + 1]
    return st, cnt, nterms


def union_cells_farey(scale: Scale, q_lo: int, q_hi: int, etas, window=None,
                      levels=()) -> UnionResult:
    """As :func:`union_cells` with ``theta = 0`` and ``q`` in ``[q_lo, q_hi]``.

    ``etas[i]`` belongs to ``q = q_lo + i`` and ``eta_q / q`` must decrease.
    """
    if not scale.fast:
        raise ValueError("fast unions need a depth with b**N < 2**63")
    etas = [Fraction(e) for e in etas]
    if len(etas) != q_hi - q_lo + 1:
        raise ValueError("need one eta per q")
    for i in range(1, len(etas)):
        if etas[i] * (q_lo + i - 1) > etas[i - 1] * (q_lo + i):
            raise ValueError("eta_q / q must be non-increasing")
    enum = np.array([e.numerator for e in etas], dtype=np.int64)
    eden = np.array([e.denominator for e in etas], dtype=np.int64)
    if max(q_hi * int(x) for x in eden) >= TWO53:
        raise ValueError("denominators too large for the fast path; round eta")
    W0, W1 = window if window is not None else (0, scale.size)
    levels = tuple(sorted(levels))
    lw = np.array([scale.base ** (scale.depth - n) for n in levels], dtype=np.int64)
    for W in lw:
        if W0 % W or W1 % W:
            raise ValueError("window must be aligned to the coarsest level")
    lunit = np.array([scale.m ** (scale.depth - n) for n in levels], dtype=np.int64)
    rmax = etas[0] / q_lo
    reach = int(rmax * scale.size) + 4
    x0 = max(Fraction(0), Fraction(W0, scale.size) - rmax)
    if x0 >= 1:
        return UnionResult(0, 0, scale.total)
    a, b, c, d = farey_neighbours(x0, q_hi)
    xend = float(Fraction(W1, scale.size) + rmax) + 1e-9
    cum, nb, use_coarse = _coarse(scale)
    # on the full grid possible cells are exactly the cells met in positive
    # length, so the certain pass is replaced by a straddle count
    first_slot = 1 if scale.full else 0
    st, cnt, nterms = _farey_stream(a, b, c, d, q_hi, q_lo, q_hi, enum, eden, xend,
                                    W0, W1, reach, scale.lev_pw, *scale.kernel_args(),
                                    lw, lunit, cum, nb, use_coarse, 1 << 16,
                                    first_slot)
    counts = {n: (int(cnt[2 * i]), int(cnt[2 * i + 1])) for i, n in enumerate(levels)}
    return UnionResult(int(st[0]), int(st[1]), scale.total, int(nterms), counts)


@njit(cache=True)
def _single_q_kernel(qs, L, tL, eL, W0, W1, lev_pw, gtab, atab, cpow, bdiv, mrem,
                     size, total):
    """Mass bounds of each single-q family inside the window [W0, W1)."""
    n = qs.size
    lo = np.zeros(n, np.int64)
    hi = np.zeros(n, np.int64)
    wlo = W0 / size
    whi = W1 / size
    for i in range(n):
        q = qs[i]
        den = q * L[i]
        plo = np.int64(np.floor(q * wlo - (tL[i] + eL[i]) / L[i])) - 1
        phi = np.int64(np.ceil(q * whi - (tL[i] - eL[i]) / L[i])) + 1
        for slot in range(2):
            cur_s = -1
            cur_e = -1
            acc = 0
            for p in range(plo, phi + 1):
                Xa, Ea = _cell1(p * L[i] + tL[i] - eL[i], den, lev_pw, size)
                Xc, Ec = _cell1(p * L[i] + tL[i] + eL[i], den, lev_pw, size)
                if slot == 0:
                    rs = max(Xa if Ea else Xa + 1, W0)
                    re = min(Xc, W1)
                else:
                    rs = max(Xa, W0)
                    re = min(Xc if Ec else Xc + 1, W1)
                if re <= rs:
                    continue
                if cur_e >= rs:
                    if re > cur_e:
                        cur_e = re
                else:
                    if cur_e > cur_s:
                        acc += (_cdf1(cur_e, gtab, atab, cpow, bdiv, mrem, size, total)
                                - _cdf1(cur_s, gtab, atab, cpow, bdiv, mrem, size, total))
                    cur_s = rs
                    cur_e = re
            if cur_e > cur_s:
                acc += (_cdf1(cur_e, gtab, atab, cpow, bdiv, mrem, size, total)
                        - _cdf1(cur_s, gtab, atab, cpow, bdiv, mrem, size, total))
            if slot == 0:
                lo[i] = acc
            else:
                hi[i] = acc
    return lo, hi


def single_q_masses(scale: Scale, qs, etas, theta=0, window=None):
    """Per-q mass bounds ``(lo, hi)`` of ``A(q, eta_q, theta)`` inside a window."""
    W0, W1 = window if window is not None else (0, scale.size)
    qarr, L, tL, eL = neighbourhood_params(qs, etas, theta)
    if max(int(q) * int(l) for q, l in zip(qarr, L)) >= TWO53:
        raise ValueError("denominators too large for the fast path; round eta")
    arr = lambda v: np.array([int(x) for x in v], dtype=np.int64)
    return _single_q_kernel(arr(qarr), arr(L), arr(tL), arr(eL), W0, W1,
                            scale.lev_pw, *scale.kernel_args())
