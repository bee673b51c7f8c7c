"""Integer b-adic cell grid used for every exact measure evaluation.

A coordinate axis is cut into ``b**N`` cells of side ``b**-N``.  A rational
``x = num/den`` is located by its cell index ``X = floor(x * b**N)`` and a flag
telling whether ``x`` sits exactly on the left edge of that cell.  The natural
measure of ``[0, X * b**-N]`` is an integer ``G(X)`` in units of ``m**-N``
(``m`` the number of admissible digits), evaluated through per-chunk lookup
tables.  An interval whose endpoints fall strictly inside cells is bracketed by
the cells it certainly covers and the cells it possibly touches; the two
masses bound the true measure.  The gap is the straddling-cell error.

Two interchangeable paths exist: scalar functions on Python integers (any
depth, any denominator) and numba kernels on int64 arrays (depth limited so
that ``b**N < 2**62``, denominators below ``2**53``).
"""
from __future__ import annotations

import math

import numpy as np
from numba import njit

TWO53 = 1 << 53
_TABLE_LIMIT = 1 << 17
_FLOAT_SAFE = 1 << 40


def max_depth_for(base: int) -> int:
    """Largest depth whose cell count fits comfortably in int64."""
    n = 1
    while base ** (n + 1) < (1 << 63) - 8:
        n += 1
    return n


def float_depth(base: int) -> int:
    """Largest depth on which cells are located by a guarded float quotient."""
    n = 1
    while base ** (n + 1) < _FLOAT_SAFE:
        n += 1
    return n


def _split(total: int, parts: int) -> list[int]:
    q, r = divmod(total, parts)
    return [q + 1] * r + [q] * (parts - r)


class Scale:
    """Cell grid and CDF tables for one coordinate ``K(b, D)``.

    >>> s = Scale(3, (0, 2), depth=4)
    >>> s.cdf(27), s.total
    (8, 16)
    """

    def __init__(self, base: int, digits, depth: int | None = None):
        self.base = int(base)
        self.digits = tuple(sorted(int(a) for a in digits))
        self.m = len(self.digits)
        nmax = max_depth_for(self.base)
        if depth is None:
            depth = nmax
        self.depth = int(depth)
        self.size = self.base ** self.depth
        self.total = self.m ** self.depth
        self.full = self.m == self.base
        self.min_k = self.digits[0]
        self.max_k = self.digits[-1]
        # count of admissible digits strictly below each digit, and membership
        below = np.zeros(self.base, dtype=np.int64)
        member = np.zeros(self.base, dtype=np.uint8)
        for a in self.digits:
            member[a] = 1
        for t in range(self.base):
            below[t] = sum(1 for a in self.digits if a < t)
        self._below = below
        self._member = member
        self.fast = self.depth <= nmax
        if self.fast:
            self._build_tables()

    # tables -----------------------------------------------------------------
    def _chunk_table(self, c: int):
        b, m = self.base, self.m
        t = np.arange(b ** c, dtype=np.int64)
        g = np.zeros_like(t)
        alive = np.ones(t.shape, dtype=np.uint8)
        for j in range(c):
            dj = (t // b ** (c - 1 - j)) % b
            g += alive * self._below[dj] * m ** (c - 1 - j)
            alive &= self._member[dj]
        return g, alive

    def _build_tables(self):
        b, m, n = self.base, self.m, self.depth
        parts = 1
        while b ** math.ceil(n / parts) > _TABLE_LIMIT and parts < n:
            parts += 1
        sizes = _split(n, parts)
        width = b ** max(sizes)
        gtab = np.zeros((parts, width), dtype=np.int64)
        atab = np.zeros((parts, width), dtype=np.uint8)
        cache = {}
        for i, c in enumerate(sizes):
            if c not in cache:
                cache[c] = self._chunk_table(c)
            g, a = cache[c]
            gtab[i, : g.size] = g
            atab[i, : a.size] = a
        rem = [sum(sizes[i + 1:]) for i in range(parts)]
        self.gtab = gtab
        self.atab = atab
        self.cpow = np.array([b ** c for c in sizes], dtype=np.int64)
        self.bdiv = np.array([b ** r for r in rem], dtype=np.int64)
        self.mrem = np.array([m ** r for r in rem], dtype=np.int64)
        # long-division levels: each level multiplies by at most 2**40
        lev = []
        left = n
        while left:
            k = min(left, max(1, int(40 / math.log2(b))))
            lev.append(k)
            left -= k
        self.lev_pw = np.array([b ** k for k in lev], dtype=np.int64)

    # scalar path ------------------------------------------------------------
    def cell(self, num: int, den: int) -> tuple[int, bool]:
        """Cell index of ``num/den`` clipped to [0, 1] and the on-edge flag."""
        if num <= 0:
            return 0, True
        if num >= den:
            return self.size, True
        q, r = divmod(num * self.size, den)
        return q, r == 0

    def cdf(self, X: int) -> int:
        """Mass of ``[0, X * b**-N]`` in units ``m**-N``."""
        if X >= self.size:
            return self.total
        if X <= 0:
            return 0
        b, m = self.base, self.m
        g = 0
        for j in range(self.depth):
            dj = (X // b ** (self.depth - 1 - j)) % b
            g += int(self._below[dj]) * m ** (self.depth - 1 - j)
            if not self._member[dj]:
                break
        return g

    def in_k(self, X: int) -> int:
        """1 if cell ``X`` is a depth-N cylinder of K, else 0."""
        if X < 0 or X >= self.size:
            return 0
        return self.cdf(X + 1) - self.cdf(X)

    # vector path ------------------------------------------------------------
    def cells(self, num, den):
        """Vectorised :meth:`cell`; falls back to Python integers if needed."""
        num = np.asarray(num)
        den = np.asarray(den)
        if (self.fast and num.dtype.kind == "i" and den.dtype.kind == "i"
                and den.size and int(den.max()) < TWO53 and int(den.min()) > 0):
            num = np.broadcast_to(num, np.broadcast_shapes(num.shape, den.shape))
            den = np.broadcast_to(den, num.shape)
            return _cells_kernel(np.ascontiguousarray(num, dtype=np.int64),
                                 np.ascontiguousarray(den, dtype=np.int64),
                                 self.lev_pw, self.size)
        X = np.empty(np.broadcast_shapes(num.shape, den.shape), dtype=np.int64)
        E = np.empty(X.shape, dtype=np.bool_)
        for idx, (n, d) in enumerate(np.broadcast(num, den)):
            x, e = self.cell(int(n), int(d))
            X.flat[idx] = x
            E.flat[idx] = e
        return X, E

    def cdfs(self, X):
        X = np.ascontiguousarray(X, dtype=np.int64)
        if self.fast:
            return _cdf_kernel(X, self.gtab, self.atab, self.cpow, self.bdiv,
                               self.mrem, self.size, self.total)
        return np.array([self.cdf(int(x)) for x in X.ravel()],
                        dtype=object).reshape(X.shape)

    def kernel_args(self):
        return (self.gtab, self.atab, self.cpow, self.bdiv, self.mrem,
                self.size, self.total)


# ---------------------------------------------------------------------------
# numba kernels


@njit(cache=True)
def _cell1(num, den, lev_pw, size):
    X = 0
    r = 0
    fast = False
    if num >= den:
        X = size
    elif num > 0 and size < _FLOAT_SAFE:
        # float quotient is within 2**-12 of the truth on such grids
        t = (num / den) * size
        X = np.int64(t)
        fr = t - X
        fast = fr > 1e-3 and fr < 1.0 - 1e-3
        r = 1
    if num > 0 and num < den and not fast:
        X = 0
        r = num
        for i in range(lev_pw.shape[0]):
            pw = lev_pw[i]
            t = np.int64((r / den) * pw)
            rem = np.int64(np.uint64(r) * np.uint64(pw) - np.uint64(t) * np.uint64(den))
            if rem < 0:
                t -= 1
                rem += den
            elif rem >= den:
                t += 1
                rem -= den
            X = X * pw + t
            r = rem
    return X, r == 0


@njit(cache=True)
def _cells_kernel(num, den, lev_pw, size):
    n = num.size
    X = np.empty(n, dtype=np.int64)
    E = np.empty(n, dtype=np.bool_)
    fn = num.ravel()
    fd = den.ravel()
    for i in range(n):
        x, e = _cell1(fn[i], fd[i], lev_pw, size)
        X[i] = x
        E[i] = e
    return X.reshape(num.shape), E.reshape(num.shape)


@njit(cache=True)
def _cdf1(X, gtab, atab, cpow, bdiv, mrem, size, total):
    g = 0
    if X >= size:
        g = total
    elif total == size:
        g = X if X > 0 else 0
    elif X > 0:
        y = X
        for i in range(bdiv.shape[0]):
            d = bdiv[i]
            t = np.int64(y / d)
            r = y - t * d
            if r < 0:
                t -= 1
                r += d
            elif r >= d:
                t += 1
                r -= d
            y = r
            g += gtab[i, t] * mrem[i]
            if atab[i, t] == 0:
                break
    return g


@njit(cache=True)
def _cdf_kernel(X, gtab, atab, cpow, bdiv, mrem, size, total):
    out = np.empty(X.size, dtype=np.int64)
    fx = X.ravel()
    for i in range(fx.size):
        out[i] = _cdf1(fx[i], gtab, atab, cpow, bdiv, mrem, size, total)
    return out.reshape(X.shape)


def merge_ranges(s, e):
    """Union of half-open integer ranges as sorted disjoint (start, end) arrays.

    Starts and ends are sorted independently; a coverage counter then walks
    the two sequences, which is all a union needs.
    """
    s = np.asarray(s, dtype=np.int64)
    e = np.asarray(e, dtype=np.int64)
    keep = e > s
    if not keep.all():
        s = s[keep]
        e = e[keep]
    return _merge_sorted(np.sort(s), np.sort(e))


@njit(cache=True)
def _merge_sorted(S, E):
    n = S.size
    cs = np.empty(n, np.int64)
    ce = np.empty(n, np.int64)
    k = 0
    i = 0
    j = 0
    depth = 0
    while i < n:
        if S[i] <= E[j]:
            if depth == 0:
                cs[k] = S[i]
            depth += 1
            i += 1
        else:
            depth -= 1
            if depth == 0:
                ce[k] = E[j]
                k += 1
            j += 1
    if n:
        ce[k] = E[n - 1]
        k += 1
    return cs[:k].copy(), ce[:k].copy()


@njit(cache=True)
def ranges_mass(cs, ce, gtab, atab, cpow, bdiv, mrem, size, total):
    tot = 0
    for i in range(cs.size):
        tot += (_cdf1(ce[i], gtab, atab, cpow, bdiv, mrem, size, total)
                - _cdf1(cs[i], gtab, atab, cpow, bdiv, mrem, size, total))
    return tot


@njit(cache=True)
def interval_ranges(Xa, Ea, Xc, Ec, W0, W1):
    """Possible and certain cell ranges of closed intervals, clipped to a window."""
    n = Xa.size
    ps = np.empty(n, np.int64)
    pe = np.empty(n, np.int64)
    cs = np.empty(n, np.int64)
    ce = np.empty(n, np.int64)
    for i in range(n):
        a = Xa[i]
        c = Xc[i]
        s1 = a
        e1 = c if Ec[i] else c + 1
        s2 = a if Ea[i] else a + 1
        e2 = c
        ps[i] = max(s1, W0)
        pe[i] = min(e1, W1)
        cs[i] = max(s2, W0)
        ce[i] = min(e2, W1)
    return ps, pe, cs, ce


@njit(cache=True)
def positive_cells(cs, ce, level, base, N, gtab, atab, cpow, bdiv, mrem, size, total, m):
    """Number of depth-``level`` cells meeting the ranges with positive mass.

    Ranges must be sorted and disjoint.
    """
    W = 1
    for _ in range(N - level):
        W *= base
    unit = 1
    for _ in range(N - level):
        unit *= m
    count = 0
    last = -1
    for i in range(cs.size):
        s = cs[i]
        e = ce[i]
        gs = _cdf1(s, gtab, atab, cpow, bdiv, mrem, size, total)
        ge = _cdf1(e, gtab, atab, cpow, bdiv, mrem, size, total)
        if ge <= gs:
            continue
        j0 = s // W
        j1 = (e - 1) // W
        if j0 == j1:
            if j0 != last:
                count += 1
                last = j0
            continue
        g1 = _cdf1((j0 + 1) * W, gtab, atab, cpow, bdiv, mrem, size, total)
        if g1 > gs and j0 != last:
            count += 1
            last = j0
        g2 = _cdf1(j1 * W, gtab, atab, cpow, bdiv, mrem, size, total)
        count += (g2 - g1) // unit
        if ge > g2:
            if j1 != last:
                count += 1
            last = j1
    return count


@njit(cache=True)
def _mul128(a, b):
    M = np.uint64(0xFFFFFFFF)
    s32 = np.uint64(32)
    a = np.uint64(a)
    b = np.uint64(b)
    al = a & M
    ah = a >> s32
    bl = b & M
    bh = b >> s32
    p0 = al * bl
    p1 = al * bh
    p2 = ah * bl
    p3 = ah * bh
    mid = (p0 >> s32) + (p1 & M) + (p2 & M)
    lo = (p0 & M) | (mid << s32)
    hi = p3 + (p1 >> s32) + (p2 >> s32) + (mid >> s32)
    return hi, lo


@njit(cache=True)
def box_union_mass(xs, xe, ys, ye, gx, ax, cpx, bdx, mrx, szx, tox,
                   gy, ay, cpy, bdy, mry, szy, toy):
    """Product-measure mass of a union of cell boxes, as a 128-bit (hi, lo) pair.

    Plane sweep along x with a segment tree over compressed y-cells.
    """
    keep = (xe > xs) & (ye > ys)
    xs = xs[keep]
    xe = xe[keep]
    ys = ys[keep]
    ye = ye[keep]
    n = xs.size
    if n == 0:
        return np.uint64(0), np.uint64(0)
    Y = np.unique(np.concatenate((ys, ye)))
    ny = Y.size - 1
    w = np.empty(ny, np.int64)
    gprev = _cdf1(Y[0], gy, ay, cpy, bdy, mry, szy, toy)
    for k in range(ny):
        g = _cdf1(Y[k + 1], gy, ay, cpy, bdy, mry, szy, toy)
        w[k] = g - gprev
        gprev = g
    size = 1
    while size < ny:
        size *= 2
    cnt = np.zeros(2 * size, np.int64)
    cov = np.zeros(2 * size, np.int64)
    tot = np.zeros(2 * size, np.int64)
    for k in range(ny):
        tot[size + k] = w[k]
    for k in range(size - 1, 0, -1):
        tot[k] = tot[2 * k] + tot[2 * k + 1]
    ex = np.concatenate((xs, xe))
    et = np.concatenate((np.ones(n, np.int64), -np.ones(n, np.int64)))
    lo_i = np.searchsorted(Y, np.concatenate((ys, ys)))
    hi_i = np.searchsorted(Y, np.concatenate((ye, ye)))
    order = np.argsort(ex, kind="mergesort")
    acc_hi = np.uint64(0)
    acc_lo = np.uint64(0)
    prev_x = ex[order[0]]
    prev_g = _cdf1(prev_x, gx, ax, cpx, bdx, mrx, szx, tox)
    stack_node = np.empty(128, np.int64)
    stack_l = np.empty(128, np.int64)
    stack_r = np.empty(128, np.int64)
    canon = np.empty(128, np.int64)
    for j in range(order.size):
        i = order[j]
        x = ex[i]
        if x != prev_x:
            gx_now = _cdf1(x, gx, ax, cpx, bdx, mrx, szx, tox)
            dm = gx_now - prev_g
            if dm > 0 and cov[1] > 0:
                h, l = _mul128(dm, cov[1])
                nl = acc_lo + l
                carry = np.uint64(1) if nl < acc_lo else np.uint64(0)
                acc_lo = nl
                acc_hi = acc_hi + h + carry
            prev_x = x
            prev_g = gx_now
        # range update [lo_i, hi_i) with +/-1, iterative recursion
        a = lo_i[i]
        b = hi_i[i]
        v = et[i]
        top = 0
        stack_node[0] = 1
        stack_l[0] = 0
        stack_r[0] = size
        ncanon = 0
        while top >= 0:
            node = stack_node[top]
            l = stack_l[top]
            r = stack_r[top]
            top -= 1
            if b <= l or r <= a:
                continue
            if a <= l and r <= b:
                cnt[node] += v
                canon[ncanon] = node
                ncanon += 1
                continue
            mid = (l + r) // 2
            top += 1
            stack_node[top] = 2 * node
            stack_l[top] = l
            stack_r[top] = mid
            top += 1
            stack_node[top] = 2 * node + 1
            stack_l[top] = mid
            stack_r[top] = r
        # recompute coverage upward from every touched canonical node
        for c in range(ncanon):
            k = canon[c]
            while k >= 1:
                if cnt[k] > 0:
                    cov[k] = tot[k]
                elif k >= size:
                    cov[k] = 0
                else:
                    cov[k] = cov[2 * k] + cov[2 * k + 1]
                k //= 2
    return acc_hi, acc_lo


def u128(pair) -> int:
    hi, lo = pair
    return (int(hi) << 64) | int(lo)
