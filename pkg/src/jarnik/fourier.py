"""Fourier coefficients of missing-digits measures and their l1 growth.

The transform is the infinite product ``prod_{n>=1} g(t / b**n)`` with
``g(u) = mean_{a in D} exp(-2 pi i a u)``.  It is cut once the remaining
factors provably change the value by less than ``tol``: each satisfies
``|1 - g(u)| <= 2 pi max(D) |u|``, so the tail moves the product by at most
``exp(S) - 1`` with ``S`` the geometric sum of those bounds.

Integer arguments scaled by ``b**-k`` are reduced modulo 1 exactly before
any float is formed, so large frequencies keep full phase accuracy.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from numba import njit

from .errors import PreconditionError
from .fractal import CylinderWord, DigitSystem, sample_digits

TWO_PI = 2.0 * math.pi
BLOCK = 1 << 16


def tail_terms(base: int, amax: int, t: float, tol: float) -> int:
    """Number of factors after which the certified tail bound drops below tol."""
    if t == 0 or amax == 0:
        return 0
    n = 0
    while True:
        s = TWO_PI * amax * abs(t) * base ** -float(n) / (base - 1)
        if s < 1 and math.expm1(s) < tol:
            return n
        n += 1


@njit(cache=True)
def _hat_scaled(xi, k, base, digits, tol, amax):
    """``mu_hat(xi / b**k)`` for integer ``xi`` (complex array)."""
    out = np.empty(xi.size, np.complex128)
    m = digits.size
    for i in range(xi.size):
        x = xi[i]
        if x == 0:
            out[i] = 1.0
            continue
        ax = abs(x)
        t = ax / base ** float(k)
        # factors n = 1..N with tail bound below tol
        N = 0
        while True:
            s = 2.0 * np.pi * amax * t * base ** (-float(N)) / (base - 1)
            if np.expm1(s) < tol:
                break
            N += 1
        prod = 1.0 + 0.0j
        # P = b**(k+n) while it fits in int64; past that ax < P and floats suffice
        lim = np.int64(2 ** 62) // base
        P = np.int64(1)
        exact = True
        for _ in range(k):
            if exact and P <= lim:
                P *= base
            else:
                exact = False
        for n in range(1, N + 1):
            if exact and P <= lim:
                P *= base
                u = (ax % P) / P
            else:
                exact = False
                u = ax / (base ** float(k + n))
            re = 0.0
            im = 0.0
            for j in range(m):
                ph = 2.0 * np.pi * digits[j] * u
                re += np.cos(ph)
                im -= np.sin(ph)
            prod *= complex(re / m, im / m)
        out[i] = prod if x > 0 else np.conj(prod)
    return out


def _axis_digits(sys: DigitSystem, j: int = 0):
    return np.array(sys.digits[j], dtype=np.float64)


def hat_scaled(sys: DigitSystem, xi, k: int = 0, tol: float = 1e-12, axis: int = 0):
    """``mu_hat(xi * b**-k)`` along one axis for integer ``xi`` (array)."""
    xi = np.atleast_1d(np.asarray(xi, dtype=np.int64))
    D = sys.digits[axis]
    return _hat_scaled(xi, int(k), sys.base, _axis_digits(sys, axis), float(tol),
                       float(max(D)))


def mu_hat(sys: DigitSystem, t, tol: float = 1e-12) -> complex:
    """Fourier transform of the natural measure at real ``t`` (a tuple for d > 1).

    >>> mu_hat(DigitSystem(3, ((0, 2),)), 0)
    (1+0j)
    """
    if tol <= 0:
        raise PreconditionError("tol must be positive")
    ts = t if isinstance(t, (tuple, list)) else (t,)
    if len(ts) != sys.dim:
        raise PreconditionError("argument dimension mismatch")
    val = 1 + 0j
    for j, tj in enumerate(ts):
        tj = float(tj)
        D = sys.digits[j]
        if tj == float(int(tj)) and abs(tj) < 2 ** 62:
            val *= complex(hat_scaled(sys, [int(tj)], 0, tol / sys.dim, j)[0])
            continue
        N = tail_terms(sys.base, max(D), tj, tol / sys.dim)
        prod = 1 + 0j
        for n in range(1, N + 1):
            u = math.fmod(tj / sys.base ** n, 1.0)
            prod *= sum(complex(math.cos(TWO_PI * a * u), -math.sin(TWO_PI * a * u))
                        for a in D) / len(D)
        val *= prod
    return val


def g_digits(sys: DigitSystem, u: float, axis: int = 0) -> complex:
    D = sys.digits[axis]
    return sum(complex(math.cos(TWO_PI * a * u), -math.sin(TWO_PI * a * u))
               for a in D) / len(D)


def _abs_sums(sys: DigitSystem, M: int, k: int, tol: float, axis: int = 0):
    """``sum_{xi=1}^{M} |mu_hat(xi b**-k)|`` accumulated blockwise with fsum."""
    parts = []
    for lo in range(1, M + 1, BLOCK):
        xi = np.arange(lo, min(M, lo + BLOCK - 1) + 1, dtype=np.int64)
        parts.append(math.fsum(np.abs(hat_scaled(sys, xi, k, tol, axis))))
    return math.fsum(parts)


@dataclass
class L1Sum:
    M: int
    S: float
    err: float


def l1_sum(sys: DigitSystem, M: int, tol: float = 1e-12) -> L1Sum:
    """``S(M) = sum_{0 < |xi| <= M} |mu_hat(xi)|`` (sup norm on Z^d)."""
    if M < 1:
        raise PreconditionError("M must be at least 1")
    if sys.dim == 1:
        S = 2 * _abs_sums(sys, M, 0, tol)
        return L1Sum(M, S, 2 * M * tol)
    # product measure: the sum over the cube factorises
    full = 1.0
    for j in range(sys.dim):
        full *= 1 + 2 * _abs_sums(sys, M, 0, tol / sys.dim, j)
    return L1Sum(M, full - 1, (2 * M + 1) ** sys.dim * tol)


@dataclass
class FourierProfile:
    entries: list
    slopes: list
    truncation_tol: float
    estimate: float
    spread: float
    degenerate: bool = False
    notes: list = field(default_factory=list)


def dim_l1_estimate(sys: DigitSystem, M_list, tol: float = 1e-12) -> FourierProfile:
    """Median of the per-step decay exponents ``d - dlog S / dlog M``.

    An empirical estimator of the l1 decay exponent, not a certified bound.
    """
    M_list = sorted(int(M) for M in M_list)
    if len(M_list) < 3:
        raise PreconditionError("need at least three M values")
    entries = [l1_sum(sys, M, tol) for M in M_list]
    d = sys.dim
    if all(e.S <= e.err for e in entries):
        return FourierProfile([(e.M, e.S) for e in entries], [], tol, float(d), 0.0,
                              True, ["S(M) vanishes: transform is zero off the origin"])
    slopes = []
    for a, b in zip(entries, entries[1:]):
        slopes.append(d - math.log(b.S / a.S) / math.log(b.M / a.M))
    est = float(np.median(slopes))
    return FourierProfile([(e.M, e.S) for e in entries], slopes, tol, est,
                          max(slopes) - min(slopes))


def branch_identity_check(sys: DigitSystem, word, xi: int, n: int = 100_000,
                          seed: int = 0, depth: int = 30, sigmas: float = 4.0) -> dict:
    """Monte Carlo check of ``|mu_w_hat(xi)| = |mu_hat(b**-|w| xi)|``.

    ``mu_w`` is the image of ``mu`` under the cylinder map of ``w``.  Its
    transform is also compared in full, phase included, against
    ``exp(-2 pi i xi c_w) mu_hat(b**-|w| xi)`` where ``c_w`` is the cylinder corner.
    """
    if sys.dim != 1:
        raise PreconditionError("branch identity check is one-dimensional")
    w = word if isinstance(word, CylinderWord) else CylinderWord(tuple(word))
    k = w.depth
    b = sys.base
    corner = 0
    for (a,) in w.letters(1):
        if a not in sys.digits[0]:
            raise PreconditionError(f"digit {a} not admissible")
        corner = corner * b + a
    predicted = complex(hat_scaled(sys, [xi], k)[0])
    # phase of the corner, reduced exactly: xi * corner / b**k mod 1
    ph = TWO_PI * ((xi * corner) % b ** k) / b ** k
    predicted_full = complex(math.cos(ph), -math.sin(ph)) * predicted
    dig = sample_digits(sys, n, depth, seed)[:, 0, :]
    # x = corner/b^k + b^-k * y with y = sum dig_j b^-(j+1); phase reduced per digit
    acc = np.zeros(n, dtype=np.float64)
    for j in range(depth):
        P = b ** (k + j + 1)
        if P <= 2 ** 62:
            acc += ((xi % P) * dig[:, j] % P) / P
        else:
            acc += xi * dig[:, j] / float(P)
    acc = np.mod(acc + ((xi * corner) % b ** k) / b ** k, 1.0)
    vals = np.exp(-1j * TWO_PI * acc)
    est = complex(vals.mean())
    # truncating y at `depth` digits moves each phase by < 2 pi |xi| b^-(k+depth)
    bias = TWO_PI * abs(xi) * float(b) ** -(k + depth)
    se = 1.0 / math.sqrt(n)
    tol_mc = sigmas * se + bias
    return {
        "mc": est, "predicted": predicted_full,
        "abs_mc": abs(est), "abs_predicted": abs(predicted),
        "modulus_ok": abs(abs(est) - abs(predicted)) <= tol_mc,
        "full_ok": abs(est - predicted_full) <= tol_mc * math.sqrt(2),
        "tolerance": tol_mc,
    }


# ---------------------------------------------------------------------------
# divisor sums


def divisor_count(n: int) -> int:
    """Number of positive divisors by trial division.

    >>> divisor_count(12)
    6
    """
    n = int(n)
    if n < 1:
        raise PreconditionError("divisor_count needs n >= 1 (d(0) is a caller convention)")
    count = 0
    i = 1
    while i * i <= n:
        if n % i == 0:
            count += 1 if i * i == n else 2
        i += 1
    return count


@njit(cache=True)
def _divisor_sieve(X):
    d = np.zeros(X + 1, np.int64)
    for i in range(1, X + 1):
        for j in range(i, X + 1, i):
            d[j] += 1
    return d


def divisor_counts(X: int) -> np.ndarray:
    """``d(n)`` for ``0 <= n <= X`` (entry 0 unused)."""
    if X > 10 ** 7:
        raise PreconditionError("divisor sieve is capped at 10**7")
    return _divisor_sieve(int(X))


@dataclass
class BranchSum:
    k: int
    X: int
    T: float

    def bound_ratio(self, gamma: float, base: int) -> float:
        return self.T / (base ** (gamma * self.k) * self.X ** (1 - gamma))


def divisor_weighted_branch_sum(sys: DigitSystem, k: int, X: int,
                                tol: float = 1e-12) -> BranchSum:
    """``T = sum_{0<|xi|<=X} d(|xi|) |mu_hat(b**-k xi)|``."""
    if k < 0 or X < 1:
        raise PreconditionError("need k >= 0 and X >= 1")
    if sys.dim != 1:
        raise PreconditionError("branch sums are one-dimensional")
    dc = divisor_counts(X) if X > 10 ** 5 else np.array(
        [0] + [divisor_count(n) for n in range(1, X + 1)], dtype=np.int64)
    parts = []
    for lo in range(1, X + 1, BLOCK):
        xi = np.arange(lo, min(X, lo + BLOCK - 1) + 1, dtype=np.int64)
        parts.append(math.fsum(dc[xi] * np.abs(hat_scaled(sys, xi, k, tol))))
    return BranchSum(k, X, 2 * math.fsum(parts))
