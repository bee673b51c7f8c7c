from fractions import Fraction

import numpy as np
import pytest

from jarnik.cells import Scale, box_union_mass, float_depth, max_depth_for, merge_ranges, u128
from jarnik.fractal import _mass_2d
from jarnik.sweep import single_q_masses, union_cells, union_cells_farey
from oracles import brute_intervals, cantor_cdf, union_measure_1d

F = Fraction


def test_depth_limits():
    assert float_depth(5) == 17
    assert max_depth_for(5) == 27
    assert 5 ** max_depth_for(5) < 2 ** 63


@pytest.mark.parametrize("base,D", [(3, (0, 2)), (5, (0, 1, 2, 3)), (7, (1, 4, 6))])
def test_cdf_matches_oracle(base, D):
    sc = Scale(base, D, depth=8)
    rng = np.random.default_rng(0)
    for X in rng.integers(0, sc.size + 1, 60):
        X = int(X)
        assert F(sc.cdf(X), sc.total) == cantor_cdf(base, D, F(X, sc.size))


def test_vector_cdf_matches_scalar():
    sc = Scale(5, (0, 1, 2, 3), depth=20)
    X = np.random.default_rng(1).integers(0, sc.size, 500)
    assert [int(v) for v in sc.cdfs(X)] == [sc.cdf(int(v)) for v in X]


def test_cells_match_scalar():
    sc = Scale(5, (0, 1, 2, 3), depth=17)
    rng = np.random.default_rng(2)
    den = rng.integers(1, 10 ** 9, 300)
    num = rng.integers(-5, 10 ** 9, 300) % (den + 3)
    X, E = sc.cells(num, den)
    for x, e, n, d in zip(X, E, num, den):
        assert (int(x), bool(e)) == sc.cell(int(n), int(d))


def test_merge_ranges():
    s = np.array([5, 0, 3, 20], dtype=np.int64)
    e = np.array([9, 4, 5, 21], dtype=np.int64)
    ms, me = merge_ranges(s, e)
    assert list(ms) == [0, 20] and list(me) == [9, 21]


def _bracket_ok(res, true):
    return F(res.lo, res.total) <= true <= F(res.hi, res.total)


@pytest.mark.parametrize("theta", [F(0), F(1, 2), F(1, 7)])
def test_union_cells_bracket_oracle(theta):
    base, D = 3, (0, 2)
    sc = Scale(base, D, depth=18)
    Q = 9
    etas = [F(1, 13)] * Q
    res = union_cells(sc, range(Q, 2 * Q), etas, theta)
    true = union_measure_1d(base, D, brute_intervals(range(Q, 2 * Q), etas, theta))
    assert _bracket_ok(res, true)
    assert F(res.hi - res.lo, res.total) < F(1, 10 ** 4)


def test_union_cells_window_and_full_set():
    sc = Scale(5, range(5), depth=17)
    Q = 20
    etas = [F(1, 40)] * Q
    res = union_cells(sc, range(Q, 2 * Q), etas, 0)
    ivs = brute_intervals(range(Q, 2 * Q), etas, 0)
    out = []
    for a, c in sorted(ivs):
        a, c = max(a, F(0)), min(c, F(1))
        if out and a <= out[-1][1]:
            out[-1][1] = max(out[-1][1], c)
        else:
            out.append([a, c])
    true = sum(c - a for a, c in out)
    assert _bracket_ok(res, true)


def test_union_counts_levels_monotone():
    sc = Scale(5, (0, 1, 2, 3), depth=17)
    res = union_cells(sc, range(64, 128), [F(1, 2000)] * 64, 0, levels=(4, 6))
    for n in (4, 6):
        lo, hi = res.counts[n]
        assert 0 <= lo <= hi <= 4 ** n


def test_farey_agrees_with_generic():
    sc = Scale(5, (0, 1, 2, 3), depth=17)
    qs = range(30, 60)
    etas = [F(float(q) ** -1.2).limit_denominator(1 << 30) for q in qs]
    a = union_cells(sc, qs, etas, 0, levels=(5,))
    b = union_cells_farey(sc, 30, 59, etas, levels=(5,))
    assert b.hi == a.hi
    assert b.counts[5][1] == a.counts[5][1]
    assert b.lo <= a.lo <= a.hi


def test_single_q_masses_sum_to_single_unions():
    sc = Scale(3, (0, 2), depth=18)
    qs = [3, 5, 8]
    lo, hi = single_q_masses(sc, qs, [F(1, 9)] * 3, 0)
    for q, l, h in zip(qs, lo, hi):
        true = union_measure_1d(3, (0, 2), brute_intervals([q], [F(1, 9)], 0))
        assert F(int(l), sc.total) <= true <= F(int(h), sc.total)


def test_box_union_mass_matches_sweep():
    sx = Scale(5, (0, 1, 2, 3), depth=6)
    sy = Scale(5, range(5), depth=6)
    rng = np.random.default_rng(4)
    for _ in range(20):
        n = int(rng.integers(1, 40))
        xs = rng.integers(0, sx.size, n)
        xe = xs + rng.integers(0, 2000, n)
        ys = rng.integers(0, sy.size, n)
        ye = ys + rng.integers(0, 2000, n)
        xe = np.minimum(xe, sx.size)
        ye = np.minimum(ye, sy.size)
        got = u128(box_union_mass(xs.astype(np.int64), xe.astype(np.int64),
                                  ys.astype(np.int64), ye.astype(np.int64),
                                  *sx.kernel_args(), *sy.kernel_args()))
        want = _mass_2d(sx, sy, [tuple(int(v) for v in t) for t in zip(xs, xe, ys, ye)])
        assert got == want
