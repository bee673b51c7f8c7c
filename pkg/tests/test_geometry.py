import math
from fractions import Fraction
from itertools import combinations

import numpy as np
import pytest

from jarnik.errors import PreconditionError
from jarnik.fractal import DigitSystem
from jarnik.geometry import (Rect, cover_factor, decay_check, five_r_cover,
                             random_admissible_box, random_rect_family, rational_points,
                             rect_from_scale, simplex_bound, simplex_check, simplex_trials)

F = Fraction
CANTOR = DigitSystem(3, ((0, 2),))


def _brute_points(d, Q, box):
    pts = set()
    for q in range(1, Q + 1):
        lo = [math.floor(a * q) - 1 for a, _ in box]
        hi = [math.ceil(b * q) + 1 for _, b in box]
        grids = np.stack(np.meshgrid(*[np.arange(l, h + 1) for l, h in zip(lo, hi)]),
                         -1).reshape(-1, d)
        for p in grids:
            x = tuple(F(int(v), q) for v in p)
            if all(a <= xj <= b for xj, (a, b) in zip(x, box)):
                pts.add(x)
    return pts


def _det(rows):
    n = len(rows)
    m = [list(r) for r in rows]
    det = F(1)
    for c in range(n):
        piv = next((r for r in range(c, n) if m[r][c]), None)
        if piv is None:
            return F(0)
        if piv != c:
            m[c], m[piv] = m[piv], m[c]
            det = -det
        det *= m[c][c]
        for r in range(c + 1, n):
            f = m[r][c] / m[c][c]
            m[r] = [a - f * b for a, b in zip(m[r], m[c])]
    return det


def test_one_dimensional_example():
    res = simplex_check(1, 10, (F(3, 10), F(309, 1000)))
    assert res.coplanar and res.admissible
    assert res.points.values() == [(F(3, 10),)]


def test_single_point_box_is_coplanar():
    box = ((F(1, 3) - F(1, 10 ** 6), F(1, 3) + F(1, 10 ** 6)), (F(1, 2), F(1, 2) + F(1, 10 ** 6)))
    res = simplex_check(2, 12, box)
    assert res.coplanar and len(res.points.points) == 1


def test_oversized_box_refused_or_demonstrated():
    with pytest.raises(PreconditionError):
        simplex_check(2, 1, ((0, 1), (0, 1)))
    res = simplex_check(2, 1, ((0, 1), (0, 1)), demonstration=True)
    assert not res.coplanar and not res.admissible
    rows = [list(p) + [F(1)] for p in res.witness]
    assert _det(rows) != 0


@pytest.mark.parametrize("d", [1, 2])
def test_rational_points_match_brute_force(d):
    rng = np.random.default_rng(d)
    for _ in range(20):
        box = random_admissible_box(d, 6, rng)
        box = tuple((a - F(1, 50), b + F(1, 50)) for a, b in box)
        got = set(rational_points(d, 6, box).values())
        assert got == _brute_points(d, 6, box)


def test_boxes_are_admissible():
    rng = np.random.default_rng(5)
    for d in (1, 2):
        for _ in range(50):
            box = random_admissible_box(d, 15, rng)
            vol = math.prod((b - a for a, b in box), start=F(1))
            assert 0 < vol <= simplex_bound(d, 15)


def test_trials_coplanar_by_determinants():
    st = simplex_trials(2, 12, 300, seed=11)
    assert st.violations == 0
    rng = np.random.default_rng(3)
    for _ in range(100):
        box = random_admissible_box(2, 12, rng)
        pts = rational_points(2, 12, box).values()
        for tri in combinations(pts[:8], 3):
            assert _det([list(p) + [F(1)] for p in tri]) == 0


def test_decay_full_set_bounded_by_two():
    rep = decay_check(DigitSystem.full(5), 400, seed=1)
    assert rep.C_emp <= 2 + 1e-9
    assert rep.exponent == 1


def test_decay_cantor_finite():
    rep = decay_check(CANTOR, 400, seed=2)
    assert math.isfinite(rep.C_emp) and rep.C_emp < 10
    assert rep.exponent == pytest.approx(CANTOR.hausdorff_dim())


def test_decay_plane_requires_delta_above_one():
    with pytest.raises(PreconditionError):
        decay_check(DigitSystem(5, ((0, 1), (0, 1))), 10)
    rep = decay_check(DigitSystem(5, ((0, 1, 2, 3), (0, 1, 2, 3, 4))), 20, seed=3)
    assert math.isfinite(rep.C_emp)
    assert all(s.eps < s.r for s in rep.samples)


def test_cover_single_rectangle():
    R = rect_from_scale((F(1, 2), F(1, 2)), 0.01, (1.6, 1.4))
    res = five_r_cover([R], (1.6, 1.4))
    assert res.selected == [0] and res.disjoint and res.covered


def test_cover_disjoint_family_kept_whole():
    rects = [rect_from_scale((F(k, 10), F(1, 2)), 0.01, (1.6, 1.4)) for k in range(1, 10)]
    res = five_r_cover(rects, (1.6, 1.4))
    assert res.selected == list(range(9)) and res.covered


def test_cover_concentric_keeps_largest():
    rects = [rect_from_scale((F(1, 2), F(1, 3)), r, (1.6, 1.4)) for r in (0.01, 0.05, 0.02)]
    res = five_r_cover(rects, (1.6, 1.4))
    assert res.selected == [1] and res.covered


def test_cover_rejects_mixed_exponents():
    a = rect_from_scale((0, 0), 0.01, (1.6, 1.4))
    b = rect_from_scale((F(1, 2), 0), 0.01, (1.5, 1.5))
    with pytest.raises(PreconditionError):
        five_r_cover([a, b], (1.6, 1.4))


def test_cover_factor():
    assert cover_factor((1, 1)) == 5
    assert cover_factor((1.6, 1.4)) == pytest.approx(5 ** (1.6 / 1.4))


def _covered_oracle(rects, selected, t):
    big = [rects[i] for i in selected]
    for R in rects:
        xs = {R.center[0] - R.half[0], R.center[0] + R.half[0]}
        ys = {R.center[1] - R.half[1], R.center[1] + R.half[1]}
        for S in big:
            for v in (S.center[0] - t * S.half[0], S.center[0] + t * S.half[0]):
                if R.center[0] - R.half[0] < v < R.center[0] + R.half[0]:
                    xs.add(v)
            for v in (S.center[1] - t * S.half[1], S.center[1] + t * S.half[1]):
                if R.center[1] - R.half[1] < v < R.center[1] + R.half[1]:
                    ys.add(v)
        xs, ys = sorted(xs), sorted(ys)
        for x0, x1 in zip(xs, xs[1:]):
            for y0, y1 in zip(ys, ys[1:]):
                mx, my = (x0 + x1) / 2, (y0 + y1) / 2
                if not any(abs(mx - S.center[0]) <= t * S.half[0]
                           and abs(my - S.center[1]) <= t * S.half[1] for S in big):
                    return False
    return True


def test_random_families_against_oracle():
    u = (1.6, 1.4)
    rng = np.random.default_rng(8)
    t = F(math.floor(cover_factor(u) * 10 ** 9) - 1, 10 ** 9)
    for f in range(12):
        rects = random_rect_family(25, u, rng, centers=3 if f % 2 else 0)
        res = five_r_cover(rects, u)
        sel = [rects[i] for i in res.selected]
        for A, B in combinations(sel, 2):
            assert any(abs(a - b) > h + k for a, b, h, k in
                       zip(A.center, B.center, A.half, B.half))
        assert res.disjoint and res.covered
        assert _covered_oracle(rects, res.selected, t)


def test_greedy_order_largest_first():
    u = (1.0, 1.0)
    small = rect_from_scale((F(1, 2), F(1, 2)), 0.01, u)
    big = rect_from_scale((F(1, 2) + F(1, 100), F(1, 2)), 0.02, u)
    res = five_r_cover([small, big], u)
    assert res.selected == [1]
    assert Rect((F(0),), (F(1),), 0.5).scale == 0.5
