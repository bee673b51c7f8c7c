import math
from fractions import Fraction

import pytest

from jarnik.fractal import DigitSystem
from jarnik.regions import (RegionUnion, ShiftedRational, build_AQ, build_Aq_single,
                            build_rect, enumerate_rationals_near_set)
from oracles import brute_intervals, cantor_cdf

F = Fraction
CANTOR = DigitSystem(3, ((0, 2),))


def test_AQ_q1():
    assert build_AQ(1, F(1, 10)).components == [(0, F(1, 10)), (F(9, 10), 1)]


def test_AQ_q2_length_from_oracle():
    # q in {2, 3}: brute-force union length is 1/3
    assert build_AQ(2, F(1, 10)).volume() == F(1, 3)


def test_AQ_shifted_excludes_zero():
    reg = build_AQ(2, F(1, 100), theta=F(1, 2))
    assert not reg.contains(0)
    centres = {F(2 * p + 1, 2 * q) for q in (2, 3) for p in range(q)}
    for a, c in reg.components:
        assert (a + c) / 2 in centres


def test_Aq_single_examples():
    assert build_Aq_single(1, F(1, 4)).components == [(0, F(1, 4)), (F(3, 4), 1)]
    assert build_Aq_single(3, F(1, 10)).volume() == F(1, 5)


@pytest.mark.parametrize("q", [1, 2, 5, 17])
@pytest.mark.parametrize("eta", [F(1, 3), F(1, 10), F(7, 1000)])
def test_single_length_identity(q, eta):
    assert build_Aq_single(q, eta).volume() == min(1, 2 * eta)


def test_eta_precondition():
    with pytest.raises(ValueError):
        build_AQ(3, F(1, 2))
    with pytest.raises(ValueError):
        build_Aq_single(3, F(0))


def test_containment_single_in_AQ():
    Q, eta = 7, F(1, 20)
    big = build_AQ(Q, eta, F(1, 7))
    for q in range(Q, 2 * Q):
        assert big.covers(build_Aq_single(q, eta, F(1, 7)))


def test_rect_examples():
    assert build_rect(1, (F(1, 4), F(1, 4))).volume() == F(1, 4)
    assert build_rect(2, (F(1, 8), F(1, 8))).volume() == F(1, 16)


@pytest.mark.parametrize("q", [1, 3, 8])
def test_rect_volume_identity(q):
    etas = (F(1, 5), F(2, 7))
    assert build_rect(q, etas).volume() == math.prod(min(1, 2 * e) for e in etas)


def test_normalization_idempotent():
    reg = build_AQ(5, F(1, 9), F(1, 3), dim=2)
    assert reg.normalize() == reg
    one = build_AQ(9, F(1, 30))
    assert one.normalize().components == one.components


def test_components_sorted_disjoint():
    reg = build_AQ(11, F(1, 7))
    for (a, c), (e, f) in zip(reg.components, reg.components[1:]):
        assert a <= c < e <= f


def test_json_round_trip():
    reg = build_AQ(4, F(1, 9), dim=2)
    assert RegionUnion.from_json(reg.to_json()) == reg


def test_shifted_rational_value():
    sr = ShiftedRational((1,), 4, (F(1, 2),))
    assert sr.value == (F(3, 8),)
    assert ShiftedRational((2,), 4, (0,)).coprime() is False


def test_near_set_full_digits():
    full = DigitSystem.full(5)
    r = F(1, 100)
    got = {(s.p[0], s.q) for s in enumerate_rationals_near_set(full, range(1, 8), r)}
    want = {(p, q) for q in range(1, 8) for p in range(-2, q + 3)
            if -r < F(p, q) < 1 + r}
    assert got == want


def test_near_set_cantor_excludes_half():
    got = {(s.p[0], s.q) for s in enumerate_rationals_near_set(CANTOR, [2], F(1, 100))}
    assert (1, 2) not in got
    assert got == {(0, 2), (2, 2)}


def _near_oracle(q, r):
    # (x - r, x + r) meets K exactly when it carries mass (K has no isolated points)
    out = set()
    for p in range(-1, q + 2):
        x = F(p, q)
        if cantor_cdf(3, (0, 2), x + r) - cantor_cdf(3, (0, 2), x - r) > 0:
            out.add((p, q))
    return out


@pytest.mark.parametrize("radius", [F(1, 100), F(1, 1000)])
def test_near_set_equals_brute_force(radius):
    qs = range(1, 51)
    got = {(s.p[0], s.q) for s in enumerate_rationals_near_set(CANTOR, qs, radius)}
    want = set().union(*(_near_oracle(q, radius) for q in qs))
    assert got == want


@pytest.mark.parametrize("theta", [F(0), F(1, 2), F(1, 7)])
def test_AQ_matches_interval_oracle(theta):
    for Q in (1, 3, 10):
        eta = F(1, 10)
        ivs = brute_intervals(range(Q, 2 * Q), [eta] * Q, theta)
        want = RegionUnion([(max(a, F(0)), min(c, F(1))) for a, c in ivs])
        assert build_AQ(Q, eta, theta) == want
