import math
from fractions import Fraction

import numpy as np
import pytest

from jarnik.fractal import (CylinderWord, DigitSystem, MeasureValue, cylinder_box,
                            distance_to_set, hausdorff_dim, measure_of_region,
                            sample_measure, sample_points_exact)
from oracles import cantor_cdf, union_measure_1d

CANTOR = DigitSystem(3, ((0, 2),))
FIVE4 = DigitSystem(5, ((0, 1, 2, 3),))
FULL5 = DigitSystem.full(5)


def test_hausdorff_dim_cantor():
    assert hausdorff_dim(CANTOR) == pytest.approx(0.63093, abs=1e-5)


def test_hausdorff_dim_full_is_dimension():
    assert hausdorff_dim(FULL5) == 1
    assert hausdorff_dim(DigitSystem.full(5, 2)) == 2


def test_hausdorff_dim_five_four():
    assert hausdorff_dim(FIVE4) == pytest.approx(math.log(4) / math.log(5), rel=1e-15)
    assert hausdorff_dim(FIVE4) == pytest.approx(0.86135, abs=1e-5)


def test_digit_system_rejects_bad_digits():
    with pytest.raises(ValueError):
        DigitSystem(3, ((0, 3),))
    with pytest.raises(ValueError):
        DigitSystem(2, ((0, 1),))


def test_json_round_trip():
    s = DigitSystem(5, ((0, 1, 2, 3), (0, 1, 2, 3, 4)))
    assert DigitSystem.from_json(s.to_json()) == s


def test_cylinder_box_examples():
    assert cylinder_box(CANTOR, ()) == ((0, 1),)
    assert cylinder_box(CANTOR, (2,)) == ((Fraction(2, 3), 1),)
    assert cylinder_box(CANTOR, (0, 2)) == ((Fraction(2, 9), Fraction(3, 9)),)


def test_cylinder_box_rejects_inadmissible_digit():
    with pytest.raises(ValueError):
        cylinder_box(CANTOR, (1,))


def test_cylinder_word_prefix():
    assert CylinderWord((0,)).is_prefix_of(CylinderWord((0, 2)))
    assert not CylinderWord((2,)).is_prefix_of(CylinderWord((0, 2)))


def test_measure_of_unit_interval():
    mv = measure_of_region(CANTOR, [(0, 1)])
    assert mv.value == 1 and mv.error_bound == 0


def test_measure_examples_exact():
    assert measure_of_region(CANTOR, [(0, Fraction(1, 3))]).value == Fraction(1, 2)
    mv = measure_of_region(CANTOR, [(0, Fraction(1, 2))])
    assert mv.value == Fraction(1, 2) and mv.error_bound == 0


def test_measure_brackets_oracle():
    # endpoints that are not b-adic leave a bracket containing the true value
    ivs = [(Fraction(1, 7), Fraction(2, 5)), (Fraction(5, 11), Fraction(13, 17))]
    mv = measure_of_region(CANTOR, ivs, max_depth=20)
    true = union_measure_1d(3, (0, 2), ivs)
    assert mv.lower <= true <= mv.upper
    assert mv.error_bound <= Fraction(2, 2 ** 20)


def test_measure_two_dimensional_product():
    s = DigitSystem(3, ((0, 2), (0, 1, 2)))
    box = ((0, Fraction(1, 3)), (Fraction(1, 4), Fraction(3, 4)))
    mv = measure_of_region(s, [box], max_depth=12)
    assert mv.lower <= Fraction(1, 2) * Fraction(1, 2) <= mv.upper


def test_measure_value_bounds_clip():
    mv = MeasureValue(Fraction(1, 10), Fraction(1, 5))
    assert mv.lower == 0 and mv.upper == Fraction(3, 10)


def test_distance_examples():
    assert distance_to_set(CANTOR, Fraction(1, 3)) == (0, 0)
    # brute force over depth-6 cylinders gives 1/6
    assert distance_to_set(CANTOR, Fraction(1, 2)) == (Fraction(1, 6), Fraction(1, 6))


def test_distance_zero_on_samples():
    for x in sample_points_exact(CANTOR, 20, 12, seed=3):
        assert distance_to_set(CANTOR, x) == (0, 0)


def test_distance_matches_cdf_gap():
    # a point in a gap: the CDF is flat between x - d and x + d
    x = Fraction(4, 9) + Fraction(1, 100)
    lo, up = distance_to_set(CANTOR, x)
    assert lo == up > 0
    assert cantor_cdf(3, (0, 2), x - lo) == cantor_cdf(3, (0, 2), x + lo)


def test_sample_mean_full_digits():
    n = 100_000
    pts = sample_measure(FULL5, n, 20, seed=1)[:, 0]
    se = math.sqrt(1 / 12 / n)
    assert abs(pts.mean() - 0.5) < 4 * se


def test_sampling_deterministic():
    a = sample_measure(FIVE4, 3000, 10, seed=9)
    b = sample_measure(FIVE4, 3000, 10, seed=9)
    assert np.array_equal(a, b)
    assert sample_points_exact(FIVE4, 5, 10, 9) == sample_points_exact(FIVE4, 5, 10, 9)


def test_samples_lie_in_cantor_cylinders():
    for (x,) in sample_points_exact(CANTOR, 50, 10, seed=0):
        v = x * 3 ** 10
        assert v.denominator == 1
        digits = np.base_repr(int(v), 3).zfill(10)
        assert "1" not in digits
