import math
from fractions import Fraction

import pytest

from jarnik.errors import PreconditionError
from jarnik.formulas import (LOG23, admissible_region, bd_conjecture_value, evaluate,
                             general_branch, lower_dim_general, lower_dim_special,
                             middle_third_kappa_requirement, min_attained_conditions,
                             special_branch, special_tau_bound, upper_dim)

F = Fraction
D4 = 0.8614  # rounded log 4 / log 5 as used in the worked examples


@pytest.mark.parametrize("tau", [1, 2, 3])
def test_classical_bound_exact(tau):
    assert upper_dim(1, 1, tau) == F(2, 1 + tau)


def test_upper_dim_examples():
    assert upper_dim(2, F(3, 2), F(1, 2)) == F(3, 2)
    assert upper_dim(1, 1, 3) == F(1, 2)
    assert upper_dim(1, LOG23, 3) == pytest.approx(0.13093, abs=1e-5)


def test_upper_dim_precondition():
    with pytest.raises(PreconditionError) as exc:
        upper_dim(1, 1, F(1, 2))
    assert {"name": "tau >= 1/d", "ok": False} in exc.value.checks


def test_general_bound_example():
    # 0.8614 - 0.2 * u / (0.3 * 0.8614) with u = 0.8614 + 2/2.2 - 1
    u = D4 + 2 / 2.2 - 1
    want = D4 - 0.2 * u / (0.3 * D4)
    assert general_branch(1, D4, 1.2, 0.3) == pytest.approx(want, rel=1e-14)
    assert general_branch(1, D4, 1.2, 0.3) == pytest.approx(0.26509, abs=1e-5)
    assert lower_dim_general(1, D4, 1.2, 0.3) == pytest.approx(0.26509, abs=1e-5)


def test_special_bound_example():
    u = D4 + 2 / 2.2 - 1
    want = D4 - 0.2 * (1 - D4) * u / (0.3 * D4)
    assert special_branch(1, D4, 1.2, 0.3) == pytest.approx(want, rel=1e-14)
    assert special_branch(1, D4, 1.2, 0.3) == pytest.approx(0.77875, abs=1e-5)
    assert lower_dim_special(1, D4, 1.2, 0.3) == pytest.approx(0.7705, abs=1e-4)


def test_branches_meet_delta_at_threshold():
    for fn in (general_branch, special_branch):
        assert fn(1, D4, 1 + 1e-12, 0.3) == pytest.approx(D4, abs=1e-9)
    assert lower_dim_general(1, D4, 1 + 1e-12, 0.3) == pytest.approx(D4, abs=1e-9)


def test_special_preconditions():
    assert special_tau_bound(1, 1) == math.inf
    with pytest.raises(PreconditionError):
        lower_dim_special(2, F(1, 2), 1, F(1, 2))


def test_min_attained_examples():
    assert min_attained_conditions(1, F(1, 10))[1] == 0
    dt, bt, ok = min_attained_conditions(2, F(4, 5))
    assert dt == F(29, 15) and bt == F(3, 4) and ok
    assert min_attained_conditions(2, F(1, 2))[2] is False


def test_bd_conjecture_examples():
    assert bd_conjecture_value(1) == pytest.approx(LOG23, abs=1e-12)
    assert bd_conjecture_value(3) == pytest.approx(0.15773, abs=1e-5)
    assert bd_conjecture_value(100) == pytest.approx(LOG23 / 101)


def test_kappa_requirement():
    assert middle_third_kappa_requirement() == pytest.approx(1.1699, abs=1e-4)
    assert middle_third_kappa_requirement(1) == 0
    assert middle_third_kappa_requirement(F(2, 3)) == 1


def test_self_similar_beta_limit():
    kappa = F(1, 2)
    reg = admissible_region("self-similar", kappa=kappa, alpha=1 + F(1, 10 ** 12))
    assert float(reg.intervals["beta"].hi) == pytest.approx(2 * kappa / (2 + kappa), abs=1e-9)


def test_missing_digits_region():
    reg = admissible_region("missing-digits", gamma=F(3, 4), alpha=2)
    assert reg.intervals["alpha"].hi == 3
    assert reg.intervals["beta"].hi == F(1, 3)


def test_product_region():
    reg = admissible_region("product", d=2, gamma=F(9, 10), alpha=1)
    assert reg.intervals["alpha"].hi == 8 and reg.intervals["alpha"].lo_closed
    assert reg.intervals["beta"].hi == F(7, 18)


def test_region_unknown_kind():
    with pytest.raises(PreconditionError):
        admissible_region("spiral")


def test_evaluate_records_checks():
    res = evaluate("upper-dim", {"d": 1, "delta": 0.63093, "tau": 3})
    assert res["value"] == pytest.approx(0.13093, abs=1e-12)
    assert all(c["ok"] for c in res["preconditions"])
    bad = evaluate("upper-dim", {"d": 1, "delta": 1, "tau": F(1, 3)})
    assert bad["value"] is None and "error" in bad


def test_evaluate_unknown_and_missing():
    with pytest.raises(PreconditionError):
        evaluate("no-such", {})
    with pytest.raises(PreconditionError):
        evaluate("upper-dim", {"d": 1})
