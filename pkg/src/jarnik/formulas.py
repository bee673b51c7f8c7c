"""Closed-form dimension bounds, thresholds and admissible parameter regions.

Each evaluator checks the hypotheses of the statement it encodes and raises
:class:`PreconditionError` (carrying the list of named checks) when one fails.
Comparisons are exact when the inputs are ints or Fractions.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction

from .errors import PreconditionError

LOG23 = math.log(2) / math.log(3)


def _require(checks):
    """``checks`` is a list of (name, ok); raise if any fails."""
    failed = [name for name, ok in checks if not ok]
    if failed:
        raise PreconditionError("precondition failed: " + ", ".join(failed),
                                [{"name": n, "ok": bool(ok)} for n, ok in checks])
    return [{"name": n, "ok": True} for n, _ in checks]


def _dim_checks(d, delta):
    return [("d >= 1", int(d) == d and d >= 1), ("0 < delta <= d", 0 < delta <= d)]


def _upper_checks(d, delta, tau):
    return _dim_checks(d, delta) + [("tau >= 1/d", tau * d >= 1)]


def _general_checks(d, delta, tau, beta):
    return _upper_checks(d, delta, tau) + [("0 < beta < 1", 0 < beta < 1)]


def _special_checks(d, delta, tau, beta):
    return _general_checks(d, delta, tau, beta) + [
        ("delta > d - 1", delta > d - 1),
        ("tau < (delta+2-d)/(2d-delta-1)", tau < special_tau_bound(d, delta)),
    ]


def upper_dim(d: int, delta, tau):
    """``delta + (d+1)/(1+tau) - d``; equals ``delta`` at ``tau = 1/d``.

    Exact (a Fraction) when ``delta`` and ``tau`` are ints or Fractions.

    >>> upper_dim(1, 1, 3)
    Fraction(1, 2)
    """
    _require(_upper_checks(d, delta, tau))
    if isinstance(delta, (int, Fraction)) and isinstance(tau, (int, Fraction)):
        return Fraction(delta) + Fraction(d + 1) / (1 + Fraction(tau)) - d
    return float(delta) + (d + 1) / (1 + float(tau)) - d


def general_branch(d: int, delta, tau, beta) -> float:
    """First argument of the min in the general lower bound."""
    u = upper_dim(d, delta, tau)
    return float(delta) - (float(tau) * d - 1) * u / (float(beta) * float(delta))


def lower_dim_general(d: int, delta, tau, beta) -> float:
    _require(_general_checks(d, delta, tau, beta))
    return min(general_branch(d, delta, tau, beta), upper_dim(d, delta, tau))


def special_tau_bound(d: int, delta) -> float:
    """``(delta + 2 - d) / (2d - delta - 1)``; infinite when the denominator vanishes."""
    den = 2 * d - delta - 1
    return math.inf if den == 0 else (delta + 2 - d) / den


def special_branch(d: int, delta, tau, beta) -> float:
    """First argument of the min in the bound for ``delta > d-1``, ``theta = 0``."""
    u = upper_dim(d, delta, tau)
    return (float(delta) - (float(tau) - 1 / d) * (2 * d - float(delta) - 1) * u
            / (float(beta) * float(delta)))


def lower_dim_special(d: int, delta, tau, beta) -> float:
    _require(_special_checks(d, delta, tau, beta))
    value = min(special_branch(d, delta, tau, beta), upper_dim(d, delta, tau))
    # the special bound subtracts less because 2d - delta - 1 < d
    assert value >= lower_dim_general(d, delta, tau, beta) - 1e-12
    return value


def min_attained_conditions(d: int, beta) -> tuple:
    """``(delta threshold, beta threshold, beta clears it)`` for the min to be the upper bound."""
    _require(_d_checks(d))
    delta_t = 2 * d - 1 - d * d * beta / (1 + d)
    beta_t = 1 - Fraction(1, d * d)
    ok = beta > beta_t
    return delta_t, beta_t, ok


def _d_checks(d):
    return [("d >= 1", int(d) == d and d >= 1)]


def _bd_checks(tau):
    return [("tau >= 1", tau >= 1)]


def _kappa_checks(delta=LOG23):
    return [("0 < delta <= 1", 0 < delta <= 1)]


def bd_conjecture_value(tau) -> float:
    """Conjectured dimension for the middle-third Cantor set."""
    _require(_bd_checks(tau))
    t = float(tau)
    return max(LOG23 + 2 / (1 + t) - 1, LOG23 / (1 + t))


def middle_third_kappa_requirement(delta: float = LOG23) -> float:
    """Smallest kappa making the self-similar range reach ``delta > 1 - beta/2``."""
    _require(_kappa_checks(delta))
    return 2 * (1 - delta) / delta


@dataclass(frozen=True)
class Interval:
    lo: float
    hi: float
    lo_closed: bool = False
    hi_closed: bool = False

    @property
    def empty(self) -> bool:
        if self.lo < self.hi:
            return False
        return not (self.lo == self.hi and self.lo_closed and self.hi_closed)

    def contains(self, x) -> bool:
        above = x >= self.lo if self.lo_closed else x > self.lo
        below = x <= self.hi if self.hi_closed else x < self.hi
        return above and below

    def to_dict(self):
        return {"lo": _jsonable(self.lo), "hi": _jsonable(self.hi),
                "lo_closed": self.lo_closed, "hi_closed": self.hi_closed,
                "empty": self.empty}


def _jsonable(x):
    if isinstance(x, Fraction):
        return float(x)
    if isinstance(x, float) and math.isinf(x):
        return "inf" if x > 0 else "-inf"
    return x


@dataclass
class Region:
    kind: str
    intervals: dict = field(default_factory=dict)

    @property
    def empty(self) -> bool:
        return any(iv.empty for iv in self.intervals.values())

    def to_dict(self):
        return {"kind": self.kind, "empty": self.empty,
                "intervals": {k: v.to_dict() for k, v in self.intervals.items()}}


def admissible_region(kind: str, **p) -> Region:
    """Admissible ranges of ``alpha`` and ``beta``.

    The beta range depends on ``alpha``; it is evaluated at the given alpha,
    or at the lower end of the alpha range when none is given.
    """
    if kind == "self-similar":
        d, kappa = int(p.get("d", 1)), p["kappa"]
        _require([("d >= 1", d >= 1), ("kappa > 0", kappa > 0)])
        alpha = p.get("alpha", Fraction(1, d))
        _require([("alpha >= 1/d", alpha * d >= 1)])
        top = 1 + d * alpha * (d + 1) * kappa / (d + 1 + d * kappa) - d * alpha
        return Region(kind, {"alpha": Interval(1 / d, math.inf),
                             "beta": Interval(0, top)})
    if kind == "missing-digits":
        g = p["gamma"]
        _require([("1/2 < gamma < 1", Fraction(1, 2) < g < 1)])
        alpha = p.get("alpha", 1)
        a_iv = Interval(1, g / (1 - g))
        _require([("alpha >= 1", alpha >= 1)])
        return Region(kind, {"alpha": a_iv,
                             "beta": Interval(0, (1 - (1 + alpha) * (1 - g)) / g)})
    if kind == "missing-digits-measure":
        g, delta = p["gamma"], p["delta"]
        _require([("1/2 < gamma < 1", Fraction(1, 2) < g < 1),
                  ("0 < delta <= 1", 0 < delta <= 1)])
        alpha = p.get("alpha", 1)
        _require([("alpha >= 1", alpha >= 1)])
        return Region(kind, {
            "alpha": Interval(1, (2 * delta * g - g) / (1 - g)),
            "beta": Interval(2 * (1 - delta), (1 - (1 + alpha) * (1 - g)) / g, True)})
    if kind == "product":
        d, g = int(p.get("d", 2)), p["gamma"]
        _require([("d >= 1", d >= 1), ("d/(d+1) < gamma < 1", Fraction(d, d + 1) < g < 1)])
        alpha = p.get("alpha", 1)
        _require([("alpha >= 1", alpha >= 1)])
        return Region(kind, {
            "alpha": Interval(1, (1 - d + d * g) / (1 - g), True),
            "beta": Interval(0, (1 - d + d * g + alpha * (g - 1)) / (d * g))})
    if kind == "consistency":
        d, delta, beta = int(p.get("d", 1)), p["delta"], p["beta"]
        _require(_dim_checks(d, delta) + [("0 < beta < 1", 0 < beta < 1)])
        top = math.inf if delta == d else (1 + delta - beta * delta) / (d - delta)
        return Region(kind, {"alpha": Interval(Fraction(1, d), top, False, True)})
    raise PreconditionError(f"unknown region kind {kind!r}")


# ---------------------------------------------------------------------------
# uniform entry point used by the command line


def _fmt_value(v):
    if isinstance(v, Fraction):
        return float(v)
    return v


FORMULAS = {
    "upper-dim": (upper_dim, _upper_checks, ("d", "delta", "tau")),
    "lower-dim-general": (lower_dim_general, _general_checks, ("d", "delta", "tau", "beta")),
    "lower-dim-special": (lower_dim_special, _special_checks, ("d", "delta", "tau", "beta")),
    "min-attained": (min_attained_conditions, lambda d, beta: _d_checks(d), ("d", "beta")),
    "bd-conjecture": (bd_conjecture_value, _bd_checks, ("tau",)),
    "kappa-requirement": (middle_third_kappa_requirement, _kappa_checks, ()),
    "jarnik": (lambda tau: upper_dim(1, 1, tau),
               lambda tau: _upper_checks(1, 1, tau), ("tau",)),
}


def evaluate(name: str, inputs: dict) -> dict:
    """Evaluate a named formula; the result records every precondition checked."""
    if name == "admissible-region":
        kind = inputs.get("kind")
        params = {k: v for k, v in inputs.items() if k != "kind"}
        try:
            reg = admissible_region(kind, **params)
        except PreconditionError as exc:
            return {"name": name, "inputs": _echo(inputs), "value": None,
                    "preconditions": exc.checks, "error": str(exc)}
        except KeyError as exc:
            raise PreconditionError(f"missing parameter {exc.args[0]}") from None
        return {"name": name, "inputs": _echo(inputs), "value": reg.to_dict(),
                "preconditions": []}
    if name not in FORMULAS:
        raise PreconditionError(f"unknown formula {name!r}; known: "
                                + ", ".join(sorted(FORMULAS) + ["admissible-region"]))
    fn, checks, args = FORMULAS[name]
    missing = [a for a in args if a not in inputs]
    if missing:
        raise PreconditionError("missing parameter(s): " + ", ".join(missing))
    kwargs = {a: inputs[a] for a in args}
    if name == "kappa-requirement" and "delta" in inputs:
        kwargs["delta"] = inputs["delta"]
    report = [{"name": n, "ok": bool(ok)} for n, ok in checks(**kwargs)]
    try:
        value = fn(**kwargs)
    except PreconditionError as exc:
        return {"name": name, "inputs": _echo(inputs), "value": None,
                "preconditions": report, "error": str(exc)}
    if isinstance(value, tuple):
        value = [_fmt_value(v) for v in value]
    else:
        value = _fmt_value(value)
    return {"name": name, "inputs": _echo(inputs), "value": value,
            "preconditions": report}


def _echo(inputs):
    return {k: (str(v) if isinstance(v, Fraction) else v) for k, v in inputs.items()}
