"""Closed-form checks of the model assumptions and drift-domination conditions.

All comparisons are strict and carry no slack: ``satisfied`` is exactly
``margin > 0``. A failed check means the parameters are outside the proven
regime, not that the system diverges (the conditions are sufficient only).
"""
from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidArgument
from .levy import expected_abs_jump_per_unit_time, validate_law

OUTSIDE = "outside proven regime"


@dataclass
class ConditionReport:
    satisfied: bool
    lhs: float
    threshold: float
    margin: float
    notes: list = field(default_factory=list)

    @classmethod
    def compare(cls, lhs, threshold, name):
        lhs, threshold = float(lhs), float(threshold)
        margin = threshold - lhs
        ok = bool(margin > 0)
        note = f"{name}: {lhs!r} < {threshold!r}" if ok else f"{name}: {OUTSIDE}"
        return cls(ok, lhs, threshold, margin, [note])

    def to_dict(self):
        return {"satisfied": self.satisfied, "lhs": self.lhs, "threshold": self.threshold,
                "margin": self.margin, "notes": list(self.notes)}


def _deltas(params):
    return np.asarray(params.deltas, dtype=float)


def check_unregulated(params, law):
    """Jump activity against ``(1/N) min_k (delta_k - delta_{k+1})``."""
    d = _deltas(params)
    n = d.size
    if n < 2:
        raise InvalidArgument("the unregulated condition needs N >= 2")
    threshold = np.min(d[:-1] - d[1:]) / n
    return ConditionReport.compare(expected_abs_jump_per_unit_time(law), threshold,
                                   "unregulated gap stability")


def check_regulated(params, law):
    """As :func:`check_unregulated` with ``-delta_1`` joining the minimum."""
    if getattr(params, "barrier", None) is None:
        raise InvalidArgument("the regulated condition needs a barrier")
    d = _deltas(params)
    n = d.size
    threshold = min(-d[0], *(d[:-1] - d[1:])) / n if n > 1 else -d[0]
    return ConditionReport.compare(expected_abs_jump_per_unit_time(law), threshold,
                                   "regulated gap stability")


def check_infinite_regulated(law, delta1):
    return ConditionReport.compare(expected_abs_jump_per_unit_time(law), -float(delta1),
                                   "infinite regulated tightness")


@dataclass
class InitialReport:
    in_W: bool
    linear_growth: bool
    prefix_nondecreasing: bool
    gamma1: float
    gamma2_effective: float
    notes: list = field(default_factory=list)

    def to_dict(self):
        return {"in_W": self.in_W, "linear_growth": self.linear_growth,
                "prefix_nondecreasing": self.prefix_nondecreasing,
                "gamma1": self.gamma1, "gamma2_effective": self.gamma2_effective,
                "notes": list(self.notes)}


def check_infinite_initial(initial=None, *, prefix=(), gamma1=None, gamma2=0.0):
    """Membership of a prefix-plus-linear-tail start in ``W``.

    ``initial`` may be any object with ``explicit_prefix``, ``gamma1`` and
    ``gamma2`` attributes; otherwise the keywords are used. Positions beyond
    the prefix are ``max(prefix[-1], gamma1 * i + gamma2)`` (1-based ``i``),
    so the whole sequence is nondecreasing and ``liminf X_i / i = gamma1``.
    The linear lower bound then holds with ``gamma2`` lowered to cover the
    prefix.
    """
    if initial is not None:
        prefix, gamma1, gamma2 = initial.explicit_prefix, initial.gamma1, initial.gamma2
    if gamma1 is None:
        raise InvalidArgument("gamma1 is required")
    prefix = np.asarray(prefix, dtype=float)
    if np.any(np.diff(prefix) < 0):
        raise InvalidArgument("explicit prefix must be nondecreasing")
    g1, g2 = float(gamma1), float(gamma2)
    idx = np.arange(1, prefix.size + 1)
    g2_eff = min(g2, float(np.min(prefix - g1 * idx))) if prefix.size else g2
    ok = g1 > 0
    notes = [f"liminf X_i / i = {g1!r}"]
    if not ok:
        notes.append(f"gamma1 <= 0: linear growth fails, {OUTSIDE}")
    return InitialReport(ok, ok, True, g1, g2_eff, notes)


@dataclass
class AssumptionReport:
    valid: bool
    problems: list

    def to_dict(self):
        return {"valid": self.valid, "problems": list(self.problems)}


def check_assumptions(params, law, infinite=False, M=None, regulated=None):
    """Positive volatilities, a valid mean-zero law and, for infinite systems,
    tail-constant coefficients. Never raises."""
    problems = []
    d = _deltas(params)
    s = np.asarray(params.sigmas, dtype=float)
    if regulated is None:
        regulated = getattr(params, "barrier", None) is not None
    if np.any(~(s > 0)):
        problems.append("volatilities must be positive")
    problems += validate_law(law).problems
    if infinite:
        if np.ptp(s) != 0:
            problems.append("infinite system needs constant volatility")
        if regulated:
            if np.ptp(d) != 0:
                problems.append("infinite regulated system needs constant drift")
            if not d[0] < 0:
                problems.append("infinite regulated system needs delta_1 < 0")
        else:
            if M is None or not 1 <= M <= d.size:
                problems.append("infinite unregulated system needs 1 <= M <= len(deltas)")
            elif np.ptp(d[M - 1:]) != 0:
                problems.append(f"drifts must be constant from rank M={M} on")
    return AssumptionReport(not problems, problems)
