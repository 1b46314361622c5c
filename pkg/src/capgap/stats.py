"""Separation statistics: relative change, Cohen's d, and the paired t-test.

All estimators use sample (n-1) variances. The t-distribution CDF is computed
with a continued-fraction regularized incomplete beta, accurate to 1e-6.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

from .errors import CapgapError
from .model import SCHEMA_VERSION, ExperimentReport


class StatsError(CapgapError, ValueError):
    """Domain error: degenerate variance, empty input, or invalid argument."""


def relative_change(original: float, after: float) -> float:
    """Percent change of ``after`` against ``original``; requires original > 0."""
    if original <= 0:
        raise StatsError(f"relative change undefined for original={original!r}")
    return 100.0 * (after - original) / original


def _mean(values: Sequence[float]) -> float:
    return sum(values) / len(values)


def _sample_variance(values: Sequence[float]) -> float:
    n = len(values)
    if n < 2:
        raise StatsError("sample variance needs at least 2 values")
    m = _mean(values)
    return sum((v - m) ** 2 for v in values) / (n - 1)


def cohens_d(group_a: Sequence[float], group_b: Sequence[float]) -> float:
    """Standardized mean difference (a - b) over the pooled sample SD."""
    if len(group_a) < 2 or len(group_b) < 2:
        raise StatsError("cohens_d needs at least 2 values per group")
    na, nb = len(group_a), len(group_b)
    var_a, var_b = _sample_variance(group_a), _sample_variance(group_b)
    pooled = ((na - 1) * var_a + (nb - 1) * var_b) / (na + nb - 2)
    if pooled <= 0:
        raise StatsError("pooled variance is degenerate")
    return (_mean(group_a) - _mean(group_b)) / math.sqrt(pooled)


# -- t distribution ----------------------------------------------------------

_BETACF_MAX_ITER = 300
_BETACF_EPS = 1e-14
_BETACF_FPMIN = 1e-300


def _betacf(a: float, b: float, x: float) -> float:
    """Continued fraction for the regularized incomplete beta (Lentz's method)."""
    qab = a + b
    qap = a + 1.0
    qam = a - 1.0
    c = 1.0
    d = 1.0 - qab * x / qap
    if abs(d) < _BETACF_FPMIN:
        d = _BETACF_FPMIN
    d = 1.0 / d
    h = d
    for m in range(1, _BETACF_MAX_ITER + 1):
        m2 = 2 * m
        aa = m * (b - m) * x / ((qam + m2) * (a + m2))
        d = 1.0 + aa * d
        if abs(d) < _BETACF_FPMIN:
            d = _BETACF_FPMIN
        c = 1.0 + aa / c
        if abs(c) < _BETACF_FPMIN:
            c = _BETACF_FPMIN
        d = 1.0 / d
        h *= d * c
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2))
        d = 1.0 + aa * d
        if abs(d) < _BETACF_FPMIN:
            d = _BETACF_FPMIN
        c = 1.0 + aa / c
        if abs(c) < _BETACF_FPMIN:
            c = _BETACF_FPMIN
        d = 1.0 / d
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < _BETACF_EPS:
            return h
    raise StatsError("incomplete beta continued fraction failed to converge")


def _reg_incomplete_beta(a: float, b: float, x: float) -> float:
    if x <= 0.0:
        return 0.0
    if x >= 1.0:
        return 1.0
    ln_front = (
        math.lgamma(a + b)
        - math.lgamma(a)
        - math.lgamma(b)
        + a * math.log(x)
        + b * math.log(1.0 - x)
    )
    front = math.exp(ln_front)
    # use the side of the symmetry that converges fast
    if x < (a + 1.0) / (a + b + 2.0):
        return front * _betacf(a, b, x) / a
    return 1.0 - front * _betacf(b, a, 1.0 - x) / b


def student_t_sf_two_sided(t: float, df: int) -> float:
    """Two-sided p-value for a t statistic with ``df`` degrees of freedom."""
    if df < 1:
        raise StatsError("degrees of freedom must be >= 1")
    if math.isinf(t):
        return 0.0
    x = df / (df + t * t)
    return _reg_incomplete_beta(df / 2.0, 0.5, x)


def paired_t_test(pairs: Sequence[tuple[float, float]]) -> tuple[float, float, int]:
    """Standard paired t on the pair differences.

    Returns (t, two-sided p, df). Zero-variance differences follow the
    convention: t = +/-inf with p = 0 when the mean difference is nonzero,
    t = 0 with p = 1 when every difference is zero.
    """
    if len(pairs) < 2:
        raise StatsError("paired test needs at least 2 pairs")
    diffs = [a - b for a, b in pairs]
    n = len(diffs)
    df = n - 1
    mean_diff = _mean(diffs)
    var_diff = _sample_variance(diffs)
    if var_diff == 0.0:
        if mean_diff == 0.0:
            return 0.0, 1.0, df
        return math.copysign(math.inf, mean_diff), 0.0, df
    t = mean_diff / math.sqrt(var_diff / n)
    return t, student_t_sf_two_sided(t, df), df


# -- separation report -------------------------------------------------------


@dataclass(frozen=True)
class SeparationResult:
    """Target-versus-non-target degradation comparison across experiments."""

    target_deltas: tuple[float, ...]
    nontarget_deltas: tuple[float, ...]
    mean_target: float
    mean_nontarget: float
    mean_target_degradation: float
    mean_nontarget_degradation: float
    cohens_d: float
    t_statistic: float
    p_value: float
    convention_note: str

    def to_dict(self) -> dict:
        return {
            "schema_version": SCHEMA_VERSION,
            "kind": "separation_result",
            "target_deltas": list(self.target_deltas),
            "nontarget_deltas": list(self.nontarget_deltas),
            "mean_target": self.mean_target,
            "mean_nontarget": self.mean_nontarget,
            "mean_target_degradation": self.mean_target_degradation,
            "mean_nontarget_degradation": self.mean_nontarget_degradation,
            "cohens_d": self.cohens_d,
            "t_statistic": self.t_statistic,
            "p_value": self.p_value,
            "convention_note": self.convention_note,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "SeparationResult":
        return cls(
            target_deltas=tuple(data["target_deltas"]),
            nontarget_deltas=tuple(data["nontarget_deltas"]),
            mean_target=data["mean_target"],
            mean_nontarget=data["mean_nontarget"],
            mean_target_degradation=data["mean_target_degradation"],
            mean_nontarget_degradation=data["mean_nontarget_degradation"],
            cohens_d=data["cohens_d"],
            t_statistic=data["t_statistic"],
            p_value=data["p_value"],
            convention_note=data["convention_note"],
        )


_CONVENTION_NOTE = (
    "target_deltas: the target row's relative change (%) from each experiment; "
    "nontarget_deltas: every non-target row's relative change, pooled across experiments; "
    "rows without a defined relative change (zero or unscorable original mean) are skipped. "
    "mean_target/mean_nontarget are raw signed means of those lists. "
    "mean_*_degradation folds sign: degradation = max(0, -delta), so improvements count as 0. "
    "cohens_d compares the raw signed lists (target minus non-target) with pooled sample "
    "(n-1) variance. The paired t-test pairs each experiment's target delta with that "
    "experiment's mean non-target delta; p is two-sided from the t distribution."
)


def degradation(delta_rel_pct: float) -> float:
    """Fold a signed relative change into a non-negative degradation magnitude."""
    return max(0.0, -delta_rel_pct)


def separation_report(experiments: Sequence[ExperimentReport]) -> SeparationResult:
    """Aggregate target and non-target relative changes across experiments."""
    if len(experiments) < 2:
        raise StatsError("separation needs at least 2 experiments")

    target_deltas: list[float] = []
    nontarget_deltas: list[float] = []
    pairs: list[tuple[float, float]] = []
    for report in experiments:
        target = report.target_row
        if target.delta_rel_pct is None:
            raise StatsError(
                f"experiment {report.pattern_name!r} has no defined target relative change"
            )
        per_exp_nontargets = [
            r.delta_rel_pct for r in report.nontarget_rows() if r.delta_rel_pct is not None
        ]
        if not per_exp_nontargets:
            raise StatsError(
                f"experiment {report.pattern_name!r} has no defined non-target relative change"
            )
        target_deltas.append(target.delta_rel_pct)
        nontarget_deltas.extend(per_exp_nontargets)
        pairs.append((target.delta_rel_pct, _mean(per_exp_nontargets)))

    t_stat, p_value, _ = paired_t_test(pairs)
    return SeparationResult(
        target_deltas=tuple(target_deltas),
        nontarget_deltas=tuple(nontarget_deltas),
        mean_target=_mean(target_deltas),
        mean_nontarget=_mean(nontarget_deltas),
        mean_target_degradation=_mean([degradation(d) for d in target_deltas]),
        mean_nontarget_degradation=_mean([degradation(d) for d in nontarget_deltas]),
        cohens_d=cohens_d(target_deltas, nontarget_deltas),
        t_statistic=t_stat,
        p_value=p_value,
        convention_note=_CONVENTION_NOTE,
    )
