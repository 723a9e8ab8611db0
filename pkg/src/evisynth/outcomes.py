"""Outcome data types and fixed-effect estimates for two-arm studies.

Binary outcomes are summarized as a risk ratio, continuous outcomes as a
difference in means. Both carry a 95% confidence interval computed with a
fixed 1.96 multiplier, and a qualitative conclusion derived from where the
interval sits relative to the null value of its scale.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum

from .errors import ValidationError

Z_95 = 1.96  # fixed multiplier for 95% confidence intervals


class Scale(str, Enum):
    """Scale an effect estimate lives on; determines the null value."""

    RATIO = "ratio"
    DIFFERENCE = "difference"

    @property
    def null_value(self) -> float:
        return 1.0 if self is Scale.RATIO else 0.0


class Conclusion(str, Enum):
    FAVORS_INTERVENTION = "favors_intervention"
    FAVORS_COMPARATOR = "favors_comparator"
    INCONCLUSIVE = "inconclusive"
    NOT_ESTIMABLE = "not_estimable"

    @property
    def display(self) -> str:
        return _CONCLUSION_DISPLAY[self]

    @classmethod
    def from_label(cls, label: str) -> "Conclusion":
        try:
            return cls(label)
        except ValueError:
            raise ValidationError(f"unknown conclusion label {label!r}") from None


_CONCLUSION_DISPLAY = {
    Conclusion.FAVORS_INTERVENTION: "FavorsIntervention",
    Conclusion.FAVORS_COMPARATOR: "FavorsComparator",
    Conclusion.INCONCLUSIVE: "Inconclusive",
    Conclusion.NOT_ESTIMABLE: "NotEstimable",
}


def _require(condition: bool, message: str) -> None:
    if not condition:
        raise ValidationError(message)


def _require_count(value: object, name: str, minimum: int) -> None:
    _require(isinstance(value, int) and not isinstance(value, bool),
             f"{name} must be an integer")
    _require(value >= minimum, f"{name} must be at least {minimum}")


def _require_real(value: object, name: str, nonnegative: bool = False) -> None:
    _require(isinstance(value, (int, float)) and not isinstance(value, bool),
             f"{name} must be a number")
    _require(math.isfinite(value), f"{name} must be finite")
    if nonnegative:
        _require(value >= 0, f"{name} must be nonnegative")


@dataclass(frozen=True)
class BinaryArms:
    """Event counts and group sizes for a binary outcome."""

    intervention_events: int
    intervention_total: int
    comparator_events: int
    comparator_total: int

    def __post_init__(self) -> None:
        _require_count(self.intervention_total, "intervention total", 1)
        _require_count(self.comparator_total, "comparator total", 1)
        _require_count(self.intervention_events, "intervention events", 0)
        _require_count(self.comparator_events, "comparator events", 0)
        _require(self.intervention_events <= self.intervention_total,
                 "intervention events exceed the group total")
        _require(self.comparator_events <= self.comparator_total,
                 "comparator events exceed the group total")


@dataclass(frozen=True)
class ContinuousArms:
    """Mean, standard deviation, and group size per arm for a continuous outcome."""

    intervention_mean: float
    intervention_sd: float
    intervention_n: int
    comparator_mean: float
    comparator_sd: float
    comparator_n: int

    def __post_init__(self) -> None:
        _require_real(self.intervention_mean, "intervention mean")
        _require_real(self.comparator_mean, "comparator mean")
        _require_real(self.intervention_sd, "intervention standard deviation", nonnegative=True)
        _require_real(self.comparator_sd, "comparator standard deviation", nonnegative=True)
        _require_count(self.intervention_n, "intervention group size", 1)
        _require_count(self.comparator_n, "comparator group size", 1)


OutcomeData = BinaryArms | ContinuousArms

BINARY = "binary"
CONTINUOUS = "continuous"


def outcome_type_of(data: OutcomeData) -> str:
    """Return the type tag ("binary" or "continuous") for an outcome payload."""
    if isinstance(data, BinaryArms):
        return BINARY
    if isinstance(data, ContinuousArms):
        return CONTINUOUS
    raise ValidationError(f"not an outcome payload: {type(data).__name__}")


def canonical_fields(data: OutcomeData) -> tuple:
    """Field values in the canonical positional order used for comparisons.

    Binary: intervention events, intervention total, comparator events,
    comparator total. Continuous: intervention mean, sd, n, then the same
    three for the comparator.
    """
    if isinstance(data, BinaryArms):
        return (data.intervention_events, data.intervention_total,
                data.comparator_events, data.comparator_total)
    if isinstance(data, ContinuousArms):
        return (data.intervention_mean, data.intervention_sd, data.intervention_n,
                data.comparator_mean, data.comparator_sd, data.comparator_n)
    raise ValidationError(f"not an outcome payload: {type(data).__name__}")


@dataclass(frozen=True)
class EffectEstimate:
    """Point estimate with standard error and 95% confidence interval.

    ``estimable=False`` marks outcomes whose relative effect carries no
    information (for instance zero events in both arms); the numeric fields
    are NaN in that case.
    """

    point: float
    std_error: float
    ci_low: float
    ci_high: float
    scale: Scale
    estimable: bool = True

    def __post_init__(self) -> None:
        _require(isinstance(self.scale, Scale), "scale must be a Scale")
        if not self.estimable:
            return
        _require(not math.isnan(self.point) and not math.isnan(self.std_error),
                 "estimable results need numeric point and standard error")
        _require(self.std_error >= 0, "standard error must be nonnegative")
        _require(self.ci_low <= self.point <= self.ci_high,
                 "confidence interval must bracket the point estimate")
        if self.scale is Scale.RATIO:
            _require(self.point > 0 and self.ci_low > 0,
                     "ratio estimates live on the positive half-line")

    @classmethod
    def not_estimable(cls, scale: Scale) -> "EffectEstimate":
        nan = float("nan")
        return cls(nan, nan, nan, nan, scale, estimable=False)


def estimate_binary(arms: BinaryArms) -> EffectEstimate:
    """Risk ratio for a two-arm binary outcome.

    Parameters
    ----------
    arms : BinaryArms
        Event counts ``a``, ``c`` and group totals ``n1``, ``n2``.

    Returns
    -------
    EffectEstimate
        Point estimate ``(a/n1) / (c/n2)`` on the ratio scale with
        ``SE(log RR) = sqrt(1/a - 1/n1 + 1/c - 1/n2)`` and the 95% interval
        ``exp(log RR +/- 1.96 * SE)``.

    Notes
    -----
    When exactly one arm has zero events, 0.5 is added to all four cells of
    the 2x2 table (so each total grows by 1) before estimation. With zero
    events in both arms the ratio carries no information and the result is
    flagged not estimable.
    """
    a = float(arms.intervention_events)
    c = float(arms.comparator_events)
    n1 = float(arms.intervention_total)
    n2 = float(arms.comparator_total)
    if arms.intervention_events == 0 and arms.comparator_events == 0:
        return EffectEstimate.not_estimable(Scale.RATIO)
    if arms.intervention_events == 0 or arms.comparator_events == 0:
        a += 0.5
        c += 0.5
        n1 += 1.0
        n2 += 1.0
    point = (a / n1) / (c / n2)
    se = math.sqrt(1.0 / a - 1.0 / n1 + 1.0 / c - 1.0 / n2)
    log_point = math.log(point)
    ci_low = math.exp(log_point - Z_95 * se)
    ci_high = math.exp(log_point + Z_95 * se)
    return EffectEstimate(point, se, ci_low, ci_high, Scale.RATIO)


def estimate_continuous(arms: ContinuousArms) -> EffectEstimate:
    """Mean difference for a two-arm continuous outcome.

    Parameters
    ----------
    arms : ContinuousArms
        Per-arm mean, standard deviation, and group size.

    Returns
    -------
    EffectEstimate
        Point estimate ``mean_T - mean_C`` on the difference scale with
        ``SE = sqrt(sd_T^2/n_T + sd_C^2/n_C)`` and the 95% interval
        ``MD +/- 1.96 * SE``.
    """
    point = arms.intervention_mean - arms.comparator_mean
    se = math.sqrt(arms.intervention_sd ** 2 / arms.intervention_n
                   + arms.comparator_sd ** 2 / arms.comparator_n)
    return EffectEstimate(point, se, point - Z_95 * se, point + Z_95 * se,
                          Scale.DIFFERENCE)


def derive_conclusion(est: EffectEstimate) -> Conclusion:
    """Map a confidence interval to a qualitative conclusion.

    The interval must clear the null value of its scale (1 for ratios, 0 for
    differences) to favor either arm; an interval touching the null on a
    bound is inconclusive. Depends only on the interval, the scale, and the
    estimable flag.
    """
    if not est.estimable:
        return Conclusion.NOT_ESTIMABLE
    null = est.scale.null_value
    if est.ci_low > null:
        return Conclusion.FAVORS_INTERVENTION
    if est.ci_high < null:
        return Conclusion.FAVORS_COMPARATOR
    return Conclusion.INCONCLUSIVE


def estimate(data: OutcomeData) -> tuple[EffectEstimate, Conclusion]:
    """Dispatch to the estimator for the payload type and derive the conclusion."""
    if isinstance(data, BinaryArms):
        est = estimate_binary(data)
    elif isinstance(data, ContinuousArms):
        est = estimate_continuous(data)
    else:
        raise ValidationError(f"not an outcome payload: {type(data).__name__}")
    return est, derive_conclusion(est)
