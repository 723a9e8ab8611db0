"""Rule-based rewards for structured extractions plus the policy-update math."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

from .errors import ValidationError
from .outcomes import OutcomeData, canonical_fields, outcome_type_of
from .schema import ExtractionOutput, validate_format

REAL_MATCH_TOL = 1e-3
CORRECTNESS_WEIGHT = 0.8
FORMAT_WEIGHT = 0.1
THOUGHT_FORMAT_WEIGHT = 0.1
COMBINED_TOL = 1e-12


def _field_matches(pred: int | float, gold: int | float) -> bool:
    # count fields are stored as int; everything else compares within tolerance
    if isinstance(pred, int) and isinstance(gold, int):
        return pred == gold
    return abs(float(pred) - float(gold)) < REAL_MATCH_TOL


def match_vector(candidate: OutcomeData | None, gold: OutcomeData) -> list[bool] | None:
    """Per-field matches in canonical order, or None when the variant is absent or wrong."""
    if candidate is None or outcome_type_of(candidate) != outcome_type_of(gold):
        return None
    return [_field_matches(p, g)
            for p, g in zip(canonical_fields(candidate), canonical_fields(gold))]


def correctness_reward(candidate: ExtractionOutput, gold: OutcomeData) -> float:
    """Smoothed fraction of matching fields, (1 + k) / (1 + n); 0 when the block is unusable."""
    matches = match_vector(candidate.data, gold)
    if matches is None:
        return 0.0
    return (1 + sum(matches)) / (1 + len(matches))


def format_reward(candidate: ExtractionOutput) -> float:
    """1 when the response carries a well-formed outcome block, else 0."""
    return 1.0 if validate_format(candidate) else 0.0


def thought_format_reward(candidate: ExtractionOutput) -> float:
    """1 when the reasoning-trace conventions hold, else 0."""
    return 1.0 if candidate.thought_format_valid else 0.0


def exact_reward(candidate: ExtractionOutput, gold: OutcomeData) -> float:
    """1 only when the variant and every field match."""
    matches = match_vector(candidate.data, gold)
    return 1.0 if matches is not None and all(matches) else 0.0


@dataclass(frozen=True)
class RewardBreakdown:
    correctness: float
    format: float
    thought_format: float
    exact: float
    combined: float

    def __post_init__(self) -> None:
        expected = (CORRECTNESS_WEIGHT * self.correctness
                    + FORMAT_WEIGHT * self.format
                    + THOUGHT_FORMAT_WEIGHT * self.thought_format)
        if abs(self.combined - expected) > COMBINED_TOL:
            raise ValidationError("combined reward is not the declared weighting")


def combined_reward(candidate: ExtractionOutput, gold: OutcomeData) -> RewardBreakdown:
    """Weighted blend 0.8/0.1/0.1 of correctness, format, and thought format."""
    correctness = correctness_reward(candidate, gold)
    fmt = format_reward(candidate)
    thought = thought_format_reward(candidate)
    combined = (CORRECTNESS_WEIGHT * correctness
                + FORMAT_WEIGHT * fmt
                + THOUGHT_FORMAT_WEIGHT * thought)
    return RewardBreakdown(correctness, fmt, thought,
                           exact_reward(candidate, gold), combined)


def _as_finite_floats(values: Sequence[float], name: str) -> tuple[float, ...]:
    out = []
    for v in values:
        f = float(v)
        if not math.isfinite(f):
            raise ValidationError(f"{name} must be finite")
        out.append(f)
    return tuple(out)


@dataclass(frozen=True)
class GroupRewards:
    """Rewards for one sampled group with their normalized advantages."""

    rewards: tuple[float, ...]
    advantages: tuple[float, ...]

    def __post_init__(self) -> None:
        object.__setattr__(self, "rewards", _as_finite_floats(self.rewards, "rewards"))
        object.__setattr__(self, "advantages",
                           _as_finite_floats(self.advantages, "advantages"))
        n = len(self.rewards)
        if n < 2 or len(self.advantages) != n:
            raise ValidationError("a reward group needs >= 2 aligned entries")
        if min(self.rewards) == max(self.rewards):
            if any(a != 0.0 for a in self.advantages):
                raise ValidationError("zero-variance group must have zero advantages")
            return
        a_mean = math.fsum(self.advantages) / n
        a_sd = math.sqrt(math.fsum((a - a_mean) ** 2 for a in self.advantages) / n)
        if abs(a_mean) > 1e-9 or abs(a_sd - 1.0) > 1e-6:
            raise ValidationError("advantages must be centered with unit spread")


def group_advantages(rewards: Sequence[float]) -> GroupRewards:
    """Center and scale a group of rewards to zero mean and unit spread.

    Uses population statistics. A zero-variance group maps to all-zero
    advantages rather than dividing by zero.
    """
    values = _as_finite_floats(rewards, "rewards")
    n = len(values)
    if n < 2:
        raise ValidationError("a reward group needs at least 2 entries")
    # all-equal is the zero-variance case, even when rounding in the mean
    # would leave the recomputed variance a hair above zero
    if min(values) == max(values):
        return GroupRewards(values, (0.0,) * n)
    mean = math.fsum(values) / n
    deviations = [r - mean for r in values]
    variance = math.fsum(d * d for d in deviations) / n
    # subtract the residual mean left by rounding so centering is exact
    residual = math.fsum(deviations) / n
    sd = math.sqrt(variance)
    return GroupRewards(values, tuple((d - residual) / sd for d in deviations))


@dataclass(frozen=True)
class TokenTrace:
    """Per-token probability ratios and reference-KL penalties for one response."""

    ratio: tuple[float, ...]
    ref_kl: tuple[float, ...]

    def __post_init__(self) -> None:
        object.__setattr__(self, "ratio", _as_finite_floats(self.ratio, "ratio"))
        object.__setattr__(self, "ref_kl", _as_finite_floats(self.ref_kl, "ref_kl"))
        if not self.ratio or len(self.ratio) != len(self.ref_kl):
            raise ValidationError("ratio and ref_kl must be nonempty and aligned")
        if any(r <= 0 for r in self.ratio):
            raise ValidationError("probability ratios must be positive")
        if any(k < 0 for k in self.ref_kl):
            raise ValidationError("KL penalties must be nonnegative")


def kl_per_token(ref_ratio: float) -> float:
    """Nonnegative per-token KL estimate from r = pi_ref / pi_theta: r - log(r) - 1."""
    r = float(ref_ratio)
    if not math.isfinite(r) or r <= 0:
        raise ValidationError("reference ratio must be positive and finite")
    return max(r - math.log(r) - 1.0, 0.0)


def grpo_objective(traces: Sequence[TokenTrace], advantages: Sequence[float],
                   epsilon: float, beta: float) -> float:
    """Length-normalized clipped surrogate with a per-token KL penalty.

    Each response contributes the mean over its tokens of
    ``min(ratio * A, clip(ratio, 1 - epsilon, 1 + epsilon) * A) - beta * kl``;
    the group objective is the mean over responses. Higher is better.
    """
    if not traces or len(traces) != len(advantages):
        raise ValidationError("traces and advantages must be nonempty and aligned")
    advs = _as_finite_floats(advantages, "advantages")
    if not 0.0 < epsilon < 1.0:
        raise ValidationError("epsilon must lie in (0, 1)")
    if beta < 0:
        raise ValidationError("beta must be nonnegative")
    low, high = 1.0 - epsilon, 1.0 + epsilon
    per_response = []
    for trace, adv in zip(traces, advs):
        terms = [min(ratio * adv, min(max(ratio, low), high) * adv) - beta * kl
                 for ratio, kl in zip(trace.ratio, trace.ref_kl)]
        per_response.append(math.fsum(terms) / len(terms))
    return math.fsum(per_response) / len(per_response)


def sft_nll(target_logprobs: Sequence[float]) -> float:
    """Negative log-likelihood summed over target tokens."""
    values = _as_finite_floats(target_logprobs, "logprobs")
    if any(lp > 0 for lp in values):
        raise ValidationError("log-probabilities cannot be positive")
    return -math.fsum(values) + 0.0
