"""Batch evaluation: conclusion accuracy, extraction match rates, error impact."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from typing import Sequence

from .corpus import StudyRecord
from .errors import ValidationError
from .outcomes import Conclusion, Scale, canonical_fields, estimate
from .rewards import match_vector
from .schema import ExtractionOutput

# macro-F1 averages over the three substantive labels; a spurious
# "not estimable" on either side shows up as a miss for the real label
F1_LABELS = (Conclusion.FAVORS_INTERVENTION,
             Conclusion.FAVORS_COMPARATOR,
             Conclusion.INCONCLUSIVE)

REPORT_KEYS = ("accuracy", "f1", "em", "em_at_1", "mse", "eir",
               "n_studies", "n_extraction_errors", "n_flips")


@dataclass(frozen=True)
class StudyScore:
    """Per-study comparison between a parsed prediction and the gold record."""

    fields_matched: int
    fields_total: int
    exact_match: bool
    any_match: bool
    pred_conclusion: Conclusion
    gold_conclusion: Conclusion
    pred_point: float | None
    gold_point: float | None
    gold_scale: Scale

    def __post_init__(self) -> None:
        if not 0 <= self.fields_matched <= self.fields_total:
            raise ValidationError("matched field count out of range")
        if self.exact_match and not self.any_match:
            raise ValidationError("an exact match implies a partial match")


def score_study(pred: ExtractionOutput, gold: StudyRecord) -> StudyScore:
    """Score one prediction against its study record.

    Points are recomputed from the extracted and gold data with the same
    estimators, so the error metrics are independent of how the stored gold
    summary was rounded.
    """
    matches = match_vector(pred.data, gold.gold_data)
    total = len(canonical_fields(gold.gold_data))
    matched = sum(matches) if matches is not None else 0
    exact = matches is not None and all(matches)
    partial = matches is not None and any(matches)

    if pred.data is not None:
        pred_est, pred_conclusion = estimate(pred.data)
        pred_point = pred_est.point if pred_est.estimable else None
    else:
        pred_conclusion = Conclusion.NOT_ESTIMABLE
        pred_point = None
    gold_est, _ = estimate(gold.gold_data)
    gold_point = gold_est.point if gold_est.estimable else None

    return StudyScore(
        fields_matched=matched,
        fields_total=total,
        exact_match=exact,
        any_match=partial,
        pred_conclusion=pred_conclusion,
        gold_conclusion=gold.gold_conclusion,
        pred_point=pred_point,
        gold_point=gold_point,
        gold_scale=gold_est.scale,
    )


@dataclass(frozen=True)
class EvalReport:
    """Aggregate metrics over a batch of study scores."""

    accuracy: float
    f1: float
    em: float
    em_at_1: float
    mse: float
    eir: float
    n_studies: int
    n_extraction_errors: int
    n_flips: int
    n_mse_pairs: int

    @property
    def eir_defined(self) -> bool:
        """False when there were no extraction errors to rate."""
        return self.n_extraction_errors > 0


def _macro_f1(scores: Sequence[StudyScore]) -> float:
    total = 0.0
    for label in F1_LABELS:
        tp = sum(1 for s in scores
                 if s.pred_conclusion is label and s.gold_conclusion is label)
        fp = sum(1 for s in scores
                 if s.pred_conclusion is label and s.gold_conclusion is not label)
        fn = sum(1 for s in scores
                 if s.gold_conclusion is label and s.pred_conclusion is not label)
        precision = tp / (tp + fp) if tp + fp else 0.0
        recall = tp / (tp + fn) if tp + fn else 0.0
        total += 2 * precision * recall / (precision + recall) if precision + recall else 0.0
    return total / len(F1_LABELS)


def aggregate(scores: Sequence[StudyScore], *, log_scale_mse: bool = False) -> EvalReport:
    """Aggregate a nonempty batch of study scores into one report.

    MSE is taken over studies where both points are estimable, on the natural
    scale of each estimate; ``log_scale_mse`` switches ratio-scale studies to
    log points (pairs where the log is undefined are dropped). An extraction
    error is any study without an exact match, and a flip is an extraction
    error whose predicted conclusion differs from the gold one; EIR is their
    ratio, reported as 0 (with ``eir_defined`` False) when there were no
    errors.
    """
    if not scores:
        raise ValidationError("cannot aggregate an empty batch")
    n = len(scores)
    accuracy = sum(1 for s in scores if s.pred_conclusion is s.gold_conclusion) / n
    em = sum(1 for s in scores if s.exact_match) / n
    em_at_1 = sum(1 for s in scores if s.any_match) / n

    squared: list[float] = []
    for s in scores:
        if s.pred_point is None or s.gold_point is None:
            continue
        if log_scale_mse and s.gold_scale is Scale.RATIO:
            if s.pred_point <= 0:
                continue
            diff = math.log(s.pred_point) - math.log(s.gold_point)
        else:
            diff = s.pred_point - s.gold_point
        squared.append(diff * diff)
    mse = sum(squared) / len(squared) if squared else 0.0

    errors = [s for s in scores if not s.exact_match]
    flips = sum(1 for s in errors if s.pred_conclusion is not s.gold_conclusion)
    eir = flips / len(errors) if errors else 0.0

    return EvalReport(
        accuracy=accuracy,
        f1=_macro_f1(scores),
        em=em,
        em_at_1=em_at_1,
        mse=mse,
        eir=eir,
        n_studies=n,
        n_extraction_errors=len(errors),
        n_flips=flips,
        n_mse_pairs=len(squared),
    )


def report_to_dict(report: EvalReport) -> dict:
    """The machine-readable report: exactly the documented keys."""
    out: dict[str, float | int] = {}
    for key in REPORT_KEYS:
        value = getattr(report, key)
        out[key] = round(value, 4) if isinstance(value, float) else value
    return out


def report_to_json(report: EvalReport) -> str:
    return json.dumps(report_to_dict(report), sort_keys=True, indent=2) + "\n"


def report_to_text(report: EvalReport) -> str:
    """Flat key-value report, sorted by key, floats at 4 decimals."""
    entries = {key: getattr(report, key) for key in REPORT_KEYS}
    entries["eir_defined"] = report.eir_defined
    entries["n_mse_pairs"] = report.n_mse_pairs
    lines = []
    for key in sorted(entries):
        value = entries[key]
        if isinstance(value, bool):
            lines.append(f"{key}: {'true' if value else 'false'}")
        elif isinstance(value, float):
            lines.append(f"{key}: {value:.4f}")
        else:
            lines.append(f"{key}: {value}")
    return "\n".join(lines) + "\n"
