"""JSONL persistence for study records and prediction alignment."""

from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

from .errors import ValidationError
from .outcomes import Conclusion, OutcomeData, estimate, outcome_type_of
from .schema import (
    ExtractionOutput,
    SchemaError,
    outcome_data_from_mapping,
    outcome_data_to_mapping,
    parse_response,
)

logger = logging.getLogger(__name__)

# stored gold presentation values are rounded to 2 decimals; allow that plus slack
GOLD_TOLERANCE = 0.01 + 1e-9

RECORD_FIELDS = ("id", "study_text", "comparison", "outcome_name", "outcome_type",
                 "gold_data", "gold_point", "gold_ci", "gold_conclusion")


@dataclass(frozen=True)
class StudyRecord:
    """One study outcome: source text, question frame, and gold extraction."""

    id: str
    study_text: str
    comparison: str
    outcome_name: str
    outcome_type: str
    gold_data: OutcomeData
    gold_point: float
    gold_ci: tuple[float, float]
    gold_conclusion: Conclusion
    thought: str | None = None

    def __post_init__(self) -> None:
        if not self.id:
            raise ValidationError("record id must be nonempty")
        if self.outcome_type != outcome_type_of(self.gold_data):
            raise ValidationError("outcome_type does not match gold_data")
        if not isinstance(self.gold_conclusion, Conclusion):
            raise ValidationError("gold_conclusion must be a Conclusion")
        low, high = self.gold_ci
        if not (math.isfinite(self.gold_point) and math.isfinite(low) and math.isfinite(high)):
            raise ValidationError("gold point and interval must be finite")
        if low > high:
            raise ValidationError("gold interval bounds are out of order")


@dataclass(frozen=True)
class PredictionRecord:
    """One raw model response keyed by study id."""

    id: str
    raw_response: str


@dataclass(frozen=True)
class CorpusIssue:
    """One problem found while reading a corpus or prediction file."""

    line: int
    kind: str
    message: str
    fatal: bool = True


class CorpusError(Exception):
    """Strict-mode load failure; carries the issues that triggered it."""

    def __init__(self, path: str | Path, issues: Sequence[CorpusIssue]):
        lines = "; ".join(f"line {i.line}: {i.kind}: {i.message}" for i in issues)
        super().__init__(f"{path}: {lines}")
        self.issues = list(issues)


def record_to_dict(record: StudyRecord) -> dict:
    doc = {
        "id": record.id,
        "study_text": record.study_text,
        "comparison": record.comparison,
        "outcome_name": record.outcome_name,
        "outcome_type": record.outcome_type,
        "gold_data": outcome_data_to_mapping(record.gold_data),
        "gold_point": record.gold_point,
        "gold_ci": list(record.gold_ci),
        "gold_conclusion": record.gold_conclusion.value,
    }
    if record.thought is not None:
        doc["thought"] = record.thought
    return doc


def record_from_dict(doc: object) -> StudyRecord:
    """Decode one corpus row; raises SchemaError or ValidationError."""
    if not isinstance(doc, dict):
        raise ValidationError("corpus row must be a JSON object")
    missing = [k for k in RECORD_FIELDS if k not in doc]
    if missing:
        raise ValidationError("missing field(s): " + ", ".join(missing))
    for key in ("id", "study_text", "comparison", "outcome_name", "outcome_type"):
        if not isinstance(doc[key], str):
            raise ValidationError(f"field {key!r} must be a string")
    gold_data = outcome_data_from_mapping(doc["gold_data"])
    if doc["outcome_type"] != outcome_type_of(gold_data):
        raise ValidationError("outcome_type does not match gold_data")
    point = doc["gold_point"]
    ci = doc["gold_ci"]
    if isinstance(point, bool) or not isinstance(point, (int, float)):
        raise ValidationError("gold_point must be a number")
    if (not isinstance(ci, list) or len(ci) != 2
            or any(isinstance(v, bool) or not isinstance(v, (int, float)) for v in ci)):
        raise ValidationError("gold_ci must be a [low, high] pair")
    thought = doc.get("thought")
    if thought is not None and not isinstance(thought, str):
        raise ValidationError("thought must be a string when present")
    return StudyRecord(
        id=doc["id"],
        study_text=doc["study_text"],
        comparison=doc["comparison"],
        outcome_name=doc["outcome_name"],
        outcome_type=doc["outcome_type"],
        gold_data=gold_data,
        gold_point=float(point),
        gold_ci=(float(ci[0]), float(ci[1])),
        gold_conclusion=Conclusion.from_label(doc["gold_conclusion"]),
        thought=thought,
    )


def gold_inconsistencies(record: StudyRecord) -> list[str]:
    """Differences between the stored gold summary and a fresh estimate.

    The stored values are presentation-rounded, so the comparison allows
    0.01 after rounding the recomputed values to 2 decimals.
    """
    est, conclusion = estimate(record.gold_data)
    problems = []
    if not est.estimable:
        if record.gold_conclusion is not Conclusion.NOT_ESTIMABLE:
            problems.append("gold data is not estimable but the conclusion says otherwise")
        return problems
    checks = (("gold_point", est.point, record.gold_point),
              ("gold_ci low", est.ci_low, record.gold_ci[0]),
              ("gold_ci high", est.ci_high, record.gold_ci[1]))
    for name, fresh, stored in checks:
        if abs(round(fresh, 2) - stored) > GOLD_TOLERANCE:
            problems.append(f"{name} {stored} differs from recomputed {round(fresh, 2)}")
    if conclusion is not record.gold_conclusion:
        problems.append(f"gold_conclusion {record.gold_conclusion.value} differs "
                        f"from recomputed {conclusion.value}")
    return problems


def scan_corpus(path: str | Path) -> tuple[list[StudyRecord], list[CorpusIssue]]:
    """Read a JSONL corpus, returning the loadable records and every issue found.

    Records with a consistent shape but a gold summary that disagrees with a
    fresh estimate are kept and reported as non-fatal issues; they are never
    silently corrected.
    """
    records: list[StudyRecord] = []
    issues: list[CorpusIssue] = []
    text = Path(path).read_text(encoding="utf-8")
    for line_no, line in enumerate(text.splitlines(), start=1):
        if not line.strip():
            continue
        try:
            doc = json.loads(line)
        except json.JSONDecodeError as exc:
            issues.append(CorpusIssue(line_no, "invalid_json", str(exc)))
            continue
        try:
            record = record_from_dict(doc)
        except SchemaError as exc:
            issues.append(CorpusIssue(line_no, exc.kind.value, exc.detail))
            continue
        except ValidationError as exc:
            issues.append(CorpusIssue(line_no, "invalid_record", str(exc)))
            continue
        for problem in gold_inconsistencies(record):
            issues.append(CorpusIssue(line_no, "gold_mismatch", problem, fatal=False))
        records.append(record)
    return records, issues


def load_corpus(path: str | Path, *, strict: bool = False) -> list[StudyRecord]:
    """Load a JSONL corpus; tolerant by default, aborting on any issue when strict."""
    records, issues = scan_corpus(path)
    if issues and strict:
        raise CorpusError(path, issues)
    for issue in issues:
        logger.warning("%s line %d: %s: %s", path, issue.line, issue.kind, issue.message)
    return records


def save_corpus(records: Iterable[StudyRecord], path: str | Path) -> None:
    """Write records as JSONL; a load round-trip is lossless."""
    lines = [json.dumps(record_to_dict(r), sort_keys=True, ensure_ascii=False)
             for r in records]
    Path(path).write_text("\n".join(lines) + ("\n" if lines else ""), encoding="utf-8")


def save_predictions(predictions: Iterable[PredictionRecord], path: str | Path) -> None:
    lines = [json.dumps({"id": p.id, "raw_response": p.raw_response},
                        sort_keys=True, ensure_ascii=False)
             for p in predictions]
    Path(path).write_text("\n".join(lines) + ("\n" if lines else ""), encoding="utf-8")


def load_predictions(path: str | Path) -> list[PredictionRecord]:
    """Read a predictions JSONL file, keeping rows in file order (duplicates included)."""
    out: list[PredictionRecord] = []
    text = Path(path).read_text(encoding="utf-8")
    for line_no, line in enumerate(text.splitlines(), start=1):
        if not line.strip():
            continue
        try:
            doc = json.loads(line)
        except json.JSONDecodeError as exc:
            logger.warning("%s line %d: invalid JSON skipped: %s", path, line_no, exc)
            continue
        if (not isinstance(doc, dict) or not isinstance(doc.get("id"), str)
                or not doc["id"] or not isinstance(doc.get("raw_response"), str)):
            logger.warning("%s line %d: not a prediction row, skipped", path, line_no)
            continue
        out.append(PredictionRecord(doc["id"], doc["raw_response"]))
    return out


def join_predictions(corpus: Sequence[StudyRecord],
                     predictions: Sequence[PredictionRecord],
                     ) -> list[tuple[StudyRecord, ExtractionOutput]]:
    """Pair each study with its parsed prediction, in corpus order.

    Duplicate prediction ids keep the last occurrence; ids without a study
    record are reported and dropped. Studies without a prediction are omitted.
    """
    by_id: dict[str, PredictionRecord] = {}
    for pred in predictions:
        if pred.id in by_id:
            logger.warning("duplicate prediction for id %s: keeping the last", pred.id)
        by_id[pred.id] = pred
    known = {record.id for record in corpus}
    stray = [pid for pid in by_id if pid not in known]
    if stray:
        logger.warning("%d prediction id(s) match no study record: %s",
                       len(stray), ", ".join(stray))
    return [(record, parse_response(by_id[record.id].raw_response))
            for record in corpus if record.id in by_id]
