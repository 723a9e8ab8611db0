"""Parser and validator for model responses carrying outcome blocks.

Recognized surface: an optional reasoning trace wrapped in a single
``<think>...</think>`` pair, followed by key/value lines declaring
``outcome_type`` and the per-arm numbers. The block may use the flattened
layout (several pairs per line, e.g. ``events: 8 total: 23``) or standard
nested YAML; both normalize to the same internal form. Only the two outcome
schemas are recognized; this is deliberately not a general YAML parser.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from enum import Enum
from typing import Mapping

from .outcomes import (
    BINARY,
    CONTINUOUS,
    BinaryArms,
    ContinuousArms,
    OutcomeData,
    outcome_type_of,
)

ARM_KEYS = ("intervention", "comparator")
BINARY_ARM_FIELDS = ("events", "total")
CONTINUOUS_ARM_FIELDS = ("mean", "standard_deviation", "group_size")
COUNT_FIELDS = frozenset({"events", "total", "group_size"})

THINK_OPEN = "<think>"
THINK_CLOSE = "</think>"


class SchemaErrorKind(str, Enum):
    NO_YAML_BLOCK = "no_yaml_block"
    MISSING_KEY = "missing_key"
    WRONG_OUTCOME_TYPE = "wrong_outcome_type"
    NON_NUMERIC_VALUE = "non_numeric_value"
    NEGATIVE_VALUE = "negative_value"
    EVENTS_EXCEED_TOTAL = "events_exceed_total"


class SchemaError(Exception):
    """Structured schema failure; raised by strict paths, attached as data otherwise."""

    def __init__(self, kind: SchemaErrorKind, detail: str):
        super().__init__(f"{kind.value}: {detail}")
        self.kind = kind
        self.detail = detail


@dataclass(frozen=True)
class ExtractionOutput:
    """One parsed model response.

    ``yaml_valid`` implies ``data`` is populated and well formed;
    ``thought_format_valid`` tracks the reasoning-trace conventions
    independently of whether a data block was found.
    """

    raw_text: str
    thought: str | None
    data: OutcomeData | None
    yaml_valid: bool
    thought_format_valid: bool
    error: SchemaError | None = None

    def __post_init__(self) -> None:
        if self.yaml_valid and self.data is None:
            raise SchemaError(SchemaErrorKind.NO_YAML_BLOCK,
                              "yaml_valid requires parsed data")


_PAIR = re.compile(r"([A-Za-z_][A-Za-z0-9_]*)\s*:[ \t]*(\S*)")
_NUMBER = re.compile(r"[-+]?(?:\d+\.?\d*|\.\d+)(?:[eE][-+]?\d+)?$")
_BLOCK_START = re.compile(r"^\s*outcome_type\s*:")


def _arm_fields(declared: str) -> tuple[str, ...]:
    return BINARY_ARM_FIELDS if declared == BINARY else CONTINUOUS_ARM_FIELDS


def _strip_token(token: str) -> str:
    token = token.rstrip(",;")
    if len(token) >= 2 and token[0] == token[-1] and token[0] in "'\"":
        token = token[1:-1]
    return token


def _normalize_value(field: str, value: float) -> int | float:
    """Coerce a raw numeric value to the field's declared type, or raise."""
    if field in COUNT_FIELDS:
        if not value.is_integer():
            raise SchemaError(SchemaErrorKind.NON_NUMERIC_VALUE,
                              f"{field} must be an integer, got {value!r}")
        count = int(value)
        if count < 0:
            raise SchemaError(SchemaErrorKind.NEGATIVE_VALUE,
                              f"{field} must be nonnegative, got {count}")
        return count
    if field == "standard_deviation" and value < 0:
        raise SchemaError(SchemaErrorKind.NEGATIVE_VALUE,
                          f"standard_deviation must be nonnegative, got {value!r}")
    return value


def _parse_number(field: str, token: str) -> int | float:
    if not token:
        raise SchemaError(SchemaErrorKind.NON_NUMERIC_VALUE, f"{field} has no value")
    if not _NUMBER.match(token):
        raise SchemaError(SchemaErrorKind.NON_NUMERIC_VALUE,
                          f"{field} value {token!r} is not a number")
    value = float(token)
    if value != value or value in (float("inf"), float("-inf")):
        raise SchemaError(SchemaErrorKind.NON_NUMERIC_VALUE,
                          f"{field} value {token!r} is not finite")
    return _normalize_value(field, value)


def _build_outcome(declared: str, values: Mapping[tuple[str, str], int | float]) -> OutcomeData:
    if declared == BINARY:
        for arm in ARM_KEYS:
            if values[(arm, "total")] < 1:
                raise SchemaError(SchemaErrorKind.NEGATIVE_VALUE,
                                  f"{arm} total must be at least 1")
            if values[(arm, "events")] > values[(arm, "total")]:
                raise SchemaError(SchemaErrorKind.EVENTS_EXCEED_TOTAL,
                                  f"{arm} events exceed the group total")
        return BinaryArms(
            values[("intervention", "events")], values[("intervention", "total")],
            values[("comparator", "events")], values[("comparator", "total")])
    for arm in ARM_KEYS:
        if values[(arm, "group_size")] < 1:
            raise SchemaError(SchemaErrorKind.NEGATIVE_VALUE,
                              f"{arm} group_size must be at least 1")
    return ContinuousArms(
        float(values[("intervention", "mean")]),
        float(values[("intervention", "standard_deviation")]),
        values[("intervention", "group_size")],
        float(values[("comparator", "mean")]),
        float(values[("comparator", "standard_deviation")]),
        values[("comparator", "group_size")])


def _parse_block(lines: list[str]) -> OutcomeData:
    """Parse one candidate block (starts at its ``outcome_type`` line)."""
    declared: str | None = None
    section: str | None = None
    values: dict[tuple[str, str], int | float] = {}
    for line in lines:
        for match in _PAIR.finditer(line):
            key = match.group(1).lower()
            token = _strip_token(match.group(2))
            if key == "outcome_type":
                if declared is None:
                    if token not in (BINARY, CONTINUOUS):
                        raise SchemaError(SchemaErrorKind.WRONG_OUTCOME_TYPE,
                                          f"unrecognized outcome type {token!r}")
                    declared = token
                continue
            if key in ARM_KEYS:
                section = key
                continue
            if declared is None or key not in _arm_fields(declared):
                continue  # unrelated prose or cross-schema keys are noise
            if section is None:
                raise SchemaError(SchemaErrorKind.MISSING_KEY,
                                  f"{key!r} appears outside an arm section")
            values[(section, key)] = _parse_number(key, token)
    if declared is None:
        raise SchemaError(SchemaErrorKind.WRONG_OUTCOME_TYPE, "no outcome_type declared")
    missing = [f"{arm}.{field}"
               for arm in ARM_KEYS
               for field in _arm_fields(declared)
               if (arm, field) not in values]
    if missing:
        raise SchemaError(SchemaErrorKind.MISSING_KEY,
                          "missing required keys: " + ", ".join(missing))
    return _build_outcome(declared, values)


def _match_thought(raw: str) -> tuple[str | None, bool, int]:
    """Return (thought, tags_well_formed, end offset of the closing tag)."""
    opens = [m.start() for m in re.finditer(re.escape(THINK_OPEN), raw)]
    closes = [m.start() for m in re.finditer(re.escape(THINK_CLOSE), raw)]
    ok = (len(opens) == 1 and len(closes) == 1
          and opens[0] < closes[0]
          and raw[:opens[0]].strip() == "")
    if not ok:
        return None, False, -1
    start = opens[0] + len(THINK_OPEN)
    return raw[start:closes[0]].strip(), True, closes[0] + len(THINK_CLOSE)


def parse_response(raw: str) -> ExtractionOutput:
    """Parse an arbitrary model response into a structured extraction.

    Total over arbitrary text: never raises. When several candidate blocks
    are present the last well-formed one wins; a response with no usable
    block comes back with ``yaml_valid=False`` and the blocking error
    attached.
    """
    thought, thought_ok, think_end = _match_thought(raw)

    offsets: list[int] = []
    lines: list[str] = []
    pos = 0
    for line in raw.splitlines(keepends=True):
        offsets.append(pos)
        pos += len(line)
        lines.append(line.rstrip("\r\n"))

    starts = [i for i, line in enumerate(lines) if _BLOCK_START.match(line)]
    data: OutcomeData | None = None
    error: SchemaError | None = None
    block_offset = -1
    for rank, start in enumerate(starts):
        end = starts[rank + 1] if rank + 1 < len(starts) else len(lines)
        try:
            data = _parse_block(lines[start:end])
            block_offset = offsets[start]
        except SchemaError as exc:
            error = exc
    if data is not None:
        error = None
    elif error is None:
        error = SchemaError(SchemaErrorKind.NO_YAML_BLOCK, "no outcome block found")

    if thought_ok and data is not None and block_offset < think_end:
        thought_ok = False  # the winning block sits inside the reasoning trace
    return ExtractionOutput(raw_text=raw, thought=thought, data=data,
                            yaml_valid=data is not None,
                            thought_format_valid=thought_ok, error=error)


def outcome_data_from_mapping(obj: object) -> OutcomeData:
    """Build outcome data from an already-decoded mapping (JSON route).

    Applies the same vocabulary and checks as the text parser; raises
    ``SchemaError`` on any violation.
    """
    if not isinstance(obj, Mapping):
        raise SchemaError(SchemaErrorKind.MISSING_KEY, "outcome data must be a mapping")
    declared = obj.get("outcome_type")
    if declared is None:
        raise SchemaError(SchemaErrorKind.MISSING_KEY, "missing key 'outcome_type'")
    if declared not in (BINARY, CONTINUOUS):
        raise SchemaError(SchemaErrorKind.WRONG_OUTCOME_TYPE,
                          f"unrecognized outcome type {declared!r}")
    values: dict[tuple[str, str], int | float] = {}
    for arm in ARM_KEYS:
        sub = obj.get(arm)
        if not isinstance(sub, Mapping):
            raise SchemaError(SchemaErrorKind.MISSING_KEY, f"missing section {arm!r}")
        for field in _arm_fields(declared):
            if field not in sub:
                raise SchemaError(SchemaErrorKind.MISSING_KEY,
                                  f"missing key {arm}.{field}")
            value = sub[field]
            if isinstance(value, bool) or not isinstance(value, (int, float)):
                raise SchemaError(SchemaErrorKind.NON_NUMERIC_VALUE,
                                  f"{arm}.{field} must be a number")
            value = float(value)
            if value != value or value in (float("inf"), float("-inf")):
                raise SchemaError(SchemaErrorKind.NON_NUMERIC_VALUE,
                                  f"{arm}.{field} must be finite")
            values[(arm, field)] = _normalize_value(field, value)
    return _build_outcome(declared, values)


def outcome_data_to_mapping(data: OutcomeData) -> dict:
    """Inverse of :func:`outcome_data_from_mapping`."""
    kind = outcome_type_of(data)
    if isinstance(data, BinaryArms):
        return {
            "outcome_type": kind,
            "intervention": {"events": data.intervention_events,
                             "total": data.intervention_total},
            "comparator": {"events": data.comparator_events,
                           "total": data.comparator_total},
        }
    return {
        "outcome_type": kind,
        "intervention": {"mean": data.intervention_mean,
                         "standard_deviation": data.intervention_sd,
                         "group_size": data.intervention_n},
        "comparator": {"mean": data.comparator_mean,
                       "standard_deviation": data.comparator_sd,
                       "group_size": data.comparator_n},
    }


def _format_real(value: float) -> str:
    return repr(float(value))


def serialize_outcome(data: OutcomeData) -> str:
    """Render outcome data in the canonical flattened block layout.

    Real-valued fields use ``repr`` so a parse round-trip reproduces the
    values exactly.
    """
    if isinstance(data, BinaryArms):
        return (
            "outcome_type: binary\n"
            "intervention:\n"
            f"events: {data.intervention_events} total: {data.intervention_total}\n"
            "comparator:\n"
            f"events: {data.comparator_events} total: {data.comparator_total}"
        )
    if isinstance(data, ContinuousArms):
        return (
            "outcome_type: continuous\n"
            "intervention:\n"
            f"mean: {_format_real(data.intervention_mean)} "
            f"standard_deviation: {_format_real(data.intervention_sd)} "
            f"group_size: {data.intervention_n}\n"
            "comparator:\n"
            f"mean: {_format_real(data.comparator_mean)} "
            f"standard_deviation: {_format_real(data.comparator_sd)} "
            f"group_size: {data.comparator_n}"
        )
    raise SchemaError(SchemaErrorKind.WRONG_OUTCOME_TYPE,
                      f"not an outcome payload: {type(data).__name__}")


def validate_format(out: ExtractionOutput, expected: str | None = None) -> bool:
    """True when the response carries a well-formed block (of the expected type)."""
    if not out.yaml_valid or out.data is None:
        return False
    return expected is None or outcome_type_of(out.data) == expected
