"""Parser tests: canonical responses, mutants, leniency rules, and fuzzing."""

from __future__ import annotations

import random
import string

import pytest

from evisynth import (
    BinaryArms,
    ContinuousArms,
    SchemaErrorKind,
    estimate,
    parse_response,
    serialize_outcome,
    validate_format,
)

from conftest import DICKER, HAWKEY, HAWKEY_RESPONSE, random_binary, random_continuous

FLAT_BINARY = ("outcome_type: binary\n"
               "intervention:\n"
               "events: 8 total: 23\n"
               "comparator:\n"
               "events: 2 total: 22")

FLAT_CONTINUOUS = ("outcome_type: continuous\n"
                   "intervention:\n"
                   "mean: 5.22 standard_deviation: 2.22 group_size: 48\n"
                   "comparator:\n"
                   "mean: 3.08 standard_deviation: 1.81 group_size: 51")


class TestCanonicalResponses:
    def test_trace_plus_flat_block(self):
        out = parse_response(HAWKEY_RESPONSE)
        assert out.data == HAWKEY
        assert out.yaml_valid
        assert out.thought_format_valid
        assert out.error is None
        assert out.thought.startswith("The trial reports")

    def test_block_without_trace(self):
        out = parse_response(FLAT_CONTINUOUS)
        assert out.data == DICKER
        assert out.yaml_valid
        assert not out.thought_format_valid
        assert out.thought is None

    def test_nested_yaml_layout(self):
        nested = ("outcome_type: binary\n"
                  "intervention:\n  events: 8\n  total: 23\n"
                  "comparator:\n  events: 2\n  total: 22")
        assert parse_response(nested).data == HAWKEY

    def test_prose_only_response(self):
        out = parse_response("I believe the answer is 8 events out of 23.")
        assert not out.yaml_valid
        assert out.data is None
        assert out.error.kind is SchemaErrorKind.NO_YAML_BLOCK

    def test_empty_response(self):
        out = parse_response("")
        assert not out.yaml_valid
        assert out.error.kind is SchemaErrorKind.NO_YAML_BLOCK


class TestKeyDeletionMutants:
    @pytest.mark.parametrize("needle", [
        "outcome_type: binary\n",
        "events: 8 ", "total: 23\n", "events: 2 ", "total: 22",
        "intervention:\n", "comparator:\n",
    ])
    def test_every_deletion_invalidates_the_flat_binary_block(self, needle):
        mutant = FLAT_BINARY.replace(needle, "", 1)
        assert mutant != FLAT_BINARY
        out = parse_response(mutant)
        assert not validate_format(out, "binary")

    @pytest.mark.parametrize("needle", [
        "mean: 5.22 ", "standard_deviation: 2.22 ", "group_size: 48\n",
        "mean: 3.08 ", "standard_deviation: 1.81 ", "group_size: 51",
    ])
    def test_every_deletion_invalidates_the_flat_continuous_block(self, needle):
        mutant = FLAT_CONTINUOUS.replace(needle, "", 1)
        assert mutant != FLAT_CONTINUOUS
        assert not validate_format(parse_response(mutant), "continuous")


class TestExpectedVariant:
    def test_variant_agreement(self):
        out = parse_response(FLAT_BINARY)
        assert validate_format(out)
        assert validate_format(out, "binary")
        assert not validate_format(out, "continuous")

    def test_unparsed_response_never_validates(self):
        out = parse_response("nothing here")
        assert not validate_format(out)
        assert not validate_format(out, "binary")


class TestMultipleBlocks:
    def test_last_well_formed_block_wins(self):
        text = FLAT_BINARY + "\n\nOn reflection the control arm was larger:\n\n" \
            + FLAT_BINARY.replace("total: 22", "total: 30")
        out = parse_response(text)
        assert out.data == BinaryArms(8, 23, 2, 30)
        assert out.yaml_valid

    def test_earlier_valid_block_beats_later_malformed_one(self):
        text = FLAT_BINARY + "\n\noutcome_type: binary\nintervention:\nevents: 9\n"
        out = parse_response(text)
        assert out.data == HAWKEY
        assert out.yaml_valid
        assert out.error is None

    def test_draft_block_inside_trace_flunks_thought_format(self):
        text = f"<think>draft:\n{FLAT_BINARY}\n</think>\nNo final answer."
        out = parse_response(text)
        assert out.yaml_valid          # the block is still the best available data
        assert out.data == HAWKEY
        assert not out.thought_format_valid

    def test_final_block_after_trace_restores_thought_format(self):
        text = f"<think>draft:\n{FLAT_BINARY}\n</think>\n" \
            + FLAT_BINARY.replace("events: 8", "events: 9")
        out = parse_response(text)
        assert out.data == BinaryArms(9, 23, 2, 22)
        assert out.thought_format_valid


class TestThoughtPattern:
    def test_two_traces_invalidate(self):
        text = f"<think>a</think><think>b</think>\n{FLAT_BINARY}"
        out = parse_response(text)
        assert out.yaml_valid
        assert not out.thought_format_valid
        assert out.thought is None

    def test_text_before_the_opener_invalidates(self):
        text = f"Sure!<think>a</think>\n{FLAT_BINARY}"
        assert not parse_response(text).thought_format_valid

    def test_whitespace_before_the_opener_is_fine(self):
        text = f"\n  <think>a</think>\n{FLAT_BINARY}"
        assert parse_response(text).thought_format_valid

    def test_unclosed_trace_invalidates(self):
        text = f"<think>a\n{FLAT_BINARY}"
        out = parse_response(text)
        assert not out.thought_format_valid
        assert out.yaml_valid

    def test_trace_alone_is_still_well_formed(self):
        out = parse_response("<think>thinking only</think>")
        assert out.thought_format_valid
        assert not out.yaml_valid


class TestLeniency:
    def test_integer_valued_floats_normalize_to_counts(self):
        text = FLAT_BINARY.replace("total: 23", "total: 23.0")
        out = parse_response(text)
        assert out.data == HAWKEY
        assert isinstance(out.data.intervention_total, int)

    def test_quoted_scalars_are_unwrapped(self):
        text = FLAT_BINARY.replace("events: 8", "events: '8'")
        assert parse_response(text).data == HAWKEY

    def test_trailing_commas_are_tolerated(self):
        text = FLAT_BINARY.replace("events: 8", "events: 8,")
        assert parse_response(text).data == HAWKEY

    def test_unknown_keys_are_ignored(self):
        text = FLAT_BINARY + "\nconfidence: high"
        assert parse_response(text).data == HAWKEY

    def test_negative_mean_is_legal(self):
        text = FLAT_CONTINUOUS.replace("mean: 5.22", "mean: -5.22")
        out = parse_response(text)
        assert out.yaml_valid
        assert out.data.intervention_mean == -5.22


class TestRejections:
    def assert_kind(self, text, kind):
        out = parse_response(text)
        assert not out.yaml_valid
        assert out.error is not None and out.error.kind is kind

    def test_thousands_separators_are_rejected(self):
        self.assert_kind(FLAT_BINARY.replace("total: 23", "total: 1,234"),
                         SchemaErrorKind.NON_NUMERIC_VALUE)

    def test_fractional_count_is_rejected(self):
        self.assert_kind(FLAT_BINARY.replace("events: 8", "events: 8.5"),
                         SchemaErrorKind.NON_NUMERIC_VALUE)

    def test_non_numeric_value(self):
        self.assert_kind(FLAT_BINARY.replace("events: 8", "events: many"),
                         SchemaErrorKind.NON_NUMERIC_VALUE)

    def test_negative_count(self):
        self.assert_kind(FLAT_BINARY.replace("events: 2", "events: -2"),
                         SchemaErrorKind.NEGATIVE_VALUE)

    def test_negative_standard_deviation(self):
        self.assert_kind(
            FLAT_CONTINUOUS.replace("standard_deviation: 2.22",
                                    "standard_deviation: -2.22"),
            SchemaErrorKind.NEGATIVE_VALUE)

    def test_zero_total(self):
        self.assert_kind(FLAT_BINARY.replace("total: 22", "total: 0"),
                         SchemaErrorKind.NEGATIVE_VALUE)

    def test_events_exceeding_total(self):
        self.assert_kind(FLAT_BINARY.replace("events: 2", "events: 30"),
                         SchemaErrorKind.EVENTS_EXCEED_TOTAL)

    def test_unknown_outcome_type(self):
        self.assert_kind("outcome_type: ordinal\nintervention:\nevents: 1 total: 2",
                         SchemaErrorKind.WRONG_OUTCOME_TYPE)

    def test_values_outside_any_section(self):
        self.assert_kind("outcome_type: binary\nevents: 8 total: 23\n"
                         "events: 2 total: 22",
                         SchemaErrorKind.MISSING_KEY)

    def test_missing_key_reports_what_is_missing(self):
        out = parse_response(FLAT_BINARY.replace("total: 22", ""))
        assert out.error.kind is SchemaErrorKind.MISSING_KEY
        assert "comparator.total" in out.error.detail


class TestSerializeRoundTrip:
    def test_canonical_layouts(self):
        assert serialize_outcome(HAWKEY) == FLAT_BINARY
        assert parse_response(serialize_outcome(DICKER)).data == DICKER

    def test_random_round_trips_are_exact(self):
        rng = random.Random(77001)
        for _ in range(300):
            data = (random_binary(rng, allow_zero=True) if rng.random() < 0.5
                    else random_continuous(rng))
            out = parse_response(serialize_outcome(data))
            assert out.yaml_valid
            assert out.data == data


class TestTotality:
    """parse_response must be total and its flags self-consistent."""

    def _random_text(self, rng) -> str:
        alphabet = (string.ascii_letters + string.digits +
                    " \t\n:.-_,;'\"<>/{}" + "±µ≤")
        pieces = []
        for _ in range(rng.randint(0, 12)):
            roll = rng.random()
            if roll < 0.25:
                pieces.append("".join(rng.choice(alphabet)
                                      for _ in range(rng.randint(0, 30))))
            elif roll < 0.45:
                pieces.append(rng.choice([
                    "<think>", "</think>", "outcome_type:", "outcome_type: binary",
                    "outcome_type: continuous", "intervention:", "comparator:",
                    "events: ", "total: ", "mean: ", "standard_deviation: ",
                    "group_size: ", "events: -3", "total: 1,000", "mean: nan",
                ]))
            elif roll < 0.65:
                pieces.append(str(rng.randint(-1000, 1000)))
            elif roll < 0.8:
                pieces.append(f"{rng.uniform(-100, 100):.3f}")
            else:
                pieces.append("\n")
        return " ".join(pieces)

    def test_fuzzing_never_raises_and_flags_hold(self):
        rng = random.Random(424242)
        for _ in range(800):
            out = parse_response(self._random_text(rng))
            if out.yaml_valid:
                assert out.data is not None
                assert out.error is None
                estimate(out.data)  # parsed payloads always estimate cleanly
            else:
                assert out.data is None
                assert out.error is not None
            assert validate_format(out) == out.yaml_valid
