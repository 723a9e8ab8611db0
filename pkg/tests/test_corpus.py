"""Corpus and prediction file round-trip, issue reporting, and join tests."""

from __future__ import annotations

import json
import random

import pytest

from evisynth import (
    BinaryArms,
    Conclusion,
    CorpusError,
    PredictionRecord,
    StudyRecord,
    ValidationError,
    join_predictions,
    load_corpus,
    load_predictions,
    save_corpus,
    save_predictions,
    scan_corpus,
)
from evisynth.corpus import gold_inconsistencies, record_from_dict, record_to_dict

from conftest import (
    DICKER,
    HAWKEY,
    make_record,
    perfect_response,
    random_binary,
    random_continuous,
    write_corpus,
    write_predictions,
)


class TestRoundTrip:
    def test_save_then_load_is_lossless(self, tmp_path, hawkey_record, dicker_record):
        path = write_corpus(tmp_path, [hawkey_record, dicker_record])
        loaded = load_corpus(path)
        assert loaded == [hawkey_record, dicker_record]

    def test_random_round_trips(self, tmp_path):
        rng = random.Random(6061)
        records = []
        for index in range(60):
            data = random_binary(rng) if rng.random() < 0.5 else random_continuous(rng)
            records.append(make_record(f"r{index}", data))
        path = write_corpus(tmp_path, records)
        assert load_corpus(path) == records

    def test_thought_field_survives(self, tmp_path, hawkey_record):
        record = StudyRecord(**{**record_to_dict(hawkey_record),
                                "gold_data": hawkey_record.gold_data,
                                "gold_ci": hawkey_record.gold_ci,
                                "gold_conclusion": hawkey_record.gold_conclusion,
                                "thought": "Counted events from the remission table."})
        path = write_corpus(tmp_path, [record])
        assert load_corpus(path)[0].thought == "Counted events from the remission table."

    def test_rows_are_single_line_sorted_json(self, tmp_path, hawkey_record):
        path = write_corpus(tmp_path, [hawkey_record])
        line = path.read_text(encoding="utf-8").rstrip("\n")
        assert "\n" not in line
        doc = json.loads(line)
        assert list(doc) == sorted(doc)

    def test_empty_corpus_round_trips(self, tmp_path):
        path = write_corpus(tmp_path, [])
        assert path.read_text(encoding="utf-8") == ""
        assert load_corpus(path) == []


class TestRecordValidation:
    def test_type_mismatch_rejected(self, hawkey_record):
        doc = record_to_dict(hawkey_record)
        doc["outcome_type"] = "continuous"
        with pytest.raises(ValidationError):
            record_from_dict(doc)

    def test_missing_field_rejected(self, hawkey_record):
        for field in ("id", "gold_data", "gold_conclusion", "gold_ci"):
            doc = record_to_dict(hawkey_record)
            del doc[field]
            with pytest.raises(ValidationError):
                record_from_dict(doc)

    def test_non_object_row_rejected(self):
        with pytest.raises(ValidationError):
            record_from_dict(["not", "a", "record"])

    def test_bad_conclusion_label_rejected(self, hawkey_record):
        doc = record_to_dict(hawkey_record)
        doc["gold_conclusion"] = "ProbablyFine"
        with pytest.raises(ValidationError):
            record_from_dict(doc)

    def test_unknown_extra_fields_are_ignored(self, hawkey_record):
        doc = record_to_dict(hawkey_record)
        doc["reviewer"] = "rk"
        assert record_from_dict(doc) == hawkey_record


class TestGoldConsistency:
    def test_clean_record_has_no_problems(self, hawkey_record, dicker_record):
        assert gold_inconsistencies(hawkey_record) == []
        assert gold_inconsistencies(dicker_record) == []

    def test_drifted_point_is_reported(self, hawkey_record):
        doc = record_to_dict(hawkey_record)
        doc["gold_point"] = 2.5
        problems = gold_inconsistencies(record_from_dict(doc))
        assert len(problems) == 1 and "gold_point" in problems[0]

    def test_wrong_conclusion_is_reported(self, hawkey_record):
        doc = record_to_dict(hawkey_record)
        doc["gold_conclusion"] = "favors_intervention"
        problems = gold_inconsistencies(record_from_dict(doc))
        assert any("gold_conclusion" in p for p in problems)

    def test_rounding_alone_never_trips_the_check(self):
        rng = random.Random(7272)
        for index in range(300):
            data = random_binary(rng) if rng.random() < 0.5 else random_continuous(rng)
            record = make_record(f"n{index}", data)
            assert gold_inconsistencies(record) == []

    def test_not_estimable_gold(self):
        record = make_record("zero", BinaryArms(0, 10, 0, 12))
        assert record.gold_conclusion is Conclusion.NOT_ESTIMABLE
        assert gold_inconsistencies(record) == []
        object.__setattr__(record, "gold_conclusion", Conclusion.INCONCLUSIVE)
        assert len(gold_inconsistencies(record)) == 1


class TestScanAndLoad:
    def build_mixed_file(self, tmp_path, hawkey_record, dicker_record):
        good = json.dumps(record_to_dict(hawkey_record), sort_keys=True)
        other = json.dumps(record_to_dict(dicker_record), sort_keys=True)
        negative = record_to_dict(hawkey_record)
        negative["gold_data"] = {"outcome_type": "binary", "intervention":
                                 {"events": 30, "total": 23},
                                 "comparator": {"events": 2, "total": 22}}
        drifted = record_to_dict(dicker_record)
        drifted["gold_point"] = 9.99
        path = tmp_path / "mixed.jsonl"
        path.write_text("\n".join([
            good,
            "{not json",
            json.dumps(negative),
            "",
            json.dumps(drifted),
            other,
        ]) + "\n", encoding="utf-8")
        return path

    def test_tolerant_scan_keeps_good_rows_and_reports_the_rest(
            self, tmp_path, hawkey_record, dicker_record):
        path = self.build_mixed_file(tmp_path, hawkey_record, dicker_record)
        records, issues = scan_corpus(path)
        assert [r.id for r in records] == ["hawkey-2015", "dicker-1992", "dicker-1992"]
        by_line = {i.line: i for i in issues}
        assert by_line[2].kind == "invalid_json"
        assert by_line[3].kind == "events_exceed_total"
        assert by_line[5].kind == "gold_mismatch" and not by_line[5].fatal
        assert len(issues) == 3

    def test_strict_load_aborts_with_all_issues(self, tmp_path, hawkey_record,
                                                dicker_record):
        path = self.build_mixed_file(tmp_path, hawkey_record, dicker_record)
        with pytest.raises(CorpusError) as err:
            load_corpus(path, strict=True)
        assert len(err.value.issues) == 3
        assert "line 2" in str(err.value)

    def test_tolerant_load_logs_instead(self, tmp_path, hawkey_record,
                                        dicker_record, caplog):
        path = self.build_mixed_file(tmp_path, hawkey_record, dicker_record)
        with caplog.at_level("WARNING", logger="evisynth.corpus"):
            records = load_corpus(path)
        assert len(records) == 3
        assert sum("gold_mismatch" in m for m in caplog.messages) == 1

    def test_strict_load_of_clean_file_is_quiet(self, tmp_path, hawkey_record):
        path = write_corpus(tmp_path, [hawkey_record])
        assert load_corpus(path, strict=True) == [hawkey_record]

    def test_missing_file_raises_oserror(self, tmp_path):
        with pytest.raises(OSError):
            load_corpus(tmp_path / "absent.jsonl")


class TestPredictions:
    def test_round_trip_preserves_order_and_duplicates(self, tmp_path):
        preds = [PredictionRecord("a", "first"), PredictionRecord("b", "other"),
                 PredictionRecord("a", "second")]
        path = write_predictions(tmp_path, preds)
        assert load_predictions(path) == preds

    def test_malformed_rows_are_skipped(self, tmp_path, caplog):
        path = tmp_path / "preds.jsonl"
        path.write_text('{"id": "a", "raw_response": "ok"}\n'
                        "oops\n"
                        '{"id": 3, "raw_response": "bad id"}\n'
                        '{"id": "", "raw_response": "empty id"}\n'
                        '{"id": "b"}\n', encoding="utf-8")
        with caplog.at_level("WARNING", logger="evisynth.corpus"):
            preds = load_predictions(path)
        assert preds == [PredictionRecord("a", "ok")]
        assert len(caplog.messages) == 4


class TestJoin:
    def test_pairs_in_corpus_order(self, hawkey_record, dicker_record):
        preds = [PredictionRecord("dicker-1992", perfect_response(DICKER)),
                 PredictionRecord("hawkey-2015", perfect_response(HAWKEY))]
        joined = join_predictions([hawkey_record, dicker_record], preds)
        assert [record.id for record, _ in joined] == ["hawkey-2015", "dicker-1992"]
        assert joined[0][1].data == HAWKEY
        assert joined[1][1].data == DICKER

    def test_duplicates_keep_the_last(self, hawkey_record, caplog):
        preds = [PredictionRecord("hawkey-2015", perfect_response(HAWKEY)),
                 PredictionRecord("hawkey-2015", "no block")]
        with caplog.at_level("WARNING", logger="evisynth.corpus"):
            joined = join_predictions([hawkey_record], preds)
        assert len(joined) == 1
        assert joined[0][1].data is None
        assert any("duplicate" in m for m in caplog.messages)

    def test_stray_ids_warn_and_drop(self, hawkey_record, caplog):
        preds = [PredictionRecord("hawkey-2015", perfect_response(HAWKEY)),
                 PredictionRecord("nobody", "hello")]
        with caplog.at_level("WARNING", logger="evisynth.corpus"):
            joined = join_predictions([hawkey_record], preds)
        assert len(joined) == 1
        assert any("nobody" in m for m in caplog.messages)

    def test_missing_predictions_omit_the_study(self, hawkey_record, dicker_record):
        preds = [PredictionRecord("dicker-1992", perfect_response(DICKER))]
        joined = join_predictions([hawkey_record, dicker_record], preds)
        assert [record.id for record, _ in joined] == ["dicker-1992"]

    def test_unparseable_prediction_still_joins(self, hawkey_record):
        joined = join_predictions(
            [hawkey_record], [PredictionRecord("hawkey-2015", "just prose")])
        assert joined[0][1].data is None
        assert not joined[0][1].yaml_valid
