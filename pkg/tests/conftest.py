"""Shared fixtures: canonical study data, corpus builders, and a mock endpoint."""

from __future__ import annotations

import json
import re
import threading
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from pathlib import Path

import pytest

from evisynth import (
    BinaryArms,
    ContinuousArms,
    PredictionRecord,
    StudyRecord,
    estimate,
    save_corpus,
    save_predictions,
    serialize_outcome,
)

HAWKEY = BinaryArms(8, 23, 2, 22)
DICKER = ContinuousArms(5.22, 2.22, 48, 3.08, 1.81, 51)

HAWKEY_RESPONSE = (
    "<think>The trial reports 8 of 23 in remission with transplantation "
    "versus 2 of 22 with control.</think>\n"
    "outcome_type: binary\n"
    "intervention:\n"
    "events: 8 total: 23\n"
    "comparator:\n"
    "events: 2 total: 22"
)


def make_record(record_id: str, data, *, comparison: str | None = None,
                outcome: str | None = None, text: str | None = None) -> StudyRecord:
    est, conclusion = estimate(data)
    return StudyRecord(
        id=record_id,
        study_text=text or f"Synthetic trial text for {record_id}.",
        comparison=comparison or f"Arm A versus arm B ({record_id})",
        outcome_name=outcome or f"Outcome for {record_id}",
        outcome_type="binary" if isinstance(data, BinaryArms) else "continuous",
        gold_data=data,
        gold_point=round(est.point, 2) if est.estimable else 0.0,
        gold_ci=((round(est.ci_low, 2), round(est.ci_high, 2))
                 if est.estimable else (0.0, 0.0)),
        gold_conclusion=conclusion,
    )


def perfect_response(data, thought: str = "Reading the numbers from the table.") -> str:
    return f"<think>{thought}</think>\n{serialize_outcome(data)}"


def write_corpus(directory: Path, records, name: str = "corpus.jsonl") -> Path:
    path = directory / name
    save_corpus(records, path)
    return path


def write_predictions(directory: Path, predictions,
                      name: str = "predictions.jsonl") -> Path:
    path = directory / name
    save_predictions(predictions, path)
    return path


@pytest.fixture
def hawkey_record() -> StudyRecord:
    return make_record("hawkey-2015", HAWKEY,
                       comparison="Stem cell transplantation versus control",
                       outcome="Sustained disease remission")


@pytest.fixture
def dicker_record() -> StudyRecord:
    return make_record("dicker-1992", DICKER,
                       comparison="Programme versus usual care",
                       outcome="Adherence score change")


def random_binary(rng, allow_zero: bool = False) -> BinaryArms:
    def arm():
        total = rng.randint(1, 500)
        low = 0 if allow_zero else min(1, total)
        return rng.randint(low, total), total
    events_t, total_t = arm()
    events_c, total_c = arm()
    return BinaryArms(events_t, total_t, events_c, total_c)


def random_continuous(rng) -> ContinuousArms:
    return ContinuousArms(
        rng.uniform(-50, 50), rng.uniform(0, 20), rng.randint(1, 500),
        rng.uniform(-50, 50), rng.uniform(0, 20), rng.randint(1, 500))


class MockEndpoint:
    """Tiny threaded chat-completion server for gateway tests.

    ``respond`` receives the decoded request payload and returns either a
    completion string (wrapped into the wire format with status 200) or a
    ``(status, raw_body)`` pair for failure scripting.
    """

    def __init__(self, respond):
        self.respond = respond
        self.requests: list[tuple[dict, dict]] = []
        self.max_in_flight = 0
        self._in_flight = 0
        self._lock = threading.Lock()
        outer = self

        class Handler(BaseHTTPRequestHandler):
            def do_POST(self) -> None:  # noqa: N802 (http.server API)
                with outer._lock:
                    outer._in_flight += 1
                    outer.max_in_flight = max(outer.max_in_flight, outer._in_flight)
                try:
                    length = int(self.headers.get("Content-Length", 0))
                    payload = json.loads(self.rfile.read(length) or b"{}")
                    with outer._lock:
                        outer.requests.append((payload, dict(self.headers)))
                    result = outer.respond(payload)
                    if isinstance(result, tuple):
                        status, body = result
                    else:
                        status = 200
                        body = json.dumps(
                            {"choices": [{"message": {"content": result}}]})
                    data = body.encode("utf-8")
                    self.send_response(status)
                    self.send_header("Content-Type", "application/json")
                    self.send_header("Content-Length", str(len(data)))
                    self.end_headers()
                    self.wfile.write(data)
                finally:
                    with outer._lock:
                        outer._in_flight -= 1

            def log_message(self, *args) -> None:
                pass

        class QuietServer(ThreadingHTTPServer):
            def handle_error(self, request, client_address) -> None:
                pass  # client hangups are expected in timeout tests

        self._server = QuietServer(("127.0.0.1", 0), Handler)
        self._thread = threading.Thread(target=self._server.serve_forever, daemon=True)

    @property
    def url(self) -> str:
        host, port = self._server.server_address
        return f"http://{host}:{port}/v1/chat/completions"

    def __enter__(self) -> "MockEndpoint":
        self._thread.start()
        return self

    def __exit__(self, *exc) -> None:
        self._server.shutdown()
        self._server.server_close()


def extraction_responder(records):
    """Responder that answers each prompt with its record's gold block."""
    by_comparison = {record.comparison: record for record in records}

    def respond(payload):
        content = payload["messages"][0]["content"]
        match = re.search(r"^Comparison: (.+)$", content, re.MULTILINE)
        record = by_comparison[match.group(1)]
        return perfect_response(record.gold_data)

    return respond


def make_prediction(record, response: str) -> PredictionRecord:
    return PredictionRecord(record.id, response)
