"""HTTP client for a chat-completion endpoint serving the extraction prompt."""

from __future__ import annotations

import logging
import time
from concurrent.futures import ThreadPoolExecutor, as_completed
from dataclasses import dataclass, field
from typing import Sequence

import requests

from .corpus import PredictionRecord, StudyRecord
from .errors import ValidationError

logger = logging.getLogger(__name__)

ENV_ENDPOINT = "EVISYNTH_ENDPOINT"
ENV_MODEL = "EVISYNTH_MODEL"
ENV_TOKEN = "EVISYNTH_TOKEN"

RETRYABLE_STATUS = frozenset({429, 500, 502, 503, 504})

PROMPT_TEMPLATE = """Articles: {articles}

Question: Based on the given trial articles, what is the outcome type and corresponding numerical data for the following Comparison and Outcome?

Comparison: {comparison}
Outcome: {outcome}

First, determine and output the outcome_type as either: binary or continuous

Then, provide the extracted data in format as follows:
If the outcome is binary, use this format:

outcome_type: binary
intervention:
events: NUMBER total: NUMBER
comparator:
events: NUMBER total: NUMBER

If the outcome is continuous, use this format:

outcome_type: continuous
intervention:
mean: NUMBER standard_deviation: NUMBER group_size: NUMBER

comparator:
mean: NUMBER standard_deviation: NUMBER group_size: NUMBER

Use post-intervention data when both pre and post are available. If multiple timepoints are reported, choose the one closest to the timepoint of interest, or the latest available.
Think about it step by step."""


class GatewayError(Exception):
    """Base class for completion-service failures."""


class NetworkError(GatewayError):
    """The endpoint could not be reached."""


class CompletionTimeout(GatewayError):
    """The endpoint did not answer within the configured timeout."""


class HTTPStatusError(GatewayError):
    """The endpoint answered with a non-success status."""

    def __init__(self, status: int, detail: str):
        super().__init__(f"HTTP {status}: {detail}")
        self.status = status


class MalformedResponse(GatewayError):
    """The endpoint answered 200 but not with a usable completion."""


@dataclass
class GatewayConfig:
    """Connection settings; the auth token is kept out of repr and logs."""

    endpoint_url: str
    model_name: str
    temperature: float = 0.7
    max_tokens: int = 2048
    timeout_s: int = 60
    max_retries: int = 3
    auth_token: str = field(default="", repr=False)

    def __post_init__(self) -> None:
        if not self.endpoint_url:
            raise ValidationError("endpoint_url must be nonempty")
        if not self.model_name:
            raise ValidationError("model_name must be nonempty")
        if self.temperature < 0:
            raise ValidationError("temperature must be nonnegative")
        if self.max_tokens < 1:
            raise ValidationError("max_tokens must be at least 1")
        if self.timeout_s < 1:
            raise ValidationError("timeout_s must be at least 1")
        if self.max_retries < 0:
            raise ValidationError("max_retries must be nonnegative")

    @classmethod
    def from_env(cls, **overrides) -> "GatewayConfig":
        """Build a config from EVISYNTH_* variables, letting overrides win."""
        import os

        settings = {
            "endpoint_url": os.environ.get(ENV_ENDPOINT, ""),
            "model_name": os.environ.get(ENV_MODEL, ""),
            "auth_token": os.environ.get(ENV_TOKEN, ""),
        }
        settings.update({k: v for k, v in overrides.items() if v is not None})
        return cls(**settings)


def build_prompt(record: StudyRecord) -> str:
    """Instantiate the extraction prompt for one study."""
    parts = {"articles": record.study_text, "comparison": record.comparison,
             "outcome": record.outcome_name}
    for name, value in parts.items():
        if not value.strip():
            raise ValidationError(f"prompt field {name!r} is empty")
    return PROMPT_TEMPLATE.format(**parts)


def complete(config: GatewayConfig, prompt: str, *, backoff_s: float = 0.5) -> str:
    """Request one completion, retrying transient failures with exponential backoff.

    Retries cover connection errors, timeouts, and retryable statuses
    (429/5xx) up to ``max_retries`` extra attempts; other client errors fail
    immediately. Raises a GatewayError subclass naming the failure mode.
    """
    if not prompt:
        raise ValidationError("prompt must be nonempty")
    payload = {
        "model": config.model_name,
        "messages": [{"role": "user", "content": prompt}],
        "temperature": config.temperature,
        "max_tokens": config.max_tokens,
    }
    headers = {}
    if config.auth_token:
        headers["Authorization"] = f"Bearer {config.auth_token}"
    last_error: GatewayError | None = None
    for attempt in range(config.max_retries + 1):
        if attempt:
            time.sleep(backoff_s * 2 ** (attempt - 1))
        try:
            response = requests.post(config.endpoint_url, json=payload,
                                     headers=headers, timeout=config.timeout_s)
        except requests.Timeout as exc:
            last_error = CompletionTimeout(str(exc))
            continue
        except requests.ConnectionError as exc:
            last_error = NetworkError(str(exc))
            continue
        except requests.RequestException as exc:
            raise NetworkError(str(exc)) from exc
        if response.status_code in RETRYABLE_STATUS:
            last_error = HTTPStatusError(response.status_code, response.text[:200])
            continue
        if not 200 <= response.status_code < 300:
            raise HTTPStatusError(response.status_code, response.text[:200])
        try:
            content = response.json()["choices"][0]["message"]["content"]
        except (ValueError, KeyError, IndexError, TypeError) as exc:
            raise MalformedResponse(f"unexpected response shape: {exc}") from exc
        if not isinstance(content, str):
            raise MalformedResponse("completion content is not a string")
        return content
    assert last_error is not None
    raise last_error


def run_batch(config: GatewayConfig, corpus: Sequence[StudyRecord],
              concurrency: int = 4, *, backoff_s: float = 0.5,
              ) -> list[PredictionRecord]:
    """Fetch completions for a corpus with a bounded worker pool.

    Output order matches the input corpus. Studies whose request ultimately
    fails are kept with an empty ``raw_response`` and logged, so a batch is
    never silently shortened.
    """
    if concurrency < 1:
        raise ValidationError("concurrency must be at least 1")
    responses = [""] * len(corpus)

    def fetch(record: StudyRecord) -> str:
        return complete(config, build_prompt(record), backoff_s=backoff_s)

    with ThreadPoolExecutor(max_workers=concurrency) as pool:
        futures = {pool.submit(fetch, record): index
                   for index, record in enumerate(corpus)}
        for future in as_completed(futures):
            index = futures[future]
            try:
                responses[index] = future.result()
            except (GatewayError, ValidationError) as exc:
                logger.warning("completion failed for %s: %s", corpus[index].id, exc)
    return [PredictionRecord(record.id, responses[index])
            for index, record in enumerate(corpus)]
