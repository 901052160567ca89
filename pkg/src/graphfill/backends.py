"""Completion backends: remote chat endpoint, deterministic mock, and record/replay.

Every request is self-contained; no backend ever attaches conversation state.
"""

from __future__ import annotations

import hashlib
import json
import logging
import os
import threading
import time
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from ._format import format_value
from .messenger import NodeTask

logger = logging.getLogger(__name__)

__all__ = [
    "CompletionRequest",
    "BackendConfig",
    "BackendError",
    "BackendUnavailableError",
    "ReplayMissError",
    "TransportFailure",
    "BatchFailure",
    "Backend",
    "MockBackend",
    "ReplayBackend",
    "RecordingBackend",
    "RemoteBackend",
    "make_backend",
    "complete",
    "batch_complete",
    "mock_predict",
    "prompt_sha256",
    "read_replay_file",
    "append_replay_record",
]

BACKEND_KINDS = ("remote", "mock", "replay")
DEFAULT_ENDPOINT = "https://api.openai.com/v1/chat/completions"


class BackendError(Exception):
    """Base class for completion backend failures."""


class BackendUnavailableError(BackendError):
    """The backend could not produce a response (retries exhausted or hard failure)."""


class ReplayMissError(BackendError):
    """The replay file has no record for the requested prompt."""


class TransportFailure(Exception):
    """Connection-level failure (timeout, refused connection); retryable."""


@dataclass(frozen=True)
class CompletionRequest:
    """One self-contained completion call; never carries conversation history."""

    prompt: str
    model: str = "gpt-3.5-turbo"
    temperature: float = 0.0
    max_tokens: int = 16
    request_id: str = ""

    def __post_init__(self):
        if float(self.temperature) < 0:
            raise ValueError("temperature must be nonnegative")
        if int(self.max_tokens) < 1:
            raise ValueError("max_tokens must be at least 1")


@dataclass(frozen=True)
class BackendConfig:
    """Which backend to use and how. The credential is named, never stored."""

    kind: str
    endpoint: str = DEFAULT_ENDPOINT
    credential_env: str = "OPENAI_API_KEY"
    timeout_s: float = 30.0
    max_retries: int = 3
    backoff_base_s: float = 0.5
    max_in_flight: int = 4
    mock_alpha: float = 0.5
    replay_path: str | None = None
    allow_batch: bool = False

    def __post_init__(self):
        if self.kind not in BACKEND_KINDS:
            raise ValueError(f"kind must be one of {BACKEND_KINDS}, got {self.kind!r}")
        if self.kind == "remote" and not self.endpoint:
            raise ValueError("remote backend requires an endpoint URL")
        if self.kind == "remote" and not self.credential_env:
            raise ValueError("remote backend requires a credential environment variable name")
        if self.kind == "replay" and not self.replay_path:
            raise ValueError("replay backend requires a record file path")
        if not 0.0 <= float(self.mock_alpha) <= 1.0:
            raise ValueError(f"mock_alpha must be in [0, 1], got {self.mock_alpha}")
        if int(self.max_in_flight) < 1:
            raise ValueError("max_in_flight must be at least 1")
        if int(self.max_retries) < 0:
            raise ValueError("max_retries must be nonnegative")


def prompt_sha256(prompt: str) -> str:
    return hashlib.sha256(prompt.encode("utf-8")).hexdigest()


def mock_predict(task: NodeTask, alpha: float) -> str:
    """Deterministic stand-in predictor blending temporal and spatial context.

    Returns ``alpha * previous estimate + (1 - alpha) * neighbor mean`` as
    plain decimal text; whichever side is absent drops out and the other takes
    full weight. An infeasible task yields the literal text "NaN" so the
    caller's fallback path is exercised end to end.
    """
    alpha = float(alpha)
    if not 0.0 <= alpha <= 1.0:
        raise ValueError(f"alpha must be in [0, 1], got {alpha}")
    has_prev = task.prev_estimate is not None
    has_neighbors = len(task.neighbor_values) > 0
    if not has_prev and not has_neighbors:
        return "NaN"
    if not has_neighbors:
        value = task.prev_estimate
    elif not has_prev:
        value = float(np.mean([entry.value for entry in task.neighbor_values]))
    else:
        neighbor_mean = float(np.mean([entry.value for entry in task.neighbor_values]))
        value = alpha * task.prev_estimate + (1.0 - alpha) * neighbor_mean
    return format_value(value)


class Backend:
    """Stateless completion source. Subclasses implement ``complete``."""

    kind = "abstract"

    def complete(self, req: CompletionRequest, task: NodeTask | None = None) -> str:
        raise NotImplementedError

    def complete_batch(
        self, reqs: Sequence[CompletionRequest], tasks: Sequence[NodeTask] | None = None
    ) -> list[str]:
        """Default batching: independent per-item calls, so counts always match."""
        out = []
        for i, req in enumerate(reqs):
            task = tasks[i] if tasks is not None else None
            out.append(self.complete(req, task=task))
        return out


class MockBackend(Backend):
    kind = "mock"

    def __init__(self, alpha: float = 0.5):
        if not 0.0 <= float(alpha) <= 1.0:
            raise ValueError(f"alpha must be in [0, 1], got {alpha}")
        self.alpha = float(alpha)

    def complete(self, req: CompletionRequest, task: NodeTask | None = None) -> str:
        if task is None:
            raise ValueError("mock backend needs the node task alongside the request")
        return mock_predict(task, self.alpha)


def read_replay_file(path: str | Path) -> dict[str, str]:
    """Load a line-delimited JSON replay file into a prompt-hash -> response map."""
    path = Path(path)
    records: dict[str, str] = {}
    for lineno, line in enumerate(path.read_text().splitlines(), start=1):
        if not line.strip():
            continue
        try:
            record = json.loads(line)
            records[record["prompt_sha256"]] = record["response_text"]
        except (json.JSONDecodeError, KeyError, TypeError) as exc:
            raise ValueError(f"{path}:{lineno}: bad replay record: {exc}") from None
    return records


def append_replay_record(
    path: str | Path, prompt: str, response_text: str, model: str, temperature: float
) -> None:
    record = {
        "prompt_sha256": prompt_sha256(prompt),
        "response_text": response_text,
        "model": model,
        "temperature": float(temperature),
    }
    with Path(path).open("a") as fh:
        fh.write(json.dumps(record, sort_keys=True) + "\n")


class ReplayBackend(Backend):
    """Replays previously recorded responses keyed by a hash of the prompt."""

    kind = "replay"

    def __init__(self, path: str | Path):
        self.path = Path(path)
        self.responses = read_replay_file(self.path)

    def complete(self, req: CompletionRequest, task: NodeTask | None = None) -> str:
        key = prompt_sha256(req.prompt)
        try:
            return self.responses[key]
        except KeyError:
            raise ReplayMissError(
                f"no recorded response for prompt hash {key[:12]}... (request {req.request_id or 'unnamed'})"
            ) from None


class RecordingBackend(Backend):
    """Wraps another backend and appends every successful response to a replay file."""

    def __init__(self, inner: Backend, path: str | Path):
        self.inner = inner
        self.path = Path(path)
        self.kind = f"record+{inner.kind}"

    def complete(self, req: CompletionRequest, task: NodeTask | None = None) -> str:
        text = self.inner.complete(req, task=task)
        append_replay_record(self.path, req.prompt, text, req.model, req.temperature)
        return text

    def complete_batch(self, reqs, tasks=None):
        texts = self.inner.complete_batch(reqs, tasks=tasks)
        if len(texts) == len(reqs):
            for req, text in zip(reqs, texts):
                append_replay_record(self.path, req.prompt, text, req.model, req.temperature)
        return texts


def _requests_transport(url: str, headers: dict, payload: dict, timeout: float):
    import requests

    try:
        resp = requests.post(url, headers=headers, json=payload, timeout=timeout)
    except (requests.Timeout, requests.ConnectionError) as exc:
        raise TransportFailure(str(exc)) from exc
    try:
        body = resp.json()
    except ValueError:
        body = None
    return resp.status_code, body


Transport = Callable[[str, dict, dict, float], tuple]


class RemoteBackend(Backend):
    """Chat-completions client with retries, backoff, and an in-flight cap.

    Each call posts one stateless request. Transient failures (timeouts,
    HTTP 429, HTTP 5xx) are retried with exponential backoff up to
    ``max_retries``; the in-flight semaphore is held only around the network
    call, so waiting out a backoff never blocks unrelated requests.
    """

    kind = "remote"

    def __init__(
        self,
        cfg: BackendConfig,
        transport: Transport | None = None,
        sleep: Callable[[float], None] = time.sleep,
    ):
        credential = os.environ.get(cfg.credential_env, "")
        if not credential:
            raise BackendUnavailableError(
                f"environment variable {cfg.credential_env} is not set; "
                "export the API credential before using the remote backend"
            )
        self._cfg = cfg
        self._headers = {
            "Authorization": f"Bearer {credential}",
            "Content-Type": "application/json",
        }
        self._transport = transport or _requests_transport
        self._sleep = sleep
        self._in_flight = threading.BoundedSemaphore(cfg.max_in_flight)

    def _post_once(self, payload: dict) -> tuple:
        with self._in_flight:
            return self._transport(self._cfg.endpoint, self._headers, payload, self._cfg.timeout_s)

    def complete(self, req: CompletionRequest, task: NodeTask | None = None) -> str:
        payload = {
            "model": req.model,
            "messages": [{"role": "user", "content": req.prompt}],
            "temperature": req.temperature,
            "max_tokens": req.max_tokens,
        }
        cfg = self._cfg
        last_issue = "no attempt made"
        for attempt in range(cfg.max_retries + 1):
            try:
                status, body = self._post_once(payload)
            except TransportFailure as exc:
                last_issue = f"transport failure: {exc}"
            else:
                if status == 200:
                    text = _extract_message(body)
                    if attempt > 0:
                        logger.info(
                            "request %s succeeded after %d retr%s",
                            req.request_id or "unnamed", attempt, "y" if attempt == 1 else "ies",
                        )
                    return text
                if status == 429 or status >= 500:
                    last_issue = f"HTTP {status}"
                else:
                    raise BackendUnavailableError(
                        f"request {req.request_id or 'unnamed'} failed with HTTP {status}"
                    )
            if attempt < cfg.max_retries:
                delay = cfg.backoff_base_s * (2.0**attempt)
                logger.info(
                    "retrying request %s after %s (attempt %d of %d, backoff %.2fs)",
                    req.request_id or "unnamed", last_issue, attempt + 1, cfg.max_retries, delay,
                )
                self._sleep(delay)
        raise BackendUnavailableError(
            f"request {req.request_id or 'unnamed'}: retries exhausted ({last_issue})"
        )

    def complete_batch(self, reqs, tasks=None):
        """Single call carrying every prompt; replies are split on lines.

        Unreliable by nature (the response count is not guaranteed); callers
        must go through :func:`batch_complete` for the count guard.
        """
        if not reqs:
            return []
        joined = []
        for i, req in enumerate(reqs):
            joined.append(f"Task {i + 1} of {len(reqs)}:\n{req.prompt}")
        combined = (
            "\n\n".join(joined)
            + f"\n\nReply with exactly {len(reqs)} lines, one decimal number per line, in task order."
        )
        first = reqs[0]
        batch_req = CompletionRequest(
            prompt=combined,
            model=first.model,
            temperature=first.temperature,
            max_tokens=max(first.max_tokens * len(reqs), first.max_tokens),
            request_id=f"batch[{first.request_id}+{len(reqs) - 1}]",
        )
        text = self.complete(batch_req)
        return [line for line in (ln.strip() for ln in text.splitlines()) if line]


def _extract_message(body) -> str:
    try:
        return body["choices"][0]["message"]["content"]
    except (TypeError, KeyError, IndexError):
        raise BackendUnavailableError(f"malformed completion response: {body!r}") from None


def make_backend(
    cfg: BackendConfig,
    transport: Transport | None = None,
    sleep: Callable[[float], None] = time.sleep,
) -> Backend:
    if cfg.kind == "mock":
        return MockBackend(cfg.mock_alpha)
    if cfg.kind == "replay":
        return ReplayBackend(cfg.replay_path)
    return RemoteBackend(cfg, transport=transport, sleep=sleep)


def complete(
    req: CompletionRequest,
    cfg: BackendConfig,
    task: NodeTask | None = None,
    backend: Backend | None = None,
) -> str:
    """One completion through the configured backend (convenience wrapper)."""
    return (backend or make_backend(cfg)).complete(req, task=task)


@dataclass(frozen=True)
class BatchFailure:
    """Per-item marker for a failed batch entry; the caller substitutes a fallback."""

    reason: str


def batch_complete(
    reqs: Sequence[CompletionRequest],
    cfg: BackendConfig,
    backend: Backend | None = None,
    tasks: Sequence[NodeTask] | None = None,
) -> list:
    """Batched completion with the response-count guard.

    Batching must be explicitly enabled in the config. If the backend returns
    a different number of responses than requests, every item in the batch is
    marked failed and a diagnostic is logged; responses are never realigned.
    """
    if not cfg.allow_batch:
        raise ValueError("batching is disabled; set allow_batch=True to opt in")
    reqs = list(reqs)
    if not reqs:
        return []
    backend = backend or make_backend(cfg)
    try:
        texts = backend.complete_batch(reqs, tasks=tasks)
    except BackendError as exc:
        logger.warning("batch of %d requests failed outright: %s", len(reqs), exc)
        return [BatchFailure(reason=f"batch backend failure: {exc}")] * len(reqs)
    if len(texts) != len(reqs):
        logger.warning(
            "batch count mismatch: %d requests but %d responses; failing every item",
            len(reqs), len(texts),
        )
        reason = f"batch count mismatch: {len(reqs)} requests, {len(texts)} responses"
        return [BatchFailure(reason=reason)] * len(reqs)
    return list(texts)
