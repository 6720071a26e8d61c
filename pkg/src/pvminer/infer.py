"""Chat-completions client with deterministic decoding, caching, and retry.

Requests go to any server speaking the common chat-completions wire shape
(``model``, ``messages``, ``temperature``, ``max_tokens``, ``stop``). The
rendered prompt is sent as a single user message; role text lives inside
the prompt itself. Completions are cached content-addressed on
(model, decoding config, prompt), so interrupted batch runs resume from
disk and repeated runs are pure functions of their inputs.
"""

from __future__ import annotations

import hashlib
import json
import logging
import threading
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Mapping, Sequence

import httpx

from .codebook import Codebook
from .corpus import GoldRecord
from .prompt import PromptTemplate, render_prompt

logger = logging.getLogger(__name__)

# Rough pre-check only; authoritative token counting is the server's job.
_CHARS_PER_TOKEN = 4


class InferenceError(RuntimeError):
    pass


class EndpointUnreachable(InferenceError):
    pass


class HttpError(InferenceError):
    def __init__(self, status: int, body: str = ""):
        super().__init__(f"HTTP {status}: {body[:200]}")
        self.status = status


class TimeoutExceeded(InferenceError):
    pass


class ContextOverflow(InferenceError):
    pass


@dataclass(frozen=True)
class DecodingConfig:
    """Deterministic decoding contract: greedy, capped generation, stop string."""

    temperature: float = 0.0
    do_sample: bool = False
    max_new_tokens: int = 1024
    stop: tuple[str, ...] = ("JSON_END",)
    max_context_tokens: int = 8096
    paper_faithful: bool = True

    def __post_init__(self):
        if self.max_new_tokens < 1:
            raise ValueError("max_new_tokens must be >= 1")
        if self.paper_faithful and (self.temperature != 0.0 or self.do_sample):
            raise ValueError("faithful mode requires temperature 0 and no sampling")

    def for_few_shot(self, max_context_tokens: int = 16384) -> "DecodingConfig":
        return replace(self, max_context_tokens=max_context_tokens)

    def key_dict(self) -> dict:
        return {
            "temperature": self.temperature,
            "do_sample": self.do_sample,
            "max_new_tokens": self.max_new_tokens,
            "stop": list(self.stop),
            "max_context_tokens": self.max_context_tokens,
        }


@dataclass(frozen=True)
class EndpointConfig:
    base_url: str
    model: str
    api_key: str | None = None
    timeout: float = 120.0
    max_attempts: int = 3
    backoff: float = 0.5


class InferenceRecordCache:
    """Content-addressed completion store on local disk.

    Keyed by hash(model, decoding config, prompt); the full prompt is
    stored alongside the completion and compared on read to rule out hash
    collisions. Concurrent readers are safe; writes are serialized.
    """

    def __init__(self, directory: str | Path):
        self.directory = Path(directory)
        self.directory.mkdir(parents=True, exist_ok=True)
        self._lock = threading.Lock()

    @staticmethod
    def key(model: str, cfg: DecodingConfig, prompt: str) -> str:
        blob = json.dumps(
            {"model": model, "config": cfg.key_dict(), "prompt": prompt},
            sort_keys=True,
            ensure_ascii=False,
        ).encode("utf-8")
        return hashlib.sha256(blob).hexdigest()

    def _path(self, key: str) -> Path:
        return self.directory / f"{key}.json"

    def get(self, model: str, cfg: DecodingConfig, prompt: str) -> str | None:
        path = self._path(self.key(model, cfg, prompt))
        if not path.exists():
            return None
        doc = json.loads(path.read_text(encoding="utf-8"))
        if doc.get("prompt") != prompt:
            logger.warning("cache key collision at %s; ignoring entry", path.name)
            return None
        return doc["completion"]

    def put(self, model: str, cfg: DecodingConfig, prompt: str, completion: str,
            latency: float) -> None:
        doc = {
            "prompt": prompt,
            "completion": completion,
            "latency": latency,
            "timestamp": time.time(),
            "model": model,
            "config": cfg.key_dict(),
        }
        path = self._path(self.key(model, cfg, prompt))
        with self._lock:
            tmp = path.with_suffix(".tmp")
            tmp.write_text(json.dumps(doc, ensure_ascii=False), encoding="utf-8")
            tmp.replace(path)


def _strip_stops(text: str, stops: Sequence[str]) -> str:
    for stop in stops:
        idx = text.find(stop)
        if idx >= 0:
            text = text[:idx]
    return text


def complete(
    endpoint: EndpointConfig,
    prompt: str,
    cfg: DecodingConfig,
    cache: InferenceRecordCache | None = None,
    client: httpx.Client | None = None,
) -> str:
    """Complete one prompt, consulting the cache first.

    Transient failures (connection errors, HTTP 5xx/429) are retried with
    capped exponential backoff up to ``endpoint.max_attempts``.
    """
    if not prompt:
        raise ValueError("prompt must be non-empty")
    if cache is not None:
        hit = cache.get(endpoint.model, cfg, prompt)
        if hit is not None:
            return hit
    if len(prompt) > cfg.max_context_tokens * _CHARS_PER_TOKEN:
        logger.warning(
            "prompt length %d chars likely exceeds %d-token context",
            len(prompt), cfg.max_context_tokens,
        )

    payload = {
        "model": endpoint.model,
        "messages": [{"role": "user", "content": prompt}],
        "temperature": cfg.temperature,
        "max_tokens": cfg.max_new_tokens,
        "stop": list(cfg.stop),
    }
    headers = {"Content-Type": "application/json"}
    if endpoint.api_key:
        headers["Authorization"] = f"Bearer {endpoint.api_key}"
    url = endpoint.base_url.rstrip("/") + "/chat/completions"

    own_client = client is None
    http = client or httpx.Client(timeout=endpoint.timeout)
    started = time.monotonic()
    try:
        last_exc: Exception | None = None
        for attempt in range(endpoint.max_attempts):
            if attempt:
                time.sleep(min(endpoint.backoff * 2 ** (attempt - 1), 8.0))
            try:
                resp = http.post(url, json=payload, headers=headers)
            except httpx.TimeoutException as exc:
                last_exc = TimeoutExceeded(str(exc))
                continue
            except httpx.HTTPError as exc:
                last_exc = EndpointUnreachable(str(exc))
                continue
            if resp.status_code in (429,) or resp.status_code >= 500:
                last_exc = HttpError(resp.status_code, resp.text)
                continue
            if resp.status_code >= 400:
                body = resp.text
                if "context" in body.lower() and "length" in body.lower():
                    raise ContextOverflow(body[:500])
                raise HttpError(resp.status_code, body)
            doc = resp.json()
            text = doc["choices"][0]["message"]["content"]
            text = _strip_stops(text, cfg.stop)
            if cache is not None:
                cache.put(endpoint.model, cfg, prompt, text,
                          latency=time.monotonic() - started)
            return text
        raise last_exc if last_exc is not None else EndpointUnreachable("no attempts made")
    finally:
        if own_client:
            http.close()


@dataclass
class BatchResult:
    completions: dict[str, str] = field(default_factory=dict)
    failures: dict[str, str] = field(default_factory=dict)


def batch_run(
    records: Sequence[GoldRecord],
    template: PromptTemplate,
    cb: Codebook,
    endpoint: EndpointConfig,
    cfg: DecodingConfig,
    cache: InferenceRecordCache | None = None,
    concurrency: int = 1,
    shots=(),
    client: httpx.Client | None = None,
) -> BatchResult:
    """Render and complete prompts for a record batch with bounded concurrency.

    Per-record failures are collected, never raised; completed prompts are
    persisted through the cache so an interrupted run resumes from disk.
    """
    if concurrency < 1:
        raise ValueError("concurrency must be positive")
    result = BatchResult()

    def one(record: GoldRecord) -> tuple[str, str | None, str | None]:
        prompt = render_prompt(template, cb, record.message, shots)
        try:
            return record.id, complete(endpoint, prompt, cfg, cache, client), None
        except Exception as exc:
            return record.id, None, f"{type(exc).__name__}: {exc}"

    with ThreadPoolExecutor(max_workers=concurrency) as pool:
        for record_id, completion, error in pool.map(one, records):
            if error is None:
                result.completions[record_id] = completion
            else:
                result.failures[record_id] = error
    return result
