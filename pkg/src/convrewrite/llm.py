"""Chat-completion backends, on-disk response cache and output post-processing."""

from __future__ import annotations

import hashlib
import json
import logging
import os
import random
import re
import threading
import time
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Protocol, Sequence

import httpx

from .prompts import ANSWER_DIRECTIVE, ANSWER_MARKER, ChatMessage, get_template, utterance_of

logger = logging.getLogger(__name__)

API_KEY_ENV = "CONVO_REWRITE_API_KEY"
DEFAULT_ENDPOINT = "https://api.openai.com/v1/chat/completions"
DEFAULT_MODEL = "gpt-3.5-turbo"


class BackendError(RuntimeError):
    """A completion could not be obtained."""

    def __init__(self, message, turn_key=None):
        self.turn_key = turn_key
        if turn_key:
            message = f"{turn_key}: {message}"
        super().__init__(message)


class PostprocessError(ValueError):
    def __init__(self, message, raw_output):
        super().__init__(f"{message}; raw output was {raw_output!r}")
        self.raw_output = raw_output


@dataclass(frozen=True)
class CompletionParams:
    model_name: str = DEFAULT_MODEL
    temperature: float = 0.0
    max_output_tokens: int = 256
    timeout: float = 60.0

    def __post_init__(self):
        if not 0.0 <= self.temperature <= 2.0:
            raise ValueError(f"temperature must lie in [0, 2], got {self.temperature}")
        if int(self.max_output_tokens) != self.max_output_tokens or self.max_output_tokens < 16:
            raise ValueError(f"max_output_tokens must be an integer >= 16, got {self.max_output_tokens}")
        if self.timeout <= 0:
            raise ValueError("timeout must be positive")


def _as_dicts(messages) -> list[dict]:
    return [m.to_dict() if isinstance(m, ChatMessage) else {"role": m["role"], "content": m["content"]}
            for m in messages]


def cache_key(messages, params: CompletionParams) -> str:
    """Hex SHA-256 over the canonical request; timeout does not affect output."""
    payload = {
        "messages": _as_dicts(messages),
        "model": params.model_name,
        "temperature": params.temperature,
        "max_tokens": params.max_output_tokens,
    }
    canonical = json.dumps(payload, sort_keys=True, ensure_ascii=False, separators=(",", ":"))
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()


class Backend(Protocol):
    def complete(self, messages: Sequence, params: CompletionParams) -> str: ...


class MockBackend:
    """Deterministic stand-in for a chat model.

    Looks the current utterance up in ``fixture`` (raw -> rewrite) and echoes
    it when absent. If the request asks for an answer line, one is appended,
    taken from ``answers`` (raw -> answer) or else a fixed placeholder.
    """

    def __init__(self, fixture: dict | None = None, answers: dict | None = None):
        self.fixture = dict(fixture or {})
        self.answers = dict(answers or {})
        self.calls = 0
        self._lock = threading.Lock()

    @classmethod
    def from_file(cls, path) -> "MockBackend":
        fixture, answers = {}, {}
        with open(path, encoding="utf-8") as fh:
            for line in fh:
                line = line.rstrip("\r\n")
                if not line.strip() or line.startswith("#"):
                    continue
                cols = line.split("\t")
                if len(cols) < 2:
                    raise ValueError(f"{path}: expected '<raw>\\t<rewrite>' lines")
                fixture[cols[0].strip()] = cols[1].strip()
                if len(cols) > 2 and cols[2].strip():
                    answers[cols[0].strip()] = cols[2].strip()
        return cls(fixture, answers)

    @classmethod
    def from_conversations(cls, conversations) -> "MockBackend":
        fixture = {}
        for conv in conversations:
            for t in conv.turns:
                if t.manual is None:
                    continue
                if fixture.get(t.raw, t.manual) != t.manual:
                    logger.warning("mock fixture: %r maps to several manual rewrites; keeping the first",
                                   t.raw)
                    continue
                fixture[t.raw] = t.manual
        return cls(fixture)

    def complete(self, messages, params: CompletionParams | None = None) -> str:
        with self._lock:
            self.calls += 1
        utterance = utterance_of(messages).strip()
        rewrite = self.fixture.get(utterance, utterance)
        final = messages[-1].content if isinstance(messages[-1], ChatMessage) else messages[-1]["content"]
        if ANSWER_DIRECTIVE in final:
            answer = self.answers.get(utterance, f"Mock answer about: {rewrite}")
            return f"{rewrite}\n{ANSWER_MARKER} {answer}"
        return rewrite


class HttpBackend:
    """Client for an OpenAI-compatible chat-completions endpoint.

    Transport errors, HTTP 429 and 5xx responses are retried up to
    ``max_attempts`` times with jittered exponential backoff. At most
    ``max_concurrency`` requests are in flight at once.
    """

    retry_statuses = frozenset({429, 500, 502, 503, 504})

    def __init__(self, endpoint: str = DEFAULT_ENDPOINT, api_key: str | None = None,
                 max_attempts: int = 5, backoff_base: float = 1.0, max_concurrency: int = 4,
                 transport: httpx.BaseTransport | None = None, sleep=time.sleep, rng=None):
        if api_key is None:
            api_key = os.environ.get(API_KEY_ENV)
        if not api_key:
            raise BackendError(f"environment variable {API_KEY_ENV} is not set")
        self.endpoint = endpoint
        self.max_attempts = max_attempts
        self.backoff_base = backoff_base
        self._headers = {"Authorization": f"Bearer {api_key}"}
        self._client = httpx.Client(transport=transport)
        self._slots = threading.BoundedSemaphore(max_concurrency)
        self._sleep = sleep
        self._rng = rng or random.Random()
        self.calls = 0

    @staticmethod
    def payload(messages, params: CompletionParams) -> dict:
        return {
            "model": params.model_name,
            "temperature": params.temperature,
            "max_tokens": params.max_output_tokens,
            "messages": _as_dicts(messages),
        }

    def _delay(self, attempt: int) -> float:
        return self.backoff_base * (2 ** attempt) * (0.5 + self._rng.random())

    def complete(self, messages, params: CompletionParams) -> str:
        body = self.payload(messages, params)
        last_error = None
        for attempt in range(self.max_attempts):
            if attempt:
                self._sleep(self._delay(attempt - 1))
            try:
                with self._slots:
                    self.calls += 1
                    response = self._client.post(self.endpoint, json=body, headers=self._headers,
                                                 timeout=params.timeout)
            except httpx.TransportError as exc:
                last_error = f"transport error: {exc}"
                logger.warning("attempt %d/%d failed: %s", attempt + 1, self.max_attempts, last_error)
                continue
            if response.status_code in self.retry_statuses:
                last_error = f"HTTP {response.status_code}"
                logger.warning("attempt %d/%d failed: %s", attempt + 1, self.max_attempts, last_error)
                continue
            if not 200 <= response.status_code < 300:
                raise BackendError(f"HTTP {response.status_code}: {response.text[:200]}")
            return self._extract(response)
        raise BackendError(f"giving up after {self.max_attempts} attempts ({last_error})")

    @staticmethod
    def _extract(response: httpx.Response) -> str:
        try:
            text = response.json()["choices"][0]["message"]["content"]
        except (ValueError, KeyError, IndexError, TypeError) as exc:
            raise BackendError(f"malformed response body: {response.text[:200]!r}") from exc
        if not isinstance(text, str) or not text.strip():
            raise BackendError("empty completion")
        return text

    def close(self):
        self._client.close()


_CACHE_MAGIC = "convrewrite-cache v1"


class ResponseCache:
    """One file per request digest under ``<root>/<aa>/<bb>/<digest>``.

    The file starts with a small header (magic line, ``key: value`` lines,
    blank line) followed by the raw response text.
    """

    def __init__(self, root):
        self.root = Path(root)

    def path_for(self, digest: str) -> Path:
        return self.root / digest[:2] / digest[2:4] / digest

    def get(self, digest: str) -> str | None:
        path = self.path_for(digest)
        if not path.exists():
            return None
        try:
            text = path.read_text(encoding="utf-8")
            header, sep, body = text.partition("\n\n")
            lines = header.split("\n")
            meta = dict(line.split(": ", 1) for line in lines[1:])
            if lines[0] != _CACHE_MAGIC or not sep or meta.get("digest") != digest:
                raise ValueError("bad header")
            if int(meta["length"]) != len(body):
                raise ValueError("truncated body")
        except (OSError, UnicodeDecodeError, ValueError, KeyError) as exc:
            logger.warning("ignoring corrupt cache entry %s (%s)", path, exc)
            return None
        return body

    def put(self, digest: str, text: str, params: CompletionParams | None = None) -> None:
        path = self.path_for(digest)
        path.parent.mkdir(parents=True, exist_ok=True)
        header = [_CACHE_MAGIC, f"digest: {digest}", f"length: {len(text)}"]
        if params is not None:
            header.append(f"model: {params.model_name}")
            header.append(f"temperature: {params.temperature}")
            header.append(f"max_tokens: {params.max_output_tokens}")
        # write-then-rename so concurrent writers never expose a partial file
        tmp = path.with_name(f"{path.name}.{os.getpid()}.{threading.get_ident()}.tmp")
        tmp.write_text("\n".join(header) + "\n\n" + text, encoding="utf-8")
        os.replace(tmp, path)

    def __len__(self):
        return sum(1 for p in self.root.glob("*/*/*") if p.is_file() and not p.name.endswith(".tmp"))


def complete_cached(messages, params: CompletionParams, cache: ResponseCache, backend) -> str:
    digest = cache_key(messages, params)
    hit = cache.get(digest)
    if hit is not None:
        return hit
    text = backend.complete(messages, params)
    cache.put(digest, text, params)
    return text


class CachedBackend:
    """Wrap a backend so repeated requests are served from disk."""

    def __init__(self, backend, cache: ResponseCache):
        self.backend = backend
        self.cache = cache
        self.hits = 0
        self.misses = 0

    def complete(self, messages, params: CompletionParams) -> str:
        digest = cache_key(messages, params)
        hit = self.cache.get(digest)
        if hit is not None:
            self.hits += 1
            return hit
        self.misses += 1
        text = self.backend.complete(messages, params)
        self.cache.put(digest, text, params)
        return text


_LABEL_RE = re.compile(r"^\s*(?:rewritten(?:\s+question)?|reformulated(?:\s+question)?|question)\s*:\s*",
                       re.IGNORECASE)
_QUOTES = ('"', "'", "“”", "‘’")


def _strip_quotes(text: str) -> str:
    if len(text) >= 2:
        for q in _QUOTES:
            open_q, close_q = (q, q) if len(q) == 1 else (q[0], q[1])
            if text[0] == open_q and text[-1] == close_q:
                return text[1:-1]
    return text


def postprocess(raw_output: str, template_id: str = "P5",
                uses_answers: bool | None = None) -> tuple[str, str | None]:
    """Extract ``(rewrite, answer)`` from raw model output.

    For templates that ask for an answer the output is split at the first
    line starting with ``Answer:``. Labels such as ``Rewritten:`` and
    enclosing quotes are then removed until nothing changes, and newlines
    are folded into spaces.
    """
    if not raw_output or not raw_output.strip():
        raise PostprocessError("empty model output", raw_output)
    if uses_answers is None:
        uses_answers = get_template(template_id).uses_answers

    source, answer = raw_output, None
    if uses_answers:
        lines = raw_output.splitlines()
        for i, line in enumerate(lines):
            if line.strip().startswith(ANSWER_MARKER):
                source = "\n".join(lines[:i])
                rest = [line.strip()[len(ANSWER_MARKER):]] + lines[i + 1:]
                answer = " ".join(" ".join(rest).split()) or None
                break

    text = " ".join(source.split())
    while True:
        before = text
        text = _LABEL_RE.sub("", text, count=1).strip()
        text = _strip_quotes(text).strip()
        if text == before:
            break
    if not text:
        raise PostprocessError("no rewritten utterance left after post-processing", raw_output)
    return text, answer


def params_dict(params: CompletionParams) -> dict:
    return asdict(params)
