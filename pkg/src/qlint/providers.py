"""Chat-completion and embedding clients, plus offline replay and test doubles.

The wire shape is the common chat-completions / embeddings JSON schema, so a
real endpoint and a recorded fixture directory are interchangeable.  API keys
are read from the environment at request time and never stored or logged.
"""

from __future__ import annotations

import hashlib
import json
import logging
import math
import os
import re
import struct
import threading
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Callable, Protocol, Sequence

import httpx

from .errors import DimensionMismatch, ProviderError

log = logging.getLogger(__name__)

DEFAULT_KEY_ENV = "QLINT_API_KEY"

Message = dict[str, str]


@dataclass(frozen=True)
class ProviderConfig:
    endpoint: str = "https://api.openai.com/v1/chat/completions"
    model: str = "gpt-5"
    key_env: str = DEFAULT_KEY_ENV
    timeout: float = 120.0
    max_retries: int = 2
    max_concurrency: int = 4
    dimension: int | None = None
    backoff: float = 1.0

    def __post_init__(self) -> None:
        if self.timeout <= 0:
            raise ValueError("timeout must be positive")
        if self.max_retries < 0:
            raise ValueError("max_retries must be >= 0")
        if self.max_concurrency < 1:
            raise ValueError("max_concurrency must be >= 1")

    @classmethod
    def from_dict(cls, data: dict) -> "ProviderConfig":
        known = {f for f in cls.__dataclass_fields__}
        unknown = set(data) - known
        if unknown:
            raise ValueError(f"unknown provider config keys: {sorted(unknown)}")
        return cls(**data)

    def to_dict(self) -> dict:
        return asdict(self)

    def api_key(self) -> str:
        key = os.environ.get(self.key_env)
        if not key:
            raise ProviderError(f"environment variable {self.key_env} is not set", kind="auth")
        return key


class ChatProvider(Protocol):
    def complete(self, messages: Sequence[Message]) -> str: ...


class Embedder(Protocol):
    dimension: int

    def embed(self, text: str) -> list[float]: ...


_RETRYABLE_STATUS = {408, 409, 425, 429, 500, 502, 503, 504}


class _HttpClient:
    def __init__(self, config: ProviderConfig, transport: httpx.BaseTransport | None = None,
                 sleep: Callable[[float], None] = time.sleep):
        self.config = config
        self._transport = transport
        self._sleep = sleep
        self._slots = threading.BoundedSemaphore(config.max_concurrency)
        self._lock = threading.Lock()
        self.requests = 0
        self.retries = 0

    def post(self, payload: dict) -> dict:
        key = self.config.api_key()
        headers = {"Authorization": f"Bearer {key}", "Content-Type": "application/json"}
        attempts = self.config.max_retries + 1
        last: ProviderError | None = None
        with self._slots, httpx.Client(transport=self._transport,
                                       timeout=self.config.timeout) as client:
            for attempt in range(attempts):
                if attempt:
                    with self._lock:
                        self.retries += 1
                    self._sleep(self.config.backoff * 2 ** (attempt - 1))
                with self._lock:
                    self.requests += 1
                try:
                    resp = client.post(self.config.endpoint, json=payload, headers=headers)
                except httpx.TimeoutException:
                    last = ProviderError(f"request to {self.config.endpoint} timed out", kind="timeout")
                    continue
                except httpx.TransportError as exc:
                    last = ProviderError(f"transport error: {type(exc).__name__}", kind="transport")
                    continue
                if resp.status_code in (401, 403):
                    raise ProviderError(f"authentication rejected (HTTP {resp.status_code})",
                                        kind="auth", status=resp.status_code)
                if resp.status_code in _RETRYABLE_STATUS:
                    last = ProviderError(f"HTTP {resp.status_code}", kind="http", status=resp.status_code)
                    log.debug("attempt %d/%d failed with HTTP %d", attempt + 1, attempts, resp.status_code)
                    continue
                if resp.status_code >= 400:
                    raise ProviderError(f"HTTP {resp.status_code}", kind="http", status=resp.status_code)
                try:
                    return resp.json()
                except ValueError as exc:
                    raise ProviderError("response body is not JSON", kind="bad_response") from exc
        assert last is not None
        raise ProviderError(f"{last} after {attempts} attempts", kind=last.kind, status=last.status)


class HttpChatProvider:
    def __init__(self, config: ProviderConfig, transport: httpx.BaseTransport | None = None,
                 sleep: Callable[[float], None] = time.sleep):
        self.config = config
        self._http = _HttpClient(config, transport, sleep)

    @property
    def retries(self) -> int:
        return self._http.retries

    @property
    def requests(self) -> int:
        return self._http.requests

    def complete(self, messages: Sequence[Message]) -> str:
        if not messages or messages[0].get("role") != "system":
            raise ValueError("messages must start with a system message")
        body = self._http.post({"model": self.config.model, "messages": list(messages)})
        try:
            content = body["choices"][0]["message"]["content"]
        except (KeyError, IndexError, TypeError) as exc:
            raise ProviderError("unexpected chat response shape", kind="bad_response") from exc
        return content or ""


class HttpEmbedder:
    def __init__(self, config: ProviderConfig, transport: httpx.BaseTransport | None = None,
                 sleep: Callable[[float], None] = time.sleep):
        if not config.dimension:
            raise ValueError("embedding config needs a dimension")
        self.config = config
        self.dimension = config.dimension
        self._http = _HttpClient(config, transport, sleep)

    @property
    def spec(self) -> str:
        return f"http:{self.config.model}:{self.dimension}"

    def embed(self, text: str) -> list[float]:
        if not text:
            raise ValueError("cannot embed empty text")
        body = self._http.post({"model": self.config.model, "input": text})
        try:
            vector = [float(x) for x in body["data"][0]["embedding"]]
        except (KeyError, IndexError, TypeError, ValueError) as exc:
            raise ProviderError("unexpected embedding response shape", kind="bad_response") from exc
        if len(vector) != self.dimension:
            raise DimensionMismatch(f"expected {self.dimension} dimensions, got {len(vector)}")
        return vector


# -- replay ------------------------------------------------------------------

def request_hash(payload: object) -> str:
    canonical = json.dumps(payload, sort_keys=True, ensure_ascii=False, separators=(",", ":"))
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()


def chat_key(messages: Sequence[Message]) -> str:
    return request_hash({"messages": [dict(m) for m in messages]})


class ReplayChatProvider:
    """Serves canned responses from ``<dir>/<request hash>.json``; no network."""

    def __init__(self, directory: str | Path):
        self.directory = Path(directory)
        self.requests = 0

    def complete(self, messages: Sequence[Message]) -> str:
        self.requests += 1
        key = chat_key(messages)
        path = self.directory / f"{key}.json"
        if not path.is_file():
            raise ProviderError(f"no recorded response for request {key}", kind="replay_miss")
        return json.loads(path.read_text(encoding="utf-8"))["response"]


class RecordingChatProvider:
    """Wraps a provider and stores each exchange as a replay fixture."""

    def __init__(self, inner: ChatProvider, directory: str | Path):
        self.inner = inner
        self.directory = Path(directory)
        self.directory.mkdir(parents=True, exist_ok=True)

    def complete(self, messages: Sequence[Message], label: str = "") -> str:
        response = self.inner.complete(messages)
        write_chat_fixture(self.directory, messages, response, label)
        return response


def write_chat_fixture(directory: str | Path, messages: Sequence[Message], response: str,
                       label: str = "") -> Path:
    path = Path(directory) / f"{chat_key(messages)}.json"
    record = {"label": label, "response": response}
    path.write_text(json.dumps(record, indent=2, ensure_ascii=False) + "\n", encoding="utf-8")
    return path


class ReplayEmbedder:
    """Serves vectors from ``<dir>/<hash of input>.json``."""

    def __init__(self, directory: str | Path, dimension: int):
        self.directory = Path(directory)
        self.dimension = dimension

    @property
    def spec(self) -> str:
        return f"replay:{self.dimension}"

    def embed(self, text: str) -> list[float]:
        key = request_hash({"input": text})
        path = self.directory / f"{key}.json"
        if not path.is_file():
            raise ProviderError(f"no recorded embedding for input {key}", kind="replay_miss")
        vector = [float(x) for x in json.loads(path.read_text(encoding="utf-8"))["vector"]]
        if len(vector) != self.dimension:
            raise DimensionMismatch(f"expected {self.dimension} dimensions, got {len(vector)}")
        return vector


_TOKEN = re.compile(r"[A-Za-z_][A-Za-z0-9_]*|\d+|[^\sA-Za-z0-9_]")


@dataclass
class HashingEmbedder:
    """Deterministic offline embedder based on signed feature hashing.

    Unigram and bigram code tokens are hashed into ``dimension`` buckets with a
    seeded hash, plus a small component keyed on the whole text so distinct
    texts never share a vector.  The output is L2-normalised.
    """

    dimension: int = 256
    seed: int = 0
    _cache: dict = field(default_factory=dict, repr=False, compare=False)

    @property
    def spec(self) -> str:
        return f"hash:{self.dimension}:{self.seed}"

    def _bucket(self, feature: str) -> tuple[int, float]:
        digest = hashlib.blake2b(feature.encode("utf-8"), digest_size=8,
                                 key=self.seed.to_bytes(8, "little", signed=True)).digest()
        value = struct.unpack("<Q", digest)[0]
        return value % self.dimension, (1.0 if (value >> 63) & 1 else -1.0)

    def embed(self, text: str) -> list[float]:
        if not text:
            raise ValueError("cannot embed empty text")
        if text in self._cache:
            return list(self._cache[text])
        vec = [0.0] * self.dimension
        tokens = _TOKEN.findall(text)
        for i, tok in enumerate(tokens):
            idx, sign = self._bucket("u:" + tok)
            vec[idx] += sign
            if i:
                idx, sign = self._bucket("b:" + tokens[i - 1] + " " + tok)
                vec[idx] += 0.5 * sign
        idx, sign = self._bucket("t:" + hashlib.sha256(text.encode("utf-8")).hexdigest())
        vec[idx] += 1e-3 * sign
        norm = math.sqrt(sum(v * v for v in vec)) or 1.0
        out = [v / norm for v in vec]
        self._cache[text] = tuple(out)
        return out


def load_config(path: str | Path | None = None) -> dict:
    """Read the JSON config file named by ``path`` or ``$QLINT_CONFIG``."""
    path = path or os.environ.get("QLINT_CONFIG")
    if not path:
        return {}
    with open(path, encoding="utf-8") as fh:
        return json.load(fh)


def chat_config(config: dict) -> ProviderConfig:
    return ProviderConfig.from_dict(config.get("chat", {}))


def embed_config(config: dict) -> ProviderConfig:
    defaults = {
        "endpoint": "https://api.openai.com/v1/embeddings",
        "model": "text-embedding-3-large",
        "dimension": 3072,
    }
    return ProviderConfig.from_dict({**defaults, **config.get("embed", {})})
