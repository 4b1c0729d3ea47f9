"""Uniform access to chat-completion and embedding services.

Two backends share one interface: an HTTP client speaking the common
chat-completions JSON protocol, and a fully deterministic mock driven by a
fixture file so every pipeline is testable offline.  All embeddings leaving
the gateway are L2-normalized.
"""

from __future__ import annotations

import hashlib
import json
import logging
import os
import threading
import time
from dataclasses import dataclass, field

import httpx
import numpy as np

from .errors import DimensionError, GatewayError, GatewayTimeout, MockMiss

logger = logging.getLogger(__name__)

ENV_BASE_URL = "SPREADRAG_API_BASE"
ENV_API_KEY = "SPREADRAG_API_KEY"
ENV_CHAT_MODEL = "SPREADRAG_CHAT_MODEL"
ENV_EMBED_MODEL = "SPREADRAG_EMBED_MODEL"
ENV_TIMEOUT = "SPREADRAG_TIMEOUT"

NORM_TOLERANCE = 1e-6


@dataclass
class ChatRequest:
    """One chat turn. ``temperature`` stays 0 for reproducible pipelines."""

    user_prompt: str
    system_prompt: str = ""
    expect_structured: bool = False
    temperature: float = 0.0

    def __post_init__(self):
        if not self.user_prompt:
            raise ValueError("user_prompt must be non-empty")


def fingerprint(system_prompt: str, user_prompt: str) -> str:
    """Stable identifier for a prompt pair, used by mock fixtures and traces."""
    digest = hashlib.sha256()
    digest.update(system_prompt.encode("utf-8"))
    digest.update(b"\x00")
    digest.update(user_prompt.encode("utf-8"))
    return digest.hexdigest()[:32]


def normalize(vector: np.ndarray) -> np.ndarray:
    norm = float(np.linalg.norm(vector))
    if norm == 0.0:
        raise ValueError("cannot normalize a zero vector")
    return vector / norm


def cosine(a: np.ndarray, b: np.ndarray) -> float:
    """Dot product of unit vectors; raises DimensionError on shape mismatch."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise DimensionError(f"dimension mismatch: {a.shape} vs {b.shape}")
    return float(np.dot(a, b))


class Gateway:
    """Shared caller surface; concrete backends implement _complete/_embed."""

    def __init__(self, max_inflight: int = 8):
        self._limiter = threading.Semaphore(max_inflight)

    def complete(self, request: ChatRequest) -> str:
        with self._limiter:
            return self._complete(request)

    def embed(self, texts: list[str]) -> list[np.ndarray]:
        if not texts:
            raise ValueError("embed() requires at least one text")
        with self._limiter:
            vectors = self._embed(texts)
        out = []
        for vec in vectors:
            arr = normalize(np.asarray(vec, dtype=np.float64))
            out.append(arr)
        return out

    def embed_one(self, text: str) -> np.ndarray:
        return self.embed([text])[0]

    def _complete(self, request: ChatRequest) -> str:
        raise NotImplementedError

    def _embed(self, texts: list[str]) -> list[np.ndarray]:
        raise NotImplementedError


class HttpGateway(Gateway):
    """Chat-completions-style HTTP JSON client.

    Compatible with common local and hosted servers exposing
    ``/chat/completions`` and ``/embeddings``.  Retries retryable failures
    up to ``max_retries`` times with exponential backoff.
    """

    def __init__(
        self,
        base_url: str,
        chat_model: str,
        embed_model: str,
        api_key: str = "",
        timeout: float = 60.0,
        max_retries: int = 2,
        max_inflight: int = 8,
        transport: httpx.BaseTransport | None = None,
    ):
        super().__init__(max_inflight=max_inflight)
        self.base_url = base_url.rstrip("/")
        self.chat_model = chat_model
        self.embed_model = embed_model
        self.api_key = api_key
        self.timeout = timeout
        self.max_retries = max_retries
        self._client = httpx.Client(timeout=timeout, transport=transport)

    @classmethod
    def from_env(cls, **overrides) -> "HttpGateway":
        params = dict(
            base_url=os.environ.get(ENV_BASE_URL, "http://localhost:8000/v1"),
            chat_model=os.environ.get(ENV_CHAT_MODEL, ""),
            embed_model=os.environ.get(ENV_EMBED_MODEL, ""),
            api_key=os.environ.get(ENV_API_KEY, ""),
            timeout=float(os.environ.get(ENV_TIMEOUT, "60")),
        )
        params.update(overrides)
        return cls(**params)

    def close(self):
        self._client.close()

    def _headers(self) -> dict:
        headers = {"Content-Type": "application/json"}
        if self.api_key:
            headers["Authorization"] = f"Bearer {self.api_key}"
        return headers

    def _post(self, path: str, payload: dict) -> dict:
        url = f"{self.base_url}{path}"
        last_error: GatewayError | None = None
        for attempt in range(self.max_retries + 1):
            if attempt:
                time.sleep(0.5 * (2 ** (attempt - 1)))
            try:
                response = self._client.post(url, json=payload, headers=self._headers())
            except httpx.TimeoutException as exc:
                last_error = GatewayTimeout(f"timeout calling {url}: {exc}")
                continue
            except httpx.TransportError as exc:
                last_error = GatewayError(f"transport failure calling {url}: {exc}", retryable=True)
                continue
            if response.status_code >= 500 or response.status_code == 429:
                last_error = GatewayError(
                    f"{url} returned {response.status_code}", retryable=True
                )
                continue
            if response.status_code >= 400:
                raise GatewayError(f"{url} returned {response.status_code}: {response.text[:200]}")
            return response.json()
        assert last_error is not None
        raise last_error

    def _complete(self, request: ChatRequest) -> str:
        messages = []
        if request.system_prompt:
            messages.append({"role": "system", "content": request.system_prompt})
        messages.append({"role": "user", "content": request.user_prompt})
        payload = {
            "model": self.chat_model,
            "temperature": request.temperature,
            "messages": messages,
        }
        if request.expect_structured:
            payload["response_format"] = {"type": "json_object"}
        data = self._post("/chat/completions", payload)
        try:
            return data["choices"][0]["message"]["content"]
        except (KeyError, IndexError, TypeError) as exc:
            raise GatewayError(f"malformed chat response: {exc}") from exc

    def _embed(self, texts: list[str]) -> list[np.ndarray]:
        data = self._post("/embeddings", {"model": self.embed_model, "input": texts})
        try:
            rows = sorted(data["data"], key=lambda row: row.get("index", 0))
            return [np.asarray(row["embedding"], dtype=np.float64) for row in rows]
        except (KeyError, TypeError) as exc:
            raise GatewayError(f"malformed embedding response: {exc}") from exc


def _as_needles(value: str | list[str] | None) -> list[str]:
    if value is None:
        return []
    return [value] if isinstance(value, str) else list(value)


@dataclass
class CompletionRule:
    """One scripted response.

    Matches by exact fingerprint, or by substrings: every needle in
    ``user_contains`` / ``system_contains`` (a string or list of strings)
    must appear in the corresponding prompt.
    """

    response: str
    fingerprint: str | None = None
    user_contains: str | list[str] | None = None
    system_contains: str | list[str] | None = None

    def matches(self, request: ChatRequest) -> bool:
        if self.fingerprint is not None:
            return fingerprint(request.system_prompt, request.user_prompt) == self.fingerprint
        user_needles = _as_needles(self.user_contains)
        system_needles = _as_needles(self.system_contains)
        if not user_needles and not system_needles:
            return False
        return all(needle in request.user_prompt for needle in user_needles) and all(
            needle in request.system_prompt for needle in system_needles
        )


class MockGateway(Gateway):
    """Deterministic offline backend.

    Completions are looked up in an ordered rule list (first match wins);
    a prompt nothing matches raises MockMiss so tests fail loudly.
    Embeddings are pinned per exact text in the fixture, or derived as a
    pseudo-random unit vector seeded from a hash of the text, so equal text
    always maps to an equal vector.
    """

    def __init__(
        self,
        embedding_dim: int = 64,
        completions: list[CompletionRule] | None = None,
        pinned_embeddings: dict[str, np.ndarray] | None = None,
        max_inflight: int = 8,
    ):
        super().__init__(max_inflight=max_inflight)
        self.embedding_dim = embedding_dim
        self.completions = list(completions or [])
        self.pinned_embeddings = dict(pinned_embeddings or {})
        self.transcript: list[dict] = []
        self._transcript_lock = threading.Lock()

    @classmethod
    def from_fixture(cls, path: str) -> "MockGateway":
        """Load a fixture file.

        Schema::

            {
              "embedding_dim": 64,
              "embeddings": {"text": [0.6, 0.8, ...] | {"axis": 3}},
              "completions": [
                {"fingerprint": "...", "response": "..."} |
                {"user_contains": "...", "system_contains": "...", "response": "..."}
              ]
            }

        Pinned vectors are normalized on load; {"axis": i} means basis
        vector e_i, convenient for hand-computed cosines.
        """
        with open(path, encoding="utf-8") as handle:
            raw = json.load(handle)
        dim = int(raw.get("embedding_dim", 64))
        pinned = {}
        for text, spec in raw.get("embeddings", {}).items():
            if isinstance(spec, dict) and "axis" in spec:
                vec = np.zeros(dim)
                vec[int(spec["axis"])] = 1.0
            else:
                vec = np.asarray(spec, dtype=np.float64)
                if vec.shape != (dim,):
                    raise ValueError(
                        f"pinned embedding for {text!r} has dimension {vec.shape[0]}, expected {dim}"
                    )
            pinned[text] = normalize(vec)
        rules = []
        for entry in raw.get("completions", []):
            rules.append(
                CompletionRule(
                    response=entry["response"],
                    fingerprint=entry.get("fingerprint"),
                    user_contains=entry.get("user_contains"),
                    system_contains=entry.get("system_contains"),
                )
            )
        return cls(embedding_dim=dim, completions=rules, pinned_embeddings=pinned)

    def script(self, response: str, **match) -> "MockGateway":
        """Append a rule; accepts fingerprint=, user_contains=, system_contains=."""
        self.completions.append(CompletionRule(response=response, **match))
        return self

    def script_exact(self, system_prompt: str, user_prompt: str, response: str) -> "MockGateway":
        return self.script(response, fingerprint=fingerprint(system_prompt, user_prompt))

    def _complete(self, request: ChatRequest) -> str:
        for rule in self.completions:
            if rule.matches(request):
                with self._transcript_lock:
                    self.transcript.append(
                        {
                            "kind": "complete",
                            "fingerprint": fingerprint(request.system_prompt, request.user_prompt),
                            "response": rule.response,
                        }
                    )
                return rule.response
        raise MockMiss(
            "no scripted response for prompt "
            f"fingerprint={fingerprint(request.system_prompt, request.user_prompt)} "
            f"user_prompt[:160]={request.user_prompt[:160]!r}"
        )

    def _hash_vector(self, text: str) -> np.ndarray:
        digest = hashlib.sha256(text.encode("utf-8")).digest()
        seed = int.from_bytes(digest[:8], "big")
        rng = np.random.default_rng(seed)
        vec = rng.standard_normal(self.embedding_dim)
        return normalize(vec)

    def _embed(self, texts: list[str]) -> list[np.ndarray]:
        out = []
        shas = []
        for text in texts:
            if text in self.pinned_embeddings:
                vec = self.pinned_embeddings[text]
            else:
                vec = self._hash_vector(text)
            shas.append(hashlib.sha256(text.encode()).hexdigest()[:16])
            out.append(vec)
        with self._transcript_lock:
            self.transcript.append({"kind": "embed", "count": len(texts), "shas": shas})
        return out
