"""Model access behind a wire protocol, plus deterministic mock backends.

The HTTP protocol (byte-exact field names):
  POST /v1/answer {"image_b64"?: str, "prompt": str, "want_logprobs": bool}
      -> {"text": str, "token_logprobs": [[token, logprob], ...],
          "cumulative_logprob": number}
  POST /v1/embed {"texts": [str, ...]} -> {"vectors": [[number, ...], ...]}
  POST /v1/health -> {"status": "ok"}
"""
from __future__ import annotations

import base64
import hashlib
import random
import re
import threading
import time
import uuid
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from .errors import (
    BackendUnavailable,
    InvalidRequest,
    ProtocolError,
)

BACKEND_URL_ENV = "FIGCLASS_BACKEND_URL"
HASH_EMBEDDING_DIM = 64


@dataclass(frozen=True)
class Figure:
    """An image reference plus optional per-aspect ground truth."""

    id: str
    image_path: str | None = None
    image_uri: str | None = None
    image_b64: str | None = None
    ground_truth: Mapping[str, str] = field(default_factory=dict)
    split: str | None = None

    def __post_init__(self) -> None:
        reps = [r for r in (self.image_path, self.image_uri, self.image_b64) if r is not None]
        if len(reps) > 1:
            raise ValueError(f"figure {self.id!r} has multiple image representations")


@dataclass(frozen=True)
class ModelResponse:
    text: str
    token_logprobs: tuple[tuple[str, float], ...] = ()
    cumulative_logprob: float | None = None

    def __post_init__(self) -> None:
        for _, lp in self.token_logprobs:
            if lp > 1e-12:
                raise ValueError("log-probabilities must be <= 0")
        if self.token_logprobs and self.cumulative_logprob is not None:
            total = sum(lp for _, lp in self.token_logprobs)
            if abs(total - self.cumulative_logprob) > 1e-9:
                raise ValueError("cumulative_logprob does not match token sum")

    @classmethod
    def synth(cls, text: str, cumulative_logprob: float = 0.0) -> "ModelResponse":
        """Synthesize token logprobs as uniform shares of the cumulative value."""
        tokens = text.split() or [text]
        share = cumulative_logprob / len(tokens)
        pairs = tuple((tok, share) for tok in tokens)
        # pin the last share so the sum is exact
        total = share * (len(tokens) - 1)
        pairs = pairs[:-1] + ((tokens[-1], cumulative_logprob - total),)
        return cls(text, pairs, cumulative_logprob)


@dataclass(frozen=True)
class BackendConfig:
    base_url: str
    timeout: float = 30.0
    max_retries: int = 2
    max_in_flight: int = 8
    backoff: float = 0.25

    def __post_init__(self) -> None:
        if self.max_in_flight < 1:
            raise ValueError("max_in_flight must be >= 1")
        if self.max_retries < 0:
            raise ValueError("max_retries must be >= 0")


class Backend:
    """Interface: answer a prompt (optionally with a figure) and embed texts."""

    backend_id: str = "backend"

    def answer(self, prompt: str, figure: Figure | None = None, want_logprobs: bool = True) -> ModelResponse:
        raise NotImplementedError

    def embed(self, texts: Sequence[str]) -> list[list[float]]:
        raise NotImplementedError


def _figure_b64(figure: Figure) -> str | None:
    if figure.image_b64 is not None:
        return figure.image_b64
    if figure.image_path is not None:
        with open(figure.image_path, "rb") as f:
            return base64.b64encode(f.read()).decode("ascii")
    if figure.image_uri is not None:
        raise ProtocolError("image URIs are not supported by the wire protocol; inline the payload")
    return None


class HttpBackend(Backend):
    """JSON-over-HTTP client with retries and a bounded in-flight limiter.

    Retries only transport failures and 5xx replies; a 4xx indicates a
    malformed request that a retry cannot fix.  The limiter is the only
    shared mutable state, so the client is safe for concurrent use.
    """

    def __init__(self, config: BackendConfig, transport=None):
        import httpx

        self.config = config
        self.backend_id = f"http:{config.base_url}"
        self._client = httpx.Client(base_url=config.base_url, timeout=config.timeout,
                                    transport=transport)
        self._limiter = threading.BoundedSemaphore(config.max_in_flight)
        self._httpx = httpx

    def close(self) -> None:
        self._client.close()

    def _post(self, path: str, payload: dict) -> dict:
        headers = {"X-Correlation-ID": str(uuid.uuid4())}
        last_error: Exception | None = None
        for attempt in range(self.config.max_retries + 1):
            try:
                with self._limiter:
                    resp = self._client.post(path, json=payload, headers=headers)
            except self._httpx.TransportError as exc:
                last_error = exc
                time.sleep(self.config.backoff * (2 ** attempt))
                continue
            if resp.status_code >= 500:
                last_error = ProtocolError(f"server error {resp.status_code}: {resp.text}")
                time.sleep(self.config.backoff * (2 ** attempt))
                continue
            if resp.status_code >= 400:
                raise ProtocolError(f"request rejected ({resp.status_code}): {resp.text}")
            return resp.json()
        raise BackendUnavailable(f"{path} failed after {self.config.max_retries + 1} attempts: {last_error}")

    def answer(self, prompt: str, figure: Figure | None = None, want_logprobs: bool = True) -> ModelResponse:
        if not prompt:
            raise InvalidRequest("prompt must be non-empty")
        payload: dict = {"prompt": prompt, "want_logprobs": want_logprobs}
        if figure is not None:
            b64 = _figure_b64(figure)
            if b64 is not None:
                payload["image_b64"] = b64
        data = self._post("/v1/answer", payload)
        if "text" not in data:
            raise ProtocolError("response missing field 'text'")
        pairs = tuple((tok, float(lp)) for tok, lp in data.get("token_logprobs") or ())
        cum = data.get("cumulative_logprob")
        return ModelResponse(data["text"], pairs, None if cum is None else float(cum))

    def embed(self, texts: Sequence[str]) -> list[list[float]]:
        if not texts:
            raise InvalidRequest("texts must be non-empty")
        data = self._post("/v1/embed", {"texts": list(texts)})
        if "vectors" not in data:
            raise ProtocolError("response missing field 'vectors'")
        return [list(map(float, v)) for v in data["vectors"]]

    def health(self) -> dict:
        return self._post("/v1/health", {})


def hash_embedding(text: str, dim: int = HASH_EMBEDDING_DIM, salt: int = 0) -> np.ndarray:
    """Deterministic unit vector that is a pure function of the string."""
    digest = hashlib.sha256(f"{salt}\x00{text}".encode()).digest()
    rng = np.random.default_rng(int.from_bytes(digest[:8], "big"))
    v = rng.standard_normal(dim)
    return v / np.linalg.norm(v)


class _HashEmbeddingMixin:
    embed_salt: int = 0

    def embed(self, texts: Sequence[str]) -> list[list[float]]:
        if not texts:
            raise InvalidRequest("texts must be non-empty")
        return [hash_embedding(t, salt=self.embed_salt).tolist() for t in texts]


class HashEmbeddingBackend(_HashEmbeddingMixin, Backend):
    def __init__(self, salt: int = 0):
        self.embed_salt = salt
        self.backend_id = f"hash{HASH_EMBEDDING_DIM}:{salt}"

    def answer(self, prompt: str, figure: Figure | None = None, want_logprobs: bool = True) -> ModelResponse:
        raise ProtocolError("hash-embedding backend only embeds")


class ScriptedBackend(_HashEmbeddingMixin, Backend):
    """Canned replies for golden tests, keyed by exact prompt."""

    def __init__(self, replies: Mapping[str, ModelResponse | str] | None = None,
                 default: ModelResponse | str | None = None):
        self.replies = dict(replies or {})
        self.default = default
        self.backend_id = "scripted"

    def answer(self, prompt: str, figure: Figure | None = None, want_logprobs: bool = True) -> ModelResponse:
        reply = self.replies.get(prompt, self.default)
        if reply is None:
            raise ProtocolError(f"no scripted reply for prompt: {prompt!r}")
        if isinstance(reply, str):
            return ModelResponse.synth(reply)
        return reply


# Prompt shapes the oracle understands (the shipped default templates).
_BINARY_RE = re.compile(r"^Is the (.+?) of the figure (.+?)\? Answer 'Yes' or 'No'\.$")
_STEM_RE = re.compile(r"^What (?:is the (.+?) of the figure|(\w+) is depicted in the figure)\?")
_OPTION_RE = re.compile(r"\(([ivxlc]+)\)\s(.*?)(?=\s\([ivxlc]+\)\s|\sChoose one option\.$)")


def _request_rng(seed: int, prompt: str, context: str) -> random.Random:
    """RNG keyed by the request itself, never by call order.

    Concurrent completion order therefore cannot change oracle decisions,
    and a server-side twin fed the same bytes reproduces them.
    """
    digest = hashlib.sha256(f"{seed}\x00{context}\x00{prompt}".encode()).digest()
    return random.Random(int.from_bytes(digest[:8], "big"))


def _figure_context(figure: Figure | None) -> str:
    if figure is None:
        return ""
    b64 = figure.image_b64
    if b64 is not None:
        return hashlib.sha256(b64.encode()).hexdigest()
    return figure.id


class OracleBackend(_HashEmbeddingMixin, Backend):
    """Simulated model answering from ground truth, optionally corrupted.

    ``truth`` maps (figure id, aspect) to the true concept id; ``labels``
    maps ids to display labels when they differ.  With probability
    ``error_rate`` (decided per request, deterministically under ``seed``)
    the answer polarity flips (binary) or a seeded-uniform wrong option is
    chosen (multiple choice).
    """

    def __init__(self, truth: Mapping[tuple[str, str], str], error_rate: float = 0.0,
                 rng_seed: int = 0, labels: Mapping[str, str] | None = None):
        if not 0.0 <= error_rate <= 1.0:
            raise ValueError("error_rate must be in [0, 1]")
        self.truth = dict(truth)
        self.error_rate = error_rate
        self.rng_seed = rng_seed
        self.labels = dict(labels or {})
        self.backend_id = f"oracle:{rng_seed}:{error_rate}"

    def _true_label(self, figure: Figure | None, aspect: str) -> str | None:
        if figure is None:
            return None
        cid = self.truth.get((figure.id, aspect))
        if cid is None:
            cid = figure.ground_truth.get(aspect)
        if cid is None:
            return None
        return self.labels.get(cid, cid)

    def answer(self, prompt: str, figure: Figure | None = None, want_logprobs: bool = True) -> ModelResponse:
        rng = _request_rng(self.rng_seed, prompt, _figure_context(figure))
        err = rng.random() < self.error_rate

        m = _BINARY_RE.match(prompt)
        if m:
            aspect, asked = m.group(1), m.group(2)
            truthful = asked == self._true_label(figure, aspect)
            affirmative = truthful != err
            text = "Yes" if affirmative else "No"
            cum = 0.0 if (truthful and not err) else -(0.5 + rng.random())
            return ModelResponse.synth(text, cum)

        options = _OPTION_RE.findall(prompt)
        if options:
            stem = _STEM_RE.match(prompt)
            aspect = (stem.group(1) or stem.group(2)) if stem else ""
            true_label = self._true_label(figure, aspect)
            labels = [label for _, label in options]
            true_idx = labels.index(true_label) if true_label in labels else None
            if err:
                wrong = [i for i in range(len(options)) if i != true_idx]
                idx = rng.choice(wrong)
            elif true_idx is not None:
                idx = true_idx
            else:
                idx = rng.randrange(len(options))
            cum = 0.0 if (not err and idx == true_idx) else -(0.5 + rng.random())
            return ModelResponse.synth(f"({options[idx][0]})", cum)

        stem = _STEM_RE.match(prompt)
        if stem:
            aspect = stem.group(1) or stem.group(2)
            true_label = self._true_label(figure, aspect)
            if true_label is not None:
                return ModelResponse.synth(true_label, 0.0)

        raise ProtocolError(f"oracle cannot interpret prompt: {prompt!r}")


def read_figures_jsonl(path) -> list[Figure]:
    import json

    figures: list[Figure] = []
    with open(path, encoding="utf-8") as f:
        for line in f:
            if not line.strip():
                continue
            rec = json.loads(line)
            figures.append(Figure(
                id=rec["id"],
                image_path=rec.get("image_path"),
                image_uri=rec.get("image_uri"),
                image_b64=rec.get("image_b64"),
                ground_truth=rec.get("ground_truth", {}),
                split=rec.get("split"),
            ))
    return figures


def make_oracle_backend(
    truth: Mapping[tuple[str, str], str],
    error_rate: float = 0.0,
    rng_seed: int = 0,
    labels: Mapping[str, str] | None = None,
) -> OracleBackend:
    return OracleBackend(truth, error_rate=error_rate, rng_seed=rng_seed, labels=labels)
