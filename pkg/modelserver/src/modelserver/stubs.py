"""Deterministic stub behaviors behind the wire protocol.

The oracle here mirrors the client-side mock semantics exactly: decisions
are keyed by a hash of (seed, image digest, prompt), so the same request
bytes always produce the same reply regardless of arrival order.  A real
LVLM adapter would replace ``StubScript.reply`` and keep the plumbing.
"""
from __future__ import annotations

import hashlib
import random
import re
from dataclasses import dataclass, field
from typing import Mapping

import numpy as np

HASH_EMBEDDING_DIM = 64

# Prompt shapes the oracle understands (the client's shipped templates).
_BINARY_RE = re.compile(r"^Is the (.+?) of the figure (.+?)\? Answer 'Yes' or 'No'\.$")
_STEM_RE = re.compile(r"^What (?:is the (.+?) of the figure|(\w+) is depicted in the figure)\?")
_OPTION_RE = re.compile(r"\(([ivxlc]+)\)\s(.*?)(?=\s\([ivxlc]+\)\s|\sChoose one option\.$)")
_JUDGE_RE = re.compile(r"Reference answer: '(.*?)'\. Candidate answer: '(.*?)'\.")


class StubError(Exception):
    """Request the stub cannot serve; carries an HTTP status."""

    def __init__(self, status: int, message: str):
        super().__init__(message)
        self.status = status


def synth_logprobs(text: str, cumulative: float = 0.0) -> list[list]:
    """Uniform per-token shares summing exactly to the cumulative value."""
    tokens = text.split() or [text]
    share = cumulative / len(tokens)
    pairs = [[tok, share] for tok in tokens]
    pairs[-1][1] = cumulative - share * (len(tokens) - 1)
    return pairs


def answer_body(text: str, cumulative: float = 0.0, want_logprobs: bool = True) -> dict:
    body = {"text": text}
    if want_logprobs:
        body["token_logprobs"] = synth_logprobs(text, cumulative)
        body["cumulative_logprob"] = cumulative
    else:
        body["token_logprobs"] = []
        body["cumulative_logprob"] = None
    return body


def hash_embedding(text: str, dim: int = HASH_EMBEDDING_DIM, salt: int = 0) -> list[float]:
    digest = hashlib.sha256(f"{salt}\x00{text}".encode()).digest()
    rng = np.random.default_rng(int.from_bytes(digest[:8], "big"))
    v = rng.standard_normal(dim)
    return (v / np.linalg.norm(v)).tolist()


def image_digest(image_b64: str | None) -> str:
    if image_b64 is None:
        return ""
    return hashlib.sha256(image_b64.encode()).hexdigest()


def fingerprint(prompt: str, image_b64: str | None) -> str:
    return hashlib.sha256(f"{prompt}\x00{image_digest(image_b64)}".encode()).hexdigest()


def _request_rng(seed: int, prompt: str, context: str) -> random.Random:
    digest = hashlib.sha256(f"{seed}\x00{context}\x00{prompt}".encode()).digest()
    return random.Random(int.from_bytes(digest[:8], "big"))


def oracle_answer(prompt: str, image_b64: str | None, truth: Mapping[tuple[str, str], str],
                  error_rate: float, seed: int, want_logprobs: bool = True) -> dict:
    """Answer from a truth table keyed by (image sha256, aspect)."""
    context = image_digest(image_b64)
    rng = _request_rng(seed, prompt, context)
    err = rng.random() < error_rate

    def true_label(aspect: str) -> str | None:
        return truth.get((context, aspect))

    m = _BINARY_RE.match(prompt)
    if m:
        aspect, asked = m.group(1), m.group(2)
        truthful = asked == true_label(aspect)
        affirmative = truthful != err
        cum = 0.0 if (truthful and not err) else -(0.5 + rng.random())
        return answer_body("Yes" if affirmative else "No", cum, want_logprobs)

    options = _OPTION_RE.findall(prompt)
    if options:
        stem = _STEM_RE.match(prompt)
        aspect = (stem.group(1) or stem.group(2)) if stem else ""
        label = true_label(aspect)
        labels = [l for _, l in options]
        true_idx = labels.index(label) if label in labels else None
        if err:
            idx = rng.choice([i for i in range(len(options)) if i != true_idx])
        elif true_idx is not None:
            idx = true_idx
        else:
            idx = rng.randrange(len(options))
        cum = 0.0 if (not err and idx == true_idx) else -(0.5 + rng.random())
        return answer_body(f"({options[idx][0]})", cum, want_logprobs)

    stem = _STEM_RE.match(prompt)
    if stem:
        label = true_label(stem.group(1) or stem.group(2))
        if label is not None:
            return answer_body(label, 0.0, want_logprobs)

    # prompts outside the template grammar (conformance probes, ad-hoc
    # checks) still get a deterministic well-formed reply
    return answer_body("unrecognized prompt", -(0.5 + rng.random()), want_logprobs)


def judge_answer(prompt: str, want_logprobs: bool = True) -> dict:
    """Echo judge: equivalent iff the quoted answers match after folding."""
    m = _JUDGE_RE.search(prompt)
    if not m:
        raise StubError(422, "judge prompt does not quote two answers")
    gold, candidate = m.group(1), m.group(2)
    same = gold.strip().casefold() == candidate.strip().casefold()
    return answer_body("Yes" if same else "No", 0.0 if same else -0.7, want_logprobs)


@dataclass
class StubScript:
    """Server behavior: mode plus whatever state that mode needs.

    ``entries`` maps request fingerprints to canned replies for scripted
    mode; ``truth`` holds (image sha256, aspect) -> concept id for oracle
    mode.
    """

    mode: str = "oracle"
    entries: dict[str, dict] = field(default_factory=dict)
    truth: dict[tuple[str, str], str] = field(default_factory=dict)
    error_rate: float = 0.0
    seed: int = 0

    def __post_init__(self) -> None:
        if self.mode not in ("scripted", "oracle", "judge"):
            raise ValueError(f"unknown mode {self.mode!r}")
        if not 0.0 <= self.error_rate <= 1.0:
            raise ValueError("error_rate must be in [0, 1]")

    @classmethod
    def from_config(cls, config: dict) -> "StubScript":
        truth = {
            (e["image_sha256"], e["aspect"]): e["concept_id"]
            for e in config.get("truth", [])
        }
        return cls(
            mode=config.get("mode", "oracle"),
            entries=dict(config.get("entries", {})),
            truth=truth,
            error_rate=float(config.get("error_rate", 0.0)),
            seed=int(config.get("seed", 0)),
        )

    def reply(self, prompt: str, image_b64: str | None, want_logprobs: bool = True) -> dict:
        if self.mode == "scripted":
            entry = self.entries.get(fingerprint(prompt, image_b64))
            if entry is None:
                raise StubError(404, "no scripted entry for this request")
            return answer_body(entry["text"], float(entry.get("cumulative_logprob", 0.0)),
                               want_logprobs)
        if self.mode == "judge":
            return judge_answer(prompt, want_logprobs)
        return oracle_answer(prompt, image_b64, self.truth, self.error_rate, self.seed,
                             want_logprobs)
