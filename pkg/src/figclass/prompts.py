"""Question rendering: templates, roman-numeral enumeration, option sampling."""
from __future__ import annotations

import json
import random
import re
from dataclasses import dataclass
from enum import Enum
from importlib import resources
from typing import Iterable, Sequence

from .errors import (
    AspectMismatch,
    InsufficientPool,
    InvalidOptions,
    RomanParseError,
    RomanRangeError,
    UnknownAspect,
)
from .taxonomy import Aspect, Concept, ConceptSet

SIMILAR_POOL_SIZE = 100


class QuestionType(str, Enum):
    BINARY = "binary"
    MULTIPLE_CHOICE = "multiple_choice"
    OPEN_ENDED = "open_ended"


_ROMAN_PAIRS = (
    (100, "c"), (90, "xc"), (50, "l"), (40, "xl"),
    (10, "x"), (9, "ix"), (5, "v"), (4, "iv"), (1, "i"),
)


def to_roman(n: int) -> str:
    """Lower-case roman numeral for 1 <= n <= 100."""
    if not 1 <= n <= 100:
        raise RomanRangeError(f"numeral out of range: {n}")
    out = []
    for value, glyph in _ROMAN_PAIRS:
        while n >= value:
            out.append(glyph)
            n -= value
    return "".join(out)


def parse_roman(text: str) -> int:
    """Parse a (possibly bracketed) lower/upper-case roman numeral.

    Left inverse of :func:`to_roman`: parse_roman(to_roman(n)) == n.
    """
    stripped = text.strip().strip("().:").lower()
    if not stripped or not re.fullmatch(r"[ivxlc]+", stripped):
        raise RomanParseError(f"not a roman numeral: {text!r}")
    values = {"i": 1, "v": 5, "x": 10, "l": 50, "c": 100}
    total = 0
    for ch, nxt in zip(stripped, stripped[1:] + " "):
        v = values[ch]
        total += -v if nxt != " " and values.get(nxt, 0) > v else v
    if not 1 <= total <= 100 or to_roman(total) != stripped:
        raise RomanParseError(f"not a canonical roman numeral: {text!r}")
    return total


@dataclass(frozen=True)
class OptionList:
    """Ordered (roman numeral, concept) pairs, numerals starting at (i)."""

    entries: tuple[tuple[str, Concept], ...]

    @classmethod
    def from_concepts(cls, concepts: Sequence[Concept]) -> "OptionList":
        return cls(tuple((to_roman(i + 1), c) for i, c in enumerate(concepts)))

    def __len__(self) -> int:
        return len(self.entries)

    @property
    def concepts(self) -> tuple[Concept, ...]:
        return tuple(c for _, c in self.entries)

    def concept_at(self, position: int) -> Concept:
        """1-based lookup by enumerated position."""
        return self.entries[position - 1][1]

    def numeral_of(self, concept: Concept) -> str:
        for numeral, c in self.entries:
            if c.id == concept.id:
                return numeral
        raise KeyError(concept.id)

    def format(self) -> str:
        return " ".join(f"({numeral}) {c.label}" for numeral, c in self.entries)


@dataclass(frozen=True)
class Question:
    kind: QuestionType
    text: str
    aspect: str
    instruction: str
    target_concept: Concept | None = None
    options: OptionList | None = None


class PromptTemplates:
    """Per-aspect question templates; an 'object'-style aspect can override
    the default stems.  Templates are data, not code: pass a custom JSON
    file to replace the shipped wording."""

    def __init__(self, templates: dict[str, dict[str, str]], instructions: dict[str, str]):
        self._templates = templates
        self._instructions = instructions

    @classmethod
    def default(cls) -> "PromptTemplates":
        with resources.files("figclass.data").joinpath("templates.json").open(encoding="utf-8") as f:
            data = json.load(f)
        return cls(data["templates"], data["instructions"])

    @classmethod
    def from_file(cls, path) -> "PromptTemplates":
        with open(path, encoding="utf-8") as f:
            data = json.load(f)
        return cls(data["templates"], data["instructions"])

    def instruction(self, kind: QuestionType) -> str:
        return self._instructions[kind.value]

    def template(self, aspect: str, kind: QuestionType) -> str:
        for key in (aspect, "default"):
            entry = self._templates.get(key)
            if entry and kind.value in entry:
                return entry[kind.value]
        raise UnknownAspect(f"no {kind.value} template for aspect {aspect!r}")


def _aspect_name(aspect: Aspect | str) -> str:
    return aspect.name if isinstance(aspect, Aspect) else aspect


def render_binary(
    aspect: Aspect | str, concept: Concept, templates: PromptTemplates | None = None
) -> Question:
    name = _aspect_name(aspect)
    if concept.aspect != name:
        raise AspectMismatch(f"concept {concept.id!r} has aspect {concept.aspect!r}, question asks {name!r}")
    templates = templates or PromptTemplates.default()
    text = templates.template(name, QuestionType.BINARY).format(aspect=name, concept=concept.label)
    instruction = templates.instruction(QuestionType.BINARY)
    _check_instruction(text, instruction)
    return Question(QuestionType.BINARY, text, name, instruction, target_concept=concept)


def render_multiple_choice(
    aspect: Aspect | str, options: OptionList, templates: PromptTemplates | None = None
) -> Question:
    name = _aspect_name(aspect)
    if len(options) < 2:
        raise InvalidOptions("a multiple-choice question needs at least 2 options")
    ids = [c.id for c in options.concepts]
    if len(set(ids)) != len(ids):
        raise InvalidOptions("duplicate options")
    templates = templates or PromptTemplates.default()
    text = templates.template(name, QuestionType.MULTIPLE_CHOICE).format(
        aspect=name, list_of_options=options.format()
    )
    instruction = templates.instruction(QuestionType.MULTIPLE_CHOICE)
    _check_instruction(text, instruction)
    return Question(QuestionType.MULTIPLE_CHOICE, text, name, instruction, options=options)


def render_open(aspect: Aspect | str, templates: PromptTemplates | None = None) -> Question:
    name = _aspect_name(aspect)
    templates = templates or PromptTemplates.default()
    text = templates.template(name, QuestionType.OPEN_ENDED).format(aspect=name)
    instruction = templates.instruction(QuestionType.OPEN_ENDED)
    _check_instruction(text, instruction)
    return Question(QuestionType.OPEN_ENDED, text, name, instruction)


def _check_instruction(text: str, instruction: str) -> None:
    if not text.endswith(instruction):
        raise ValueError(f"rendered question must end with its instruction: {text!r}")


def sample_options(
    correct: Concept,
    pool: ConceptSet,
    k: int,
    rng_seed: int,
    similar_pool: Sequence[Concept] | None = None,
) -> OptionList:
    """K distinct options including ``correct`` at a seeded-uniform position.

    Distractors come from ``similar_pool`` when given (object-style aspects
    restrict them to the most-similar concepts), otherwise from ``pool``.
    """
    source: Iterable[Concept] = similar_pool if similar_pool is not None else pool
    candidates = [c for c in source if c.id != correct.id]
    if len(candidates) < k - 1:
        raise InsufficientPool(f"need {k - 1} distractors, pool has {len(candidates)}")
    rng = random.Random(rng_seed)
    chosen = rng.sample(candidates, k - 1)
    chosen.insert(rng.randrange(k), correct)
    return OptionList.from_concepts(chosen)
