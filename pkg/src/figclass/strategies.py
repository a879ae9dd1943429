"""Classification strategies: binary sweep, open-ended, single multiple-choice,
and the tournament-style multiple-choice bracket."""
from __future__ import annotations

import random
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from enum import Enum
from typing import Callable, Sequence

from .backend import Backend, Figure, ModelResponse
from .errors import BackendUnavailable, ContextCapExceeded, InvalidK, NoDecision
from .matching import ConceptMatcher
from .prompts import (
    OptionList,
    PromptTemplates,
    Question,
    parse_roman,
    render_binary,
    render_multiple_choice,
    render_open,
)
from .errors import RomanParseError
from .taxonomy import Concept, ConceptSet

DEFAULT_CONTEXT_CAP = 100


class BinaryOutcome(Enum):
    AFFIRMATIVE = "affirmative"
    NEGATIVE = "negative"
    UNPARSEABLE = "unparseable"


def parse_binary(response: ModelResponse) -> BinaryOutcome:
    """Classify a yes/no reply by its leading token, punctuation-stripped."""
    token = response.text.strip().split()[0].strip(".,!:;'\"()").lower() if response.text.strip() else ""
    if token == "yes":
        return BinaryOutcome.AFFIRMATIVE
    if token == "no":
        return BinaryOutcome.NEGATIVE
    return BinaryOutcome.UNPARSEABLE


def parse_choice(response: ModelResponse, options: OptionList) -> Concept | None:
    """Resolve a multiple-choice reply to a concept, or None if unparseable.

    Ladder: (1) leading bracketed or bare roman numeral; (2) exact
    case-insensitive label match; (3) substring containment of exactly one
    option label; (4) unparseable.
    """
    text = response.text.strip()
    if not text or not len(options):
        return None
    leading = text.split()[0]
    try:
        position = parse_roman(leading)
        if 1 <= position <= len(options):
            return options.concept_at(position)
    except RomanParseError:
        pass
    lowered = text.lower()
    for _, concept in options.entries:
        if concept.label.lower() == lowered:
            return concept
    contained = [c for _, c in options.entries if c.label.lower() in lowered]
    if len(contained) == 1:
        return contained[0]
    return None


@dataclass(frozen=True)
class TournamentPlan:
    """Round/query budget of a bracket over ``total_concepts`` with subsets
    of size at most ``subset_max``."""

    total_concepts: int
    subset_max: int
    rounds: int
    queries_per_round: tuple[int, ...]
    total_queries: int


def plan_tournament(num_concepts: int, k: int) -> TournamentPlan:
    """Exact round and query counts for a bracket (no walkover credit).

    rounds = ceil(log_k n); queries in round r = ceil(n / k^r).
    Computed with integer arithmetic to dodge floating-point log edge cases.
    """
    if k < 2:
        raise InvalidK(f"subset size must be >= 2, got {k}")
    if num_concepts < 1:
        raise ValueError("num_concepts must be >= 1")
    queries: list[int] = []
    power = 1
    while power < num_concepts:
        power *= k
        queries.append(-(-num_concepts // power))  # ceil division
    return TournamentPlan(
        total_concepts=num_concepts,
        subset_max=k,
        rounds=len(queries),
        queries_per_round=tuple(queries),
        total_queries=sum(queries),
    )


@dataclass
class RoundRecord:
    subsets: list[list[Concept]]
    questions: list[Question | None]
    winners: list[Concept]
    fallbacks: list[int] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "subsets": [[c.id for c in s] for s in self.subsets],
            "questions": [q.text if q else None for q in self.questions],
            "winners": [c.id for c in self.winners],
            "fallbacks": list(self.fallbacks),
        }


@dataclass
class TournamentTrace:
    rounds: list[RoundRecord] = field(default_factory=list)

    @property
    def fallback_events(self) -> int:
        return sum(len(r.fallbacks) for r in self.rounds)

    def to_dict(self) -> dict:
        return {"rounds": [r.to_dict() for r in self.rounds]}


@dataclass
class ClassificationResult:
    figure_id: str
    aspect: str
    predicted: Concept
    strategy: str
    queries_used: int
    score: float | None = None
    trace: TournamentTrace | None = None

    def to_dict(self) -> dict:
        out = {
            "figure_id": self.figure_id,
            "aspect": self.aspect,
            "predicted": self.predicted.id,
            "strategy": self.strategy,
            "queries_used": self.queries_used,
            "score": self.score,
        }
        if self.trace is not None:
            out["trace"] = self.trace.to_dict()
        return out


def _run_ordered(tasks: Sequence[Callable[[], ModelResponse]], max_workers: int) -> list[ModelResponse]:
    """Run backend calls, assembling results by task index, never arrival order."""
    if max_workers <= 1 or len(tasks) <= 1:
        return [task() for task in tasks]
    with ThreadPoolExecutor(max_workers=max_workers) as pool:
        return list(pool.map(lambda t: t(), tasks))


def classify_bc(
    figure: Figure,
    concepts: ConceptSet,
    backend: Backend,
    templates: PromptTemplates | None = None,
    max_workers: int = 1,
) -> ClassificationResult:
    """One binary question per concept; the affirmative with the highest
    cumulative logprob wins.  With zero affirmatives the least-confident
    negative (lowest-logprob "No") wins.  Missing logprobs degrade to
    first-affirmative order.
    """
    templates = templates or PromptTemplates.default()
    questions = [render_binary(concepts.aspect, c, templates) for c in concepts]
    responses = _run_ordered([lambda q=q: backend.answer(q.text, figure) for q in questions], max_workers)

    affirmative: list[tuple[int, ModelResponse]] = []
    negative: list[tuple[int, ModelResponse]] = []
    for i, resp in enumerate(responses):
        outcome = parse_binary(resp)
        if outcome is BinaryOutcome.AFFIRMATIVE:
            affirmative.append((i, resp))
        elif outcome is BinaryOutcome.NEGATIVE:
            negative.append((i, resp))
    if affirmative:
        if any(r.cumulative_logprob is None for _, r in affirmative):
            idx, resp = affirmative[0]
        else:
            idx, resp = max(affirmative, key=lambda pair: (pair[1].cumulative_logprob, -pair[0]))
    elif negative:
        if any(r.cumulative_logprob is None for _, r in negative):
            idx, resp = negative[0]
        else:
            idx, resp = min(negative, key=lambda pair: (pair[1].cumulative_logprob, pair[0]))
    else:
        raise NoDecision(f"all {len(responses)} binary responses were unparseable")
    return ClassificationResult(
        figure_id=figure.id,
        aspect=concepts.aspect,
        predicted=concepts.concepts[idx],
        strategy="bc",
        queries_used=len(concepts),
        score=resp.cumulative_logprob,
    )


def classify_oc(
    figure: Figure,
    concepts: ConceptSet,
    backend: Backend,
    matcher: ConceptMatcher,
    templates: PromptTemplates | None = None,
) -> ClassificationResult:
    """A single open-ended question; the response maps to the nearest
    concept by embedding cosine (embedding calls accounted separately)."""
    question = render_open(concepts.aspect, templates or PromptTemplates.default())
    response = backend.answer(question.text, figure)
    if not response.text.strip():
        raise NoDecision("empty open-ended response")
    predicted, score = matcher.nearest_concept(response.text, concepts)
    return ClassificationResult(
        figure_id=figure.id,
        aspect=concepts.aspect,
        predicted=predicted,
        strategy="oc",
        queries_used=1,
        score=score,
    )


def classify_mc_single(
    figure: Figure,
    concepts: ConceptSet,
    backend: Backend,
    rng_seed: int = 0,
    context_cap: int = DEFAULT_CONTEXT_CAP,
    templates: PromptTemplates | None = None,
) -> ClassificationResult:
    """One multiple-choice question over the whole set.  Refuses sets larger
    than the context cap; that limitation is what the bracket avoids."""
    if len(concepts) > context_cap:
        raise ContextCapExceeded(f"{len(concepts)} concepts exceed the cap of {context_cap}")
    if len(concepts) < 2:
        raise InvalidK("single multiple-choice needs at least 2 concepts")
    order = list(concepts)
    random.Random(rng_seed).shuffle(order)
    options = OptionList.from_concepts(order)
    question = render_multiple_choice(concepts.aspect, options, templates or PromptTemplates.default())
    response = backend.answer(question.text, figure)
    predicted = parse_choice(response, options) or options.concept_at(1)
    return ClassificationResult(
        figure_id=figure.id,
        aspect=concepts.aspect,
        predicted=predicted,
        strategy="mc",
        queries_used=1,
        score=response.cumulative_logprob,
    )


def classify_mc_ts(
    figure: Figure,
    concepts: ConceptSet,
    backend: Backend,
    k: int,
    rng_seed: int = 0,
    templates: PromptTemplates | None = None,
    max_workers: int = 1,
) -> ClassificationResult:
    """Tournament bracket: partition, ask one multiple-choice question per
    subset, advance each winner, repeat until one concept remains.

    Round 1 partitions a seeded shuffle of the set into contiguous chunks
    of size <= k.  Singleton subsets advance by walkover without a query.
    An unparseable choice falls back to the subset's first option and is
    recorded in the trace.  Queries within a round may run concurrently;
    rounds are a sequential barrier.
    """
    if k < 2:
        raise InvalidK(f"subset size must be >= 2, got {k}")
    templates = templates or PromptTemplates.default()
    rng = random.Random(rng_seed)
    survivors = list(concepts)
    rng.shuffle(survivors)

    trace = TournamentTrace()
    queries_used = 0
    round_index = 0
    while len(survivors) > 1:
        round_index += 1
        subsets = [survivors[i:i + k] for i in range(0, len(survivors), k)]
        questions: list[Question | None] = []
        tasks: list[Callable[[], ModelResponse] | None] = []
        for subset_index, subset in enumerate(subsets):
            if len(subset) == 1:
                questions.append(None)
                tasks.append(None)
                continue
            option_rng = random.Random((rng_seed, round_index, subset_index).__hash__() & 0x7FFFFFFF)
            ordered = list(subset)
            option_rng.shuffle(ordered)
            options = OptionList.from_concepts(ordered)
            question = render_multiple_choice(concepts.aspect, options, templates)
            questions.append(question)
            tasks.append(lambda q=question: backend.answer(q.text, figure))

        live = [t for t in tasks if t is not None]
        try:
            responses = iter(_run_ordered(live, max_workers))
        except BackendUnavailable as exc:
            exc.trace = trace
            raise
        record = RoundRecord(subsets=[list(s) for s in subsets], questions=questions, winners=[])
        for subset_index, (subset, question) in enumerate(zip(subsets, questions)):
            if question is None:
                record.winners.append(subset[0])  # walkover
                continue
            response = next(responses)
            queries_used += 1
            winner = parse_choice(response, question.options)
            if winner is None:
                winner = question.options.concept_at(1)
                record.fallbacks.append(subset_index)
            record.winners.append(winner)
        trace.rounds.append(record)
        survivors = record.winners

    return ClassificationResult(
        figure_id=figure.id,
        aspect=concepts.aspect,
        predicted=survivors[0],
        strategy="mc_ts",
        queries_used=queries_used,
        trace=trace,
    )


def simulate_bracket_queries(num_concepts: int, k: int) -> tuple[int, int]:
    """Brute-force bracket simulator: one question per subset each round,
    counting singleton subsets too.  Returns (rounds, queries)."""
    if k < 2:
        raise InvalidK(f"subset size must be >= 2, got {k}")
    remaining = num_concepts
    rounds = queries = 0
    while remaining > 1:
        subsets = -(-remaining // k)
        queries += subsets
        remaining = subsets
        rounds += 1
    return rounds, queries
