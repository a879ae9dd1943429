"""Metrics: top-1 accuracy, exact string match, judge-based semantic
equivalence, Cohen's kappa, and confusion matrices."""
from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from .backend import Backend, ModelResponse
from .errors import (
    DegenerateMarginals,
    EmptyEvaluation,
    LengthMismatch,
    UnknownFigure,
    UnknownLabel,
)
from .strategies import BinaryOutcome, ClassificationResult, parse_binary

JUDGE_PROMPT_TEMPLATE = (
    "Question: what is the {aspect} shown in the figure? "
    "Reference answer: '{gold}'. Candidate answer: '{predicted}'. "
    "Are the candidate and reference semantically equivalent? Answer 'Yes' or 'No'."
)


def top1_accuracy(results: Sequence[ClassificationResult], gold: Mapping[str, str]) -> float:
    if not results:
        raise EmptyEvaluation("no results to evaluate")
    correct = 0
    for res in results:
        if res.figure_id not in gold:
            raise UnknownFigure(res.figure_id)
        correct += res.predicted.id == gold[res.figure_id]
    return correct / len(results)


def exact_match_accuracy(predictions: Sequence[str], golds: Sequence[str]) -> float:
    if len(predictions) != len(golds):
        raise LengthMismatch(f"{len(predictions)} predictions vs {len(golds)} golds")
    if not predictions:
        raise EmptyEvaluation("no predictions")
    hits = sum(p.strip().lower() == g.strip().lower() for p, g in zip(predictions, golds))
    return hits / len(predictions)


@dataclass
class JudgeDiagnostics:
    calls: int = 0
    unparseable: int = 0
    short_circuits: int = 0


def sem_eq(
    predicted_label: str,
    gold_label: str,
    judge_backend: Backend,
    aspect: str = "object",
    template: str = JUDGE_PROMPT_TEMPLATE,
    diagnostics: JudgeDiagnostics | None = None,
) -> bool:
    """Judge-based semantic equivalence.  Exact matches short-circuit to
    True without calling the judge; an unparseable judge reply counts as
    False and is recorded in the diagnostics."""
    if predicted_label.strip().lower() == gold_label.strip().lower():
        if diagnostics:
            diagnostics.short_circuits += 1
        return True
    prompt = template.format(aspect=aspect, gold=gold_label, predicted=predicted_label)
    response = judge_backend.answer(prompt, figure=None)
    if diagnostics:
        diagnostics.calls += 1
    outcome = parse_binary(response)
    if outcome is BinaryOutcome.UNPARSEABLE and diagnostics:
        diagnostics.unparseable += 1
    return outcome is BinaryOutcome.AFFIRMATIVE


@dataclass(frozen=True)
class KappaResult:
    kappa: float
    observed_agreement: float  # raw agreement, reported as IAA


def cohens_kappa(rater_a: Sequence, rater_b: Sequence) -> KappaResult:
    """Chance-corrected agreement between two raters over categorical labels
    (booleans included); expected agreement comes from the marginals."""
    if len(rater_a) != len(rater_b):
        raise LengthMismatch(f"{len(rater_a)} vs {len(rater_b)} ratings")
    if not rater_a:
        raise EmptyEvaluation("no ratings")
    n = len(rater_a)
    observed = sum(a == b for a, b in zip(rater_a, rater_b)) / n
    categories = set(rater_a) | set(rater_b)
    expected = sum(
        (sum(a == c for a in rater_a) / n) * (sum(b == c for b in rater_b) / n)
        for c in categories
    )
    if abs(1.0 - expected) < 1e-12:
        if observed == 1.0:
            return KappaResult(1.0, observed)
        raise DegenerateMarginals("expected agreement is 1; kappa undefined")
    return KappaResult((observed - expected) / (1.0 - expected), observed)


@dataclass
class ConfusionMatrix:
    labels: tuple[str, ...]
    counts: np.ndarray  # rows = gold, columns = predicted

    @property
    def total(self) -> int:
        return int(self.counts.sum())

    def diagonal_fraction(self) -> float:
        return float(np.trace(self.counts)) / self.total

    def to_csv(self, path) -> None:
        with open(path, "w", newline="", encoding="utf-8") as f:
            writer = csv.writer(f)
            writer.writerow(["gold\\pred", *self.labels])
            for label, row in zip(self.labels, self.counts):
                writer.writerow([label, *row.tolist()])


def confusion_matrix(
    results: Sequence[ClassificationResult],
    gold: Mapping[str, str],
    labels: Sequence[str],
) -> ConfusionMatrix:
    index = {label: i for i, label in enumerate(labels)}
    counts = np.zeros((len(labels), len(labels)), dtype=int)
    for res in results:
        if res.figure_id not in gold:
            raise UnknownFigure(res.figure_id)
        g, p = gold[res.figure_id], res.predicted.id
        if g not in index:
            raise UnknownLabel(g)
        if p not in index:
            raise UnknownLabel(p)
        counts[index[g], index[p]] += 1
    return ConfusionMatrix(tuple(labels), counts)


@dataclass
class EvalReport:
    strategy: str
    aspect: str
    n_samples: int
    top1: float
    semeq: float | None = None
    exact_match: float | None = None
    per_question_type: dict[str, float] = field(default_factory=dict)
    fallback_events: int = 0
    total_queries: int = 0

    def to_dict(self) -> dict:
        return {
            "strategy": self.strategy,
            "aspect": self.aspect,
            "n": self.n_samples,
            "top1": self.top1,
            "semeq": self.semeq,
            "exact_match": self.exact_match,
            "per_qtype": self.per_question_type,
            "fallback_events": self.fallback_events,
            "queries": self.total_queries,
        }


def write_report(report: EvalReport, out_dir, formats: Sequence[str] = ("json", "csv")) -> list[Path]:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    written: list[Path] = []
    if "json" in formats:
        path = out_dir / "report.json"
        path.write_text(json.dumps(report.to_dict(), indent=2, sort_keys=True) + "\n", encoding="utf-8")
        written.append(path)
    if "csv" in formats:
        path = out_dir / "report.csv"
        with open(path, "w", newline="", encoding="utf-8") as f:
            writer = csv.writer(f)
            writer.writerow(["strategy", "aspect", "n", "top1", "semeq", "exact_match", "queries"])
            writer.writerow([
                report.strategy, report.aspect, report.n_samples, report.top1,
                report.semeq, report.exact_match, report.total_queries,
            ])
        written.append(path)
    return written
