"""Aspects, concepts, and normalization of raw free-text labels."""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from importlib import resources
from typing import Callable, Iterable, Mapping, Sequence

import numpy as np

from .errors import DuplicateConcept, EmbeddingBackendError, EmptyConceptSet

CORE_ASPECTS = ("type", "projection", "uspc", "object")


@dataclass(frozen=True)
class Aspect:
    """A facet along which figures are classified (type, projection, ...)."""

    name: str
    description: str = ""

    def __post_init__(self) -> None:
        if not self.name:
            raise ValueError("aspect name must be non-empty")


@dataclass(frozen=True, order=True)
class Concept:
    """A single classification label within an aspect."""

    id: str
    label: str
    aspect: str


@dataclass(frozen=True)
class ConceptSet:
    """Deduplicated concepts of one aspect in canonical (id-sorted) order.

    The canonical order makes all downstream seeded sampling reproducible.
    """

    aspect: str
    concepts: tuple[Concept, ...]

    @classmethod
    def of(cls, aspect: str, concepts: Iterable[Concept]) -> "ConceptSet":
        ordered = tuple(sorted(concepts, key=lambda c: c.id))
        if not ordered:
            raise EmptyConceptSet(f"no concepts for aspect {aspect!r}")
        seen: dict[str, Concept] = {}
        for c in ordered:
            if c.aspect != aspect:
                raise ValueError(f"concept {c.id!r} belongs to aspect {c.aspect!r}, not {aspect!r}")
            if c.id in seen and seen[c.id].label != c.label:
                raise DuplicateConcept(f"conflicting labels for concept id {c.id!r}")
            seen[c.id] = c
        return cls(aspect, tuple(seen[i] for i in sorted(seen)))

    def __len__(self) -> int:
        return len(self.concepts)

    def __iter__(self):
        return iter(self.concepts)

    def __contains__(self, item) -> bool:
        cid = item.id if isinstance(item, Concept) else item
        return any(c.id == cid for c in self.concepts)

    def get(self, concept_id: str) -> Concept:
        for c in self.concepts:
            if c.id == concept_id:
                return c
        raise KeyError(concept_id)

    def ids(self) -> list[str]:
        return [c.id for c in self.concepts]

    def labels(self) -> list[str]:
        return [c.label for c in self.concepts]


@dataclass(frozen=True)
class KeywordRule:
    """Maps raw labels containing every keyword phrase to a target concept."""

    keywords: tuple[str, ...]
    target: str
    priority: int = 0

    def __post_init__(self) -> None:
        if not self.keywords:
            raise ValueError("keyword rule needs at least one keyword")
        object.__setattr__(self, "keywords", tuple(k.lower() for k in self.keywords))


def normalize_label(label: str) -> str:
    return " ".join(label.strip().lower().split())


def load_concepts(
    records: Iterable[Mapping | Sequence],
    stop_list: Iterable[str] | None = None,
) -> ConceptSet:
    """Build a canonical ConceptSet from raw (aspect, label) records.

    Records may be ``(aspect, label)`` pairs or mappings with keys
    ``aspect``, ``label`` and optional ``id``.  Labels are lower-cased and
    whitespace-collapsed; case-folded duplicates collapse to one concept.
    ``stop_list`` drops labels (e.g. the unspecific "miscellaneous" class).
    """
    stops = {normalize_label(s) for s in (stop_list or ())}
    concepts: dict[str, Concept] = {}
    aspect: str | None = None
    for rec in records:
        if isinstance(rec, Mapping):
            a, label = rec["aspect"], rec["label"]
            cid = rec.get("id")
        else:
            a, label = rec[0], rec[1]
            cid = None
        label = normalize_label(label)
        if not label or label in stops:
            continue
        if aspect is None:
            aspect = a
        elif a != aspect:
            raise ValueError(f"mixed aspects in input: {aspect!r} and {a!r}")
        cid = cid or label
        if cid in concepts and concepts[cid].label != label:
            raise DuplicateConcept(f"id {cid!r} maps to both {concepts[cid].label!r} and {label!r}")
        concepts[cid] = Concept(id=cid, label=label, aspect=a)
    if not concepts:
        raise EmptyConceptSet("no concepts after normalization")
    return ConceptSet.of(aspect, concepts.values())


def load_concepts_jsonl(path, stop_list: Iterable[str] | None = None) -> ConceptSet:
    with open(path, encoding="utf-8") as f:
        records = [json.loads(line) for line in f if line.strip()]
    return load_concepts(records, stop_list=stop_list)


def map_projection(raw_label: str, rules: Sequence[KeywordRule]) -> str | None:
    """Return the target concept id of the best matching rule, or None.

    A rule fires when every keyword phrase occurs as a substring of the
    lower-cased raw label; the highest-priority firing rule wins (stable
    rule order breaks priority ties).  Total: unmapped is a value.
    """
    text = normalize_label(raw_label)
    best: KeywordRule | None = None
    for rule in rules:
        if all(kw in text for kw in rule.keywords):
            if best is None or rule.priority > best.priority:
                best = rule
    return best.target if best else None


def cluster_object_concepts(
    labels: Sequence[str],
    embedder: Callable[[Sequence[str]], Sequence[Sequence[float]]],
    distance_threshold: float = 0.15,
) -> dict[str, str]:
    """Group near-duplicate labels and map each to a representative.

    Average-linkage agglomerative clustering over cosine distance; the
    representative of a cluster is the member closest to the L2-normalized
    centroid (ties to the lexicographically smallest label).
    """
    if not labels:
        raise ValueError("labels must be non-empty")
    unique = sorted(set(labels))
    try:
        vectors = np.asarray(embedder(unique), dtype=float)
    except Exception as exc:  # noqa: BLE001 - backend failures surface uniformly
        raise EmbeddingBackendError(str(exc)) from exc
    if vectors.ndim != 2 or vectors.shape[0] != len(unique):
        raise EmbeddingBackendError("embedder returned a malformed matrix")

    if len(unique) == 1:
        assignments = np.array([1])
    else:
        from scipy.cluster.hierarchy import fcluster, linkage

        link = linkage(vectors, method="average", metric="cosine")
        assignments = fcluster(link, t=distance_threshold, criterion="distance")

    norms = np.linalg.norm(vectors, axis=1, keepdims=True)
    unit = vectors / np.where(norms == 0, 1.0, norms)
    mapping: dict[str, str] = {}
    for cluster_id in np.unique(assignments):
        idx = np.flatnonzero(assignments == cluster_id)
        centroid = unit[idx].mean(axis=0)
        cnorm = np.linalg.norm(centroid)
        if cnorm > 0:
            centroid = centroid / cnorm
        sims = unit[idx] @ centroid
        rep = min((( -sims[j], unique[i]) for j, i in enumerate(idx)))[1]
        for i in idx:
            mapping[unique[i]] = rep
    return mapping


def filter_min_support(
    figures: Sequence,
    aspect: str,
    min_count: int = 150,
    concepts: ConceptSet | None = None,
) -> ConceptSet:
    """Retain exactly the concepts with at least ``min_count`` figures.

    ``concepts`` supplies labels for the surviving ids; without it the
    label defaults to the id.
    """
    counts: dict[str, int] = {}
    for fig in figures:
        cid = fig.ground_truth.get(aspect)
        if cid is not None:
            counts[cid] = counts.get(cid, 0) + 1
    kept = [cid for cid, n in counts.items() if n >= min_count]
    if not kept:
        raise EmptyConceptSet(f"no concept has {min_count} figures for aspect {aspect!r}")
    members = []
    for cid in kept:
        if concepts is not None and cid in concepts:
            members.append(concepts.get(cid))
        else:
            members.append(Concept(id=cid, label=cid, aspect=aspect))
    return ConceptSet.of(aspect, members)


def _load_data(name: str) -> dict:
    with resources.files("figclass.data").joinpath(name).open(encoding="utf-8") as f:
        return json.load(f)


def default_projection_schema() -> tuple[ConceptSet, list[KeywordRule]]:
    """The shipped 7-concept projection schema plus its keyword rules.

    The schema is a data file, user-replaceable: load your own JSON with
    the same shape and build the set via :func:`load_concepts`.
    """
    data = _load_data("projection_schema.json")
    cset = load_concepts([{"aspect": "projection", "label": c} for c in data["concepts"]])
    rules = [KeywordRule(tuple(r["keywords"]), r["target"], r.get("priority", 0)) for r in data["rules"]]
    return cset, rules


def default_type_schema() -> ConceptSet:
    data = _load_data("type_schema.json")
    return load_concepts([{"aspect": "type", "label": c} for c in data["concepts"]])
