"""Classification-split and VQA-record generation with balancing rules."""
from __future__ import annotations

import hashlib
import json
import random
import warnings
from dataclasses import dataclass, field
from datetime import datetime, timezone
from typing import Mapping, Sequence

from .backend import Figure
from .errors import DatasetUnderfilled
from .prompts import (
    OptionList,
    PromptTemplates,
    Question,
    QuestionType,
    render_binary,
    render_multiple_choice,
    render_open,
    sample_options,
)
from .taxonomy import Concept, ConceptSet

SPLITS = ("train", "valid", "test")
DEFAULT_K_CHOICES = (5, 10, 20)


@dataclass(frozen=True)
class SplitConfig:
    train_per_concept: int = 150
    valid_target: int = 1000
    test_target: int = 1000
    rng_seed: int = 0


@dataclass
class ClsDataset:
    aspect: str
    splits: dict[str, list[tuple[str, str]]]  # split -> [(figure_id, concept_id)]

    def size(self, split: str) -> int:
        return len(self.splits[split])

    def concept_ids(self) -> list[str]:
        return sorted({cid for pairs in self.splits.values() for _, cid in pairs})


@dataclass
class VqaRecord:
    figure_id: str
    aspect: str
    question_type: QuestionType
    question: Question
    answer: str
    split: str
    options: OptionList | None = None

    def to_dict(self) -> dict:
        out = {
            "figure_id": self.figure_id,
            "aspect": self.aspect,
            "qtype": self.question_type.value,
            "question": self.question.text,
            "answer": self.answer,
            "split": self.split,
        }
        if self.options is not None:
            out["options"] = [[numeral, c.id, c.label] for numeral, c in self.options.entries]
        return out


def _derived_seed(*parts) -> int:
    digest = hashlib.sha256("\x00".join(map(str, parts)).encode()).digest()
    return int.from_bytes(digest[:8], "big")


def build_cls_splits(corpus: Sequence[Figure], aspect: str, config: SplitConfig) -> ClsDataset:
    """Carve train/valid/test from a figure corpus.

    Train takes ``train_per_concept`` figures from every concept that can
    supply them (others are dropped with a warning, mirroring the support
    filter).  Valid and test each take one remaining figure per concept
    round-robin, then fill uniformly at random to their targets.  All
    choices are seeded; splits are disjoint on figure id.
    """
    by_concept: dict[str, list[Figure]] = {}
    for fig in corpus:
        cid = fig.ground_truth.get(aspect)
        if cid is not None:
            by_concept.setdefault(cid, []).append(fig)

    train: list[tuple[str, str]] = []
    leftovers: dict[str, list[Figure]] = {}
    for cid in sorted(by_concept):
        figs = sorted(by_concept[cid], key=lambda f: f.id)
        if len(figs) < config.train_per_concept:
            warnings.warn(
                f"concept {cid!r} has only {len(figs)} figures; dropped from splits",
                DatasetUnderfilled,
                stacklevel=2,
            )
            continue
        random.Random(_derived_seed(config.rng_seed, aspect, cid)).shuffle(figs)
        train.extend((f.id, cid) for f in figs[: config.train_per_concept])
        leftovers[cid] = figs[config.train_per_concept:]

    splits = {"train": train}
    for split, target in (("valid", config.valid_target), ("test", config.test_target)):
        taken: list[tuple[str, str]] = []
        # one figure per concept first, in canonical concept order
        for cid in sorted(leftovers):
            if len(taken) >= target:
                break
            if leftovers[cid]:
                fig = leftovers[cid].pop(0)
                taken.append((fig.id, cid))
        remaining = [(f.id, cid) for cid in sorted(leftovers) for f in leftovers[cid]]
        fill_rng = random.Random(_derived_seed(config.rng_seed, aspect, split, "fill"))
        fill_rng.shuffle(remaining)
        while len(taken) < target and remaining:
            pair = remaining.pop()
            taken.append(pair)
            leftovers[pair[1]].remove(next(f for f in leftovers[pair[1]] if f.id == pair[0]))
        if len(taken) < target:
            warnings.warn(
                f"{split} split underfilled: {len(taken)} of {target}",
                DatasetUnderfilled,
                stacklevel=2,
            )
        splits[split] = taken
    return ClsDataset(aspect=aspect, splits=splits)


def subsample_fewshot(cls_ds: ClsDataset, n_per_concept: int, rng_seed: int = 0) -> ClsDataset:
    """Truncate train to n figures per concept, seeded and nested: the n=9
    subset is contained in the n=80 subset under the same seed."""
    by_concept: dict[str, list[tuple[str, str]]] = {}
    for pair in cls_ds.splits["train"]:
        by_concept.setdefault(pair[1], []).append(pair)
    train: list[tuple[str, str]] = []
    for cid in sorted(by_concept):
        pairs = list(by_concept[cid])
        random.Random(_derived_seed(rng_seed, "fewshot", cid)).shuffle(pairs)
        train.extend(pairs[:n_per_concept])
    return ClsDataset(aspect=cls_ds.aspect, splits={**cls_ds.splits, "train": train})


def build_vqa(
    cls_ds: ClsDataset,
    concepts: ConceptSet,
    k_choices: Sequence[int] = DEFAULT_K_CHOICES,
    rng_seed: int = 0,
    templates: PromptTemplates | None = None,
    similar_pools: Mapping[str, Sequence[Concept]] | None = None,
) -> list[VqaRecord]:
    """Question records from classification splits.

    Train figures are partitioned per concept round-robin across the three
    question types (equal counts, +/-1), with multiple-choice option counts
    cycling through ``k_choices`` and binary targets alternating 50/50
    between the gold concept and a seeded-uniform negative.  Valid/test
    figures each yield one binary, one open-ended, and one multiple-choice
    record per option count.
    """
    templates = templates or PromptTemplates.default()
    records: list[VqaRecord] = []

    by_concept: dict[str, list[str]] = {}
    for fid, cid in cls_ds.splits["train"]:
        by_concept.setdefault(cid, []).append(fid)
    for cid in sorted(by_concept):
        gold = concepts.get(cid)
        mc_count = binary_count = 0
        for idx, fid in enumerate(by_concept[cid]):
            qtype = (QuestionType.BINARY, QuestionType.OPEN_ENDED, QuestionType.MULTIPLE_CHOICE)[idx % 3]
            if qtype is QuestionType.BINARY:
                records.append(_binary_record(fid, gold, concepts, "train", binary_count % 2 == 0,
                                              rng_seed, templates))
                binary_count += 1
            elif qtype is QuestionType.OPEN_ENDED:
                records.append(_open_record(fid, gold, cls_ds.aspect, "train", templates))
            else:
                k = k_choices[mc_count % len(k_choices)]
                records.append(_mc_record(fid, gold, concepts, k, "train", rng_seed,
                                          templates, similar_pools))
                mc_count += 1

    for split in ("valid", "test"):
        for idx, (fid, cid) in enumerate(cls_ds.splits[split]):
            gold = concepts.get(cid)
            records.append(_binary_record(fid, gold, concepts, split, idx % 2 == 0, rng_seed, templates))
            records.append(_open_record(fid, gold, cls_ds.aspect, split, templates))
            for k in k_choices:
                records.append(_mc_record(fid, gold, concepts, k, split, rng_seed,
                                          templates, similar_pools))
    return records


def _binary_record(fid, gold: Concept, concepts: ConceptSet, split: str, positive: bool,
                   rng_seed: int, templates: PromptTemplates) -> VqaRecord:
    if positive or len(concepts) < 2:
        target, answer = gold, "Yes"
    else:
        others = [c for c in concepts if c.id != gold.id]
        rng = random.Random(_derived_seed(rng_seed, "neg", fid, gold.id))
        target, answer = rng.choice(others), "No"
    question = render_binary(concepts.aspect, target, templates)
    return VqaRecord(fid, concepts.aspect, QuestionType.BINARY, question, answer, split)


def _open_record(fid, gold: Concept, aspect: str, split: str, templates: PromptTemplates) -> VqaRecord:
    question = render_open(aspect, templates)
    return VqaRecord(fid, aspect, QuestionType.OPEN_ENDED, question, gold.label, split)


def _mc_record(fid, gold: Concept, concepts: ConceptSet, k: int, split: str, rng_seed: int,
               templates: PromptTemplates, similar_pools) -> VqaRecord:
    pool = similar_pools.get(gold.id) if similar_pools else None
    options = sample_options(gold, concepts, k, _derived_seed(rng_seed, "opts", fid, gold.id, k),
                             similar_pool=pool)
    question = render_multiple_choice(concepts.aspect, options, templates)
    answer = f"({options.numeral_of(gold)})"
    return VqaRecord(fid, concepts.aspect, QuestionType.MULTIPLE_CHOICE, question, answer, split,
                     options=options)


@dataclass
class Violation:
    code: str
    count: int
    message: str


@dataclass
class ValidationReport:
    violations: list[Violation] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.violations

    def add(self, code: str, count: int, message: str) -> None:
        if count:
            self.violations.append(Violation(code, count, message))


def validate_dataset(cls_ds: ClsDataset, vqa: Sequence[VqaRecord] | None = None) -> ValidationReport:
    """Check every split and record invariant; the report lists violations."""
    report = ValidationReport()
    ids = {s: {fid for fid, _ in cls_ds.splits.get(s, ())} for s in SPLITS}
    for a, b in (("train", "valid"), ("train", "test"), ("valid", "test")):
        overlap = ids[a] & ids[b]
        report.add("split_overlap", len(overlap), f"{a}/{b} share figure ids: {sorted(overlap)[:5]}")
    for vqa_rec in vqa or ():
        if vqa_rec.question_type is QuestionType.BINARY and vqa_rec.answer not in ("Yes", "No"):
            report.add("binary_answer", 1, f"{vqa_rec.figure_id}: bad binary answer {vqa_rec.answer!r}")
        if vqa_rec.question_type is QuestionType.MULTIPLE_CHOICE:
            opts = vqa_rec.options
            if opts is None:
                report.add("mc_options_missing", 1, f"{vqa_rec.figure_id}: no options")
                continue
            numeral = vqa_rec.answer.strip("()")
            try:
                gold = opts.concept_at([n for n, _ in opts.entries].index(numeral) + 1)
            except ValueError:
                report.add("mc_gold_missing", 1, f"{vqa_rec.figure_id}: answer numeral not among options")
                continue
            if sum(1 for _, c in opts.entries if c.id == gold.id) != 1:
                report.add("mc_gold_duplicated", 1, f"{vqa_rec.figure_id}: gold option not unique")
    return report


def write_cls_jsonl(cls_ds: ClsDataset, path) -> None:
    with open(path, "w", encoding="utf-8") as f:
        for split in SPLITS:
            for fid, cid in cls_ds.splits.get(split, ()):
                f.write(json.dumps({"figure_id": fid, "aspect": cls_ds.aspect,
                                    "concept_id": cid, "split": split}, sort_keys=True) + "\n")


def read_cls_jsonl(path) -> ClsDataset:
    splits: dict[str, list[tuple[str, str]]] = {s: [] for s in SPLITS}
    aspect = None
    with open(path, encoding="utf-8") as f:
        for line in f:
            if not line.strip():
                continue
            rec = json.loads(line)
            aspect = rec["aspect"]
            splits[rec["split"]].append((rec["figure_id"], rec["concept_id"]))
    if aspect is None:
        raise ValueError(f"empty dataset file: {path}")
    return ClsDataset(aspect=aspect, splits=splits)


def write_vqa_jsonl(records: Sequence[VqaRecord], path) -> None:
    with open(path, "w", encoding="utf-8") as f:
        for rec in records:
            f.write(json.dumps(rec.to_dict(), sort_keys=True) + "\n")


def file_sha256(path) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as f:
        for chunk in iter(lambda: f.read(65536), b""):
            digest.update(chunk)
    return digest.hexdigest()


def write_manifest(path, seed: int, config: Mapping, files: Sequence) -> None:
    manifest = {
        "created_at": datetime.now(timezone.utc).isoformat(),
        "seed": seed,
        "config": dict(config),
        "files": {str(p): file_sha256(p) for p in files},
    }
    with open(path, "w", encoding="utf-8") as f:
        json.dump(manifest, f, indent=2, sort_keys=True)
        f.write("\n")
