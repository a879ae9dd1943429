from __future__ import annotations

import pytest

from figclass import Figure, load_concepts, make_oracle_backend


def make_concepts(aspect: str, n: int, prefix: str = "concept"):
    return load_concepts([(aspect, f"{prefix} {i:04d}") for i in range(n)])


def make_figures(concepts, per_concept: int, aspect: str | None = None):
    aspect = aspect or concepts.aspect
    figures = []
    for c in concepts:
        for j in range(per_concept):
            figures.append(Figure(id=f"{c.id}-fig{j:03d}", ground_truth={aspect: c.id}))
    return figures


def truth_table(figures, aspect: str):
    return {(f.id, aspect): f.ground_truth[aspect] for f in figures}


@pytest.fixture
def small_object_set():
    return make_concepts("object", 20)


@pytest.fixture
def perfect_oracle_env(small_object_set):
    cs = small_object_set
    fig = Figure(id="f-main", ground_truth={"object": cs.concepts[7].id})
    oracle = make_oracle_backend({("f-main", "object"): cs.concepts[7].id})
    return cs, fig, oracle
