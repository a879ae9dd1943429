"""Integration against the primary package's client: conformance and the
limiter bound during a full tournament run (the tenth acceptance check)."""
from __future__ import annotations

import base64
from contextlib import contextmanager

import httpx
import pytest

from figclass import BackendConfig, Figure, HttpBackend, load_concepts, plan_tournament
from figclass.cli import cmd_conformance, run_classify
from figclass.evaluation import top1_accuracy
from modelserver import StubScript, serve
from modelserver.stubs import image_digest


@contextmanager
def criterion(capsys, number, label):
    try:
        yield
    except BaseException:
        with capsys.disabled():
            print(f"criterion {number} ({label}): FAIL")
        raise
    with capsys.disabled():
        print(f"criterion {number} ({label}): PASS")


def make_corpus(n_concepts, n_figures):
    concepts = load_concepts([("object", f"thing {i:03d}") for i in range(n_concepts)])
    figures, server_truth = [], {}
    for i in range(n_figures):
        b64 = base64.b64encode(f"corpus-image-{i}".encode()).decode()
        true = concepts.concepts[(i * 13) % n_concepts]
        figures.append(Figure(id=f"fig{i:03d}", image_b64=b64,
                              ground_truth={"object": true.id}))
        server_truth[(image_digest(b64), "object")] = true.id
    return concepts, figures, server_truth


def test_conformance_suite_passes(capsys):
    concepts, figures, server_truth = make_corpus(10, 5)
    server = serve(StubScript(mode="oracle", truth=server_truth))
    try:
        ok, lines = cmd_conformance(server.url)
        assert ok, "\n".join(lines)
        assert all(line.startswith("PASS") for line in lines)
    finally:
        server.shutdown()


def test_criterion_10_conformance_and_limiter(capsys):
    with criterion(capsys, 10, "server conformance and limiter bound"):
        concepts, figures, server_truth = make_corpus(100, 20)
        server = serve(StubScript(mode="oracle", truth=server_truth))
        try:
            ok, lines = cmd_conformance(server.url)
            assert ok, "\n".join(lines)

            backend = HttpBackend(BackendConfig(base_url=server.url, max_in_flight=8))
            try:
                results = run_classify(figures, concepts, "mc-ts", backend,
                                       k=5, seed=0, max_workers=8)
            finally:
                backend.close()

            gold = {f.id: f.ground_truth["object"] for f in figures}
            assert top1_accuracy(results, gold) == 1.0
            per_figure = plan_tournament(len(concepts), 5).total_queries
            total = sum(r.queries_used for r in results)
            assert total == len(figures) * per_figure == 500

            stats = httpx.get(server.url + "/v1/stats", timeout=5).json()
            assert stats["max_in_flight"] >= 2  # the run really was concurrent
            assert stats["max_in_flight"] <= 8
        finally:
            server.shutdown()
