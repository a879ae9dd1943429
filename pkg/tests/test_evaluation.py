from __future__ import annotations

import random

import pytest

from figclass import ScriptedBackend
from figclass.errors import EmptyEvaluation, LengthMismatch, UnknownLabel
from figclass.evaluation import (
    JUDGE_PROMPT_TEMPLATE,
    EvalReport,
    JudgeDiagnostics,
    cohens_kappa,
    confusion_matrix,
    exact_match_accuracy,
    sem_eq,
    top1_accuracy,
    write_report,
)
from figclass.strategies import ClassificationResult
from figclass.taxonomy import Concept


def _result(fid, predicted, aspect="object"):
    return ClassificationResult(fid, aspect, Concept(predicted, predicted, aspect), "mc_ts", 3)


class TestTop1Accuracy:
    def test_all_correct(self):
        results = [_result(f"f{i}", "chair") for i in range(4)]
        assert top1_accuracy(results, {f"f{i}": "chair" for i in range(4)}) == 1.0

    def test_three_of_four(self):
        results = [_result("f0", "chair"), _result("f1", "chair"),
                   _result("f2", "chair"), _result("f3", "table")]
        gold = {f"f{i}": "chair" for i in range(4)}
        assert top1_accuracy(results, gold) == 0.75

    def test_empty(self):
        with pytest.raises(EmptyEvaluation):
            top1_accuracy([], {})


class TestExactMatch:
    def test_case_folding(self):
        assert exact_match_accuracy(["Yes"], ["yes"]) == 1.0

    def test_mismatch(self):
        assert exact_match_accuracy(["(ii)"], ["(iii)"]) == 0.0

    def test_manual_tally_of_ten(self):
        pairs = [("Yes", "yes"), ("No", "No"), (" chair ", "chair"), ("(ii)", "(ii)"),
                 ("graph", "chart"), ("table", "table"), ("a", "b"), ("", ""),
                 ("Exploded", "exploded"), ("plan", "plan view")]
        expected = 7 / 10  # hand count of matching pairs after trim+fold
        assert exact_match_accuracy(*map(list, zip(*pairs))) == expected

    def test_length_mismatch(self):
        with pytest.raises(LengthMismatch):
            exact_match_accuracy(["a"], ["a", "b"])


class _ExplodingBackend(ScriptedBackend):
    def answer(self, prompt, figure=None, want_logprobs=True):
        raise AssertionError("judge must not be called")


class TestSemEq:
    def test_identical_short_circuits_without_backend_call(self):
        diag = JudgeDiagnostics()
        assert sem_eq("chair", "Chair ", _ExplodingBackend(), diagnostics=diag)
        assert diag.short_circuits == 1 and diag.calls == 0

    def test_scripted_yes(self):
        prompt = JUDGE_PROMPT_TEMPLATE.format(aspect="object", gold="chair",
                                              predicted="office chair")
        judge = ScriptedBackend({prompt: "Yes"})
        assert sem_eq("office chair", "chair", judge) is True

    def test_scripted_no(self):
        prompt = JUDGE_PROMPT_TEMPLATE.format(aspect="object", gold="chainsaw",
                                              predicted="pet throw")
        judge = ScriptedBackend({prompt: "No"})
        assert sem_eq("pet throw", "chainsaw", judge) is False

    def test_unparseable_counts_false_with_diagnostic(self):
        diag = JudgeDiagnostics()
        judge = ScriptedBackend(default="cannot say")
        assert sem_eq("a", "b", judge, diagnostics=diag) is False
        assert diag.unparseable == 1


class TestCohensKappa:
    def test_perfect_agreement(self):
        a = [True, False, True, True]
        assert cohens_kappa(a, list(a)).kappa == 1.0

    def test_independent_raters_near_zero(self):
        rng = random.Random(123)
        a = [rng.random() < 0.5 for _ in range(10_000)]
        b = [rng.random() < 0.5 for _ in range(10_000)]
        assert abs(cohens_kappa(a, b).kappa) < 0.05

    def test_symmetric_in_raters(self):
        rng = random.Random(7)
        a = [rng.random() < 0.6 for _ in range(500)]
        b = [rng.random() < 0.4 for _ in range(500)]
        assert cohens_kappa(a, b).kappa == pytest.approx(cohens_kappa(b, a).kappa)

    def test_observed_agreement_reported(self):
        res = cohens_kappa([True, True, False, False], [True, False, False, False])
        assert res.observed_agreement == 0.75

    def test_kappa_equals_po_when_pe_zero(self):
        # disjoint categories: expected agreement is exactly zero
        res = cohens_kappa(["a", "a"], ["b", "b"])
        assert res.kappa == res.observed_agreement == 0.0

    def test_constant_raters_in_full_agreement(self):
        # p_e is 1 here, but so is p_o, so kappa is defined and equals 1
        assert cohens_kappa([True, True], [True, True]).kappa == 1.0

    def test_constant_rater_against_mixed_rater_is_zero(self):
        # a constant rater carries no information beyond its marginal
        res = cohens_kappa([True, True, True], [True, True, False])
        assert res.kappa == 0.0
        assert res.observed_agreement == pytest.approx(2 / 3)

    def test_reported_pair_contingency(self):
        # three-category contingency back-solved from kappa=0.59, p_o=0.77:
        # rows/cols sum to (118, 52, 30) over n=200, diagonal 154
        table = [[100, 13, 5], [13, 34, 5], [5, 5, 20]]
        a, b = [], []
        for i, row in enumerate(table):
            for j, count in enumerate(row):
                a += [i] * count
                b += [j] * count
        res = cohens_kappa(a, b)
        assert res.observed_agreement == pytest.approx(0.77)
        # forward check of the back-solved expected agreement
        n = 200
        pe = sum((sum(r[j] for r in table) / n) * (sum(table[j]) / n) for j in range(3))
        assert res.kappa == pytest.approx((0.77 - pe) / (1 - pe))
        assert res.kappa == pytest.approx(0.59, abs=0.005)


class TestConfusionMatrix:
    def test_tally(self):
        results = [_result("f0", "a"), _result("f1", "b"), _result("f2", "b")]
        gold = {"f0": "a", "f1": "a", "f2": "b"}
        cm = confusion_matrix(results, gold, ["a", "b"])
        assert cm.counts.tolist() == [[1, 1], [0, 1]]

    def test_diagonal_iff_top1_one(self):
        results = [_result(f"f{i}", "a") for i in range(3)]
        gold = {f"f{i}": "a" for i in range(3)}
        cm = confusion_matrix(results, gold, ["a", "b"])
        assert cm.diagonal_fraction() == top1_accuracy(results, gold) == 1.0

    def test_trace_equals_top1_under_noise(self):
        rng = random.Random(3)
        labels = ["a", "b", "c"]
        results, gold = [], {}
        for i in range(300):
            gold[f"f{i}"] = rng.choice(labels)
            results.append(_result(f"f{i}", rng.choice(labels)))
        cm = confusion_matrix(results, gold, labels)
        assert cm.diagonal_fraction() == pytest.approx(top1_accuracy(results, gold))
        assert cm.total == 300

    def test_unknown_label(self):
        with pytest.raises(UnknownLabel):
            confusion_matrix([_result("f0", "z")], {"f0": "a"}, ["a"])

    def test_row_sums_match_gold_counts(self):
        results = [_result("f0", "a"), _result("f1", "b"), _result("f2", "a")]
        gold = {"f0": "a", "f1": "a", "f2": "b"}
        cm = confusion_matrix(results, gold, ["a", "b"])
        assert cm.counts.sum(axis=1).tolist() == [2, 1]


def test_write_report(tmp_path):
    report = EvalReport("mc_ts", "object", 10, 0.8, semeq=0.9, total_queries=50)
    written = write_report(report, tmp_path / "out")
    assert {p.name for p in written} == {"report.json", "report.csv"}
    import json

    data = json.loads((tmp_path / "out" / "report.json").read_text())
    assert data["top1"] == 0.8 and data["semeq"] == 0.9
