from __future__ import annotations

import json

import pytest

from figclass import cli, make_oracle_backend
from figclass.cli import main, run_classify

from conftest import make_concepts, make_figures, truth_table


def write_inputs(tmp_path, concepts, figures):
    cpath = tmp_path / "concepts.jsonl"
    with open(cpath, "w") as f:
        for c in concepts:
            f.write(json.dumps({"id": c.id, "label": c.label, "aspect": c.aspect}) + "\n")
    fpath = tmp_path / "figures.jsonl"
    with open(fpath, "w") as f:
        for fig in figures:
            f.write(json.dumps({"id": fig.id, "ground_truth": fig.ground_truth}) + "\n")
    tpath = tmp_path / "truth.json"
    tpath.write_text(json.dumps([
        {"figure_id": fid, "aspect": aspect, "concept_id": cid}
        for (fid, aspect), cid in truth_table(figures, "object").items()
    ]))
    return cpath, fpath, tpath


class TestPlanCommand:
    def test_spot_value(self, capsys):
        assert main(["plan", "1447", "5"]) == 0
        out = capsys.readouterr().out
        assert "R=5 N=364" in out
        assert "per_round=[290,58,12,3,1]" in out

    def test_trivial_set(self, capsys):
        assert main(["plan", "1", "5"]) == 0
        assert "R=0 N=0" in capsys.readouterr().out


class TestClassifyCommand:
    @pytest.fixture
    def inputs(self, tmp_path):
        concepts = make_concepts("object", 10)
        figures = make_figures(concepts, 2)
        return tmp_path, concepts, figures, *write_inputs(tmp_path, concepts, figures)

    def test_mc_ts_end_to_end_with_eval(self, inputs, capsys):
        tmp_path, concepts, figures, cpath, fpath, tpath = inputs
        out = tmp_path / "run"
        rc = main(["classify", "--concepts", str(cpath), "--figures", str(fpath),
                   "--strategy", "mc-ts", "--k", "5", "--seed", "3",
                   "--oracle-truth", str(tpath), "--out", str(out)])
        assert rc == 0
        rows = [json.loads(l) for l in open(out / "results.jsonl")]
        assert len(rows) == len(figures)
        for row in rows:
            fig = next(f for f in figures if f.id == row["figure_id"])
            assert row["predicted"] == fig.ground_truth["object"]

        rc = main(["eval", "--results", str(out / "results.jsonl"), "--gold", str(fpath),
                   "--out", str(tmp_path / "eval")])
        assert rc == 0
        report = json.loads((tmp_path / "eval" / "report.json").read_text())
        assert report["top1"] == 1.0
        assert "top1=1.0000" in capsys.readouterr().out

    def test_bc_query_count(self, inputs):
        tmp_path, concepts, figures, cpath, fpath, tpath = inputs
        out = tmp_path / "bc"
        rc = main(["classify", "--concepts", str(cpath), "--figures", str(fpath),
                   "--strategy", "bc", "--oracle-truth", str(tpath), "--out", str(out)])
        assert rc == 0
        rows = [json.loads(l) for l in open(out / "results.jsonl")]
        assert all(row["queries_used"] == 10 for row in rows)

    def test_missing_input_exits_2(self, inputs):
        tmp_path, _, _, cpath, _, tpath = inputs
        rc = main(["classify", "--concepts", str(cpath), "--figures",
                   str(tmp_path / "absent.jsonl"), "--strategy", "bc",
                   "--oracle-truth", str(tpath), "--out", str(tmp_path / "x")])
        assert rc == 2

    def test_manifest_written(self, inputs):
        tmp_path, _, _, cpath, fpath, tpath = inputs
        out = tmp_path / "m"
        main(["classify", "--concepts", str(cpath), "--figures", str(fpath),
              "--strategy", "oc", "--oracle-truth", str(tpath), "--out", str(out)])
        manifest = json.loads((out / "manifest.json").read_text())
        assert manifest["seed"] == 0
        assert manifest["config"]["strategy"] == "oc"


class TestRunClassifyDeterminism:
    def test_byte_identical_across_worker_counts(self, tmp_path):
        concepts = make_concepts("object", 40)
        figures = make_figures(concepts, 1)[:12]
        oracle = make_oracle_backend(truth_table(figures, "object"))
        paths = []
        for workers in (1, 8):
            results = run_classify(figures, concepts, "mc-ts", oracle,
                                   k=5, seed=7, max_workers=workers)
            path = tmp_path / f"w{workers}.jsonl"
            cli.results_to_jsonl(results, path)
            paths.append(path)
        assert paths[0].read_bytes() == paths[1].read_bytes()


class TestBuildDatasetCommand:
    def test_end_to_end(self, tmp_path, capsys):
        concepts = make_concepts("uspc", 25)
        figures = make_figures(concepts, 156)
        fpath = tmp_path / "corpus.jsonl"
        with open(fpath, "w") as f:
            for fig in figures:
                f.write(json.dumps({"id": fig.id, "ground_truth": fig.ground_truth}) + "\n")
        out = tmp_path / "ds"
        rc = main(["build-dataset", "--corpus", str(fpath), "--aspect", "uspc",
                   "--valid-target", "25", "--test-target", "25", "--out", str(out)])
        assert rc == 0
        for name in ("cls.jsonl", "vqa.jsonl", "manifest.json"):
            assert (out / name).exists()
        assert "3750" in capsys.readouterr().out  # 25 concepts * 150 train figures

    def test_missing_corpus_exits_2(self, tmp_path):
        rc = main(["build-dataset", "--corpus", str(tmp_path / "nope.jsonl"),
                   "--aspect", "uspc", "--out", str(tmp_path / "out")])
        assert rc == 2


def test_figclass_error_exits_1(tmp_path):
    concepts = make_concepts("object", 3)
    figures = make_figures(concepts, 1)
    cpath, fpath, tpath = write_inputs(tmp_path, concepts, figures)
    # k below 2 is a domain error surfaced as exit code 1
    rc = main(["classify", "--concepts", str(cpath), "--figures", str(fpath),
               "--strategy", "mc-ts", "--k", "1", "--oracle-truth", str(tpath),
               "--out", str(tmp_path / "out")])
    assert rc == 1
