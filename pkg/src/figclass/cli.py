"""Command-line surface: classify, plan, eval, build-dataset, conformance.

Exit codes: 0 success, 1 runtime failure, 2 usage error.
"""
from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

from . import datasetgen
from .backend import (
    BACKEND_URL_ENV,
    Backend,
    BackendConfig,
    HttpBackend,
    make_oracle_backend,
    read_figures_jsonl,
)
from .errors import FigclassError
from .evaluation import EvalReport, confusion_matrix, sem_eq, top1_accuracy, write_report
from .matching import ConceptMatcher
from .strategies import (
    ClassificationResult,
    classify_bc,
    classify_mc_single,
    classify_mc_ts,
    classify_oc,
    plan_tournament,
)
from .taxonomy import ConceptSet, load_concepts_jsonl

STRATEGIES = ("bc", "oc", "mc", "mc-ts")


def run_classify(
    figures,
    concepts: ConceptSet,
    strategy: str,
    backend: Backend,
    k: int = 5,
    seed: int = 0,
    max_workers: int = 1,
) -> list[ClassificationResult]:
    """Classify every figure with one strategy; per-figure seeds derive from
    (seed, figure id) so results do not depend on iteration or completion
    order."""
    matcher = ConceptMatcher(backend) if strategy == "oc" else None
    results = []
    for fig in figures:
        fig_seed = datasetgen._derived_seed(seed, fig.id)
        if strategy == "bc":
            res = classify_bc(fig, concepts, backend, max_workers=max_workers)
        elif strategy == "oc":
            res = classify_oc(fig, concepts, backend, matcher)
        elif strategy == "mc":
            res = classify_mc_single(fig, concepts, backend, rng_seed=fig_seed)
        elif strategy == "mc-ts":
            res = classify_mc_ts(fig, concepts, backend, k=k, rng_seed=fig_seed,
                                 max_workers=max_workers)
        else:
            raise ValueError(f"unknown strategy {strategy!r}")
        results.append(res)
    return results


def results_to_jsonl(results, path) -> None:
    with open(path, "w", encoding="utf-8") as f:
        for res in results:
            f.write(json.dumps(res.to_dict(), sort_keys=True) + "\n")


def _resolve_backend(args) -> Backend:
    if getattr(args, "oracle_truth", None):
        with open(args.oracle_truth, encoding="utf-8") as f:
            raw = json.load(f)
        truth = {(e["figure_id"], e["aspect"]): e["concept_id"] for e in raw}
        return make_oracle_backend(truth, error_rate=getattr(args, "oracle_error_rate", 0.0),
                                   rng_seed=args.seed)
    url = args.backend_url or os.environ.get(BACKEND_URL_ENV)
    if not url:
        raise SystemExit(f"no backend: pass --backend-url or set {BACKEND_URL_ENV}")
    return HttpBackend(BackendConfig(base_url=url, max_in_flight=args.max_concurrency))


def _cmd_classify(args) -> int:
    for path in (args.concepts, args.figures):
        if not Path(path).exists():
            print(f"missing input file: {path}", file=sys.stderr)
            return 2
    concepts = load_concepts_jsonl(args.concepts)
    figures = read_figures_jsonl(args.figures)
    backend = _resolve_backend(args)
    results = run_classify(figures, concepts, args.strategy, backend,
                           k=args.k, seed=args.seed, max_workers=args.max_concurrency)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    results_path = out / "results.jsonl"
    results_to_jsonl(results, results_path)
    config = {"strategy": args.strategy, "k": args.k, "aspect": concepts.aspect,
              "max_concurrency": args.max_concurrency}
    datasetgen.write_manifest(out / "manifest.json", args.seed, config, [results_path])
    print(f"wrote {results_path} ({len(results)} results)")
    return 0


def _cmd_plan(args) -> int:
    plan = plan_tournament(args.num_concepts, args.k)
    per_round = ",".join(map(str, plan.queries_per_round))
    print(f"R={plan.rounds} N={plan.total_queries} per_round=[{per_round}]")
    return 0


def _cmd_eval(args) -> int:
    for path in (args.results, args.gold):
        if not Path(path).exists():
            print(f"missing input file: {path}", file=sys.stderr)
            return 2
    raw = [json.loads(line) for line in open(args.results, encoding="utf-8") if line.strip()]
    figures = read_figures_jsonl(args.gold)
    if not raw:
        print("empty results file", file=sys.stderr)
        return 1
    aspect = raw[0]["aspect"]
    gold = {f.id: f.ground_truth[aspect] for f in figures if aspect in f.ground_truth}

    from .strategies import ClassificationResult as CR
    from .taxonomy import Concept

    results = [
        CR(r["figure_id"], r["aspect"], Concept(r["predicted"], r["predicted"], r["aspect"]),
           r["strategy"], r["queries_used"], r.get("score"))
        for r in raw
    ]
    top1 = top1_accuracy(results, gold)
    report = EvalReport(
        strategy=raw[0]["strategy"], aspect=aspect, n_samples=len(results), top1=top1,
        total_queries=sum(r.queries_used for r in results),
    )
    if args.semeq:
        judge = _resolve_backend(args)
        hits = sum(sem_eq(r.predicted.label, gold[r.figure_id], judge, aspect=aspect)
                   for r in results)
        report.semeq = hits / len(results)
    out = Path(args.out)
    written = write_report(report, out)
    if args.confusion:
        labels = sorted(set(gold.values()) | {r.predicted.id for r in results})
        confusion_matrix(results, gold, labels).to_csv(out / "confusion.csv")
        written.append(out / "confusion.csv")
    print(f"top1={top1:.4f}; wrote {', '.join(map(str, written))}")
    return 0


def _cmd_build_dataset(args) -> int:
    if not Path(args.corpus).exists():
        print(f"missing input file: {args.corpus}", file=sys.stderr)
        return 2
    figures = read_figures_jsonl(args.corpus)
    config = datasetgen.SplitConfig(
        train_per_concept=args.train_per_concept,
        valid_target=args.valid_target,
        test_target=args.test_target,
        rng_seed=args.seed,
    )
    cls_ds = datasetgen.build_cls_splits(figures, args.aspect, config)
    concepts = load_concepts_jsonl(args.concepts) if args.concepts else None
    if concepts is None:
        from .taxonomy import load_concepts

        concepts = load_concepts([{"aspect": args.aspect, "label": cid}
                                  for cid in cls_ds.concept_ids()])
    vqa = datasetgen.build_vqa(cls_ds, concepts, rng_seed=args.seed)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    cls_path, vqa_path = out / "cls.jsonl", out / "vqa.jsonl"
    datasetgen.write_cls_jsonl(cls_ds, cls_path)
    datasetgen.write_vqa_jsonl(vqa, vqa_path)
    datasetgen.write_manifest(out / "manifest.json", args.seed,
                              {"aspect": args.aspect, "train_per_concept": args.train_per_concept,
                               "valid_target": args.valid_target, "test_target": args.test_target},
                              [cls_path, vqa_path])
    sizes = {s: cls_ds.size(s) for s in datasetgen.SPLITS}
    print(f"splits {sizes}; {len(vqa)} question records")
    return 0


def cmd_conformance(backend_url: str, timeout: float = 10.0) -> tuple[bool, list[str]]:
    """Probe a server for wire-protocol conformance.  Returns overall
    pass/fail plus one line per check."""
    import httpx

    lines: list[str] = []
    ok = True

    def check(name: str, passed: bool, detail: str = "") -> None:
        nonlocal ok
        ok &= passed
        lines.append(f"{'PASS' if passed else 'FAIL'} {name}" + (f": {detail}" if detail else ""))

    with httpx.Client(base_url=backend_url, timeout=timeout) as client:
        try:
            resp = client.post("/v1/health", json={})
            check("health", resp.status_code == 200 and "status" in resp.json(),
                  f"status={resp.status_code}")
        except Exception as exc:  # noqa: BLE001
            check("health", False, str(exc))
            return False, lines

        resp = client.post("/v1/answer", json={"prompt": "conformance probe", "want_logprobs": True})
        if resp.status_code != 200:
            check("answer.status", False, f"status={resp.status_code}")
        else:
            body = resp.json()
            for fld in ("text", "token_logprobs", "cumulative_logprob"):
                check(f"answer.{fld}", fld in body, "missing field" if fld not in body else "")
            if all(f in body for f in ("token_logprobs", "cumulative_logprob")):
                pairs = body["token_logprobs"]
                shape_ok = all(isinstance(p, list) and len(p) == 2 for p in pairs)
                check("answer.token_logprobs.shape", shape_ok)
                if shape_ok and pairs:
                    total = sum(lp for _, lp in pairs)
                    check("answer.cumulative_consistency",
                          abs(total - body["cumulative_logprob"]) <= 1e-9)
                    check("answer.logprobs_nonpositive", all(lp <= 1e-12 for _, lp in pairs))

        r1 = client.post("/v1/embed", json={"texts": ["a", "a"]})
        if r1.status_code != 200 or "vectors" not in r1.json():
            check("embed.vectors", False, f"status={r1.status_code}")
        else:
            vectors = r1.json()["vectors"]
            check("embed.count", len(vectors) == 2)
            check("embed.identical_inputs", vectors[0] == vectors[1])
            r2 = client.post("/v1/embed", json={"texts": ["a"]})
            check("embed.deterministic", r2.status_code == 200 and r2.json()["vectors"][0] == vectors[0])

        bad = client.post("/v1/answer", content=b"{not json", headers={"Content-Type": "application/json"})
        check("error.malformed_json_400", bad.status_code == 400, f"status={bad.status_code}")
        missing = client.post("/v1/answer", json={"want_logprobs": True})
        check("error.missing_prompt_4xx", 400 <= missing.status_code < 500,
              f"status={missing.status_code}")
        empty = client.post("/v1/embed", json={"texts": []})
        check("error.empty_texts_4xx", 400 <= empty.status_code < 500, f"status={empty.status_code}")

    return ok, lines


def _cmd_conformance(args) -> int:
    url = args.backend_url or os.environ.get(BACKEND_URL_ENV)
    if not url:
        print(f"no backend: pass --backend-url or set {BACKEND_URL_ENV}", file=sys.stderr)
        return 2
    ok, lines = cmd_conformance(url)
    print("\n".join(lines))
    print("CONFORMANCE " + ("PASS" if ok else "FAIL"))
    return 0 if ok else 1


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="figclass")
    sub = parser.add_subparsers(dest="command", required=True)

    def add_backend_flags(p):
        p.add_argument("--backend-url", default=None)
        p.add_argument("--max-concurrency", type=int, default=8)
        p.add_argument("--oracle-truth", default=None,
                       help="JSON truth table; use a client-side oracle instead of HTTP")
        p.add_argument("--oracle-error-rate", type=float, default=0.0)

    p = sub.add_parser("classify", help="classify figures with one strategy")
    p.add_argument("--concepts", required=True)
    p.add_argument("--figures", required=True)
    p.add_argument("--strategy", choices=STRATEGIES, required=True)
    p.add_argument("--k", type=int, default=5)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--aspect", default=None)
    p.add_argument("--out", required=True)
    add_backend_flags(p)
    p.set_defaults(func=_cmd_classify)

    p = sub.add_parser("plan", help="print the tournament query budget")
    p.add_argument("num_concepts", type=int)
    p.add_argument("k", type=int)
    p.set_defaults(func=_cmd_plan)

    p = sub.add_parser("eval", help="score a results file against gold")
    p.add_argument("--results", required=True)
    p.add_argument("--gold", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--semeq", action="store_true")
    p.add_argument("--confusion", action="store_true")
    p.add_argument("--seed", type=int, default=0)
    add_backend_flags(p)
    p.set_defaults(func=_cmd_eval)

    p = sub.add_parser("build-dataset", help="build classification and question splits")
    p.add_argument("--corpus", required=True)
    p.add_argument("--aspect", required=True)
    p.add_argument("--concepts", default=None)
    p.add_argument("--train-per-concept", type=int, default=150)
    p.add_argument("--valid-target", type=int, default=1000)
    p.add_argument("--test-target", type=int, default=1000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_build_dataset)

    p = sub.add_parser("conformance", help="check a server against the wire protocol")
    p.add_argument("--backend-url", default=None)
    p.set_defaults(func=_cmd_conformance)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except FigclassError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    raise SystemExit(main())
