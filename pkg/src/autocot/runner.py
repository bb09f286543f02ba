"""Pipeline orchestration shared by the CLI and the HTTP service.

Each run_* function produces an outcome holding (a) structured results,
(b) `files`: the exact text of every artifact the caller should persist or
return, and (c) a manifest hashing those artifacts — so the CLI and the
service emit byte-identical outputs for the same configuration.
"""

from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass, field

from .cluster import kmeans, pca_project_2d
from .config import Method, RunConfig, build_backend, build_embedder, resolve_dataset_spec
from .corpus import DatasetSpec, Question, load_dataset
from .cot import Demonstration
from .demo import (
    SelectionCriteria,
    SortMode,
    annotated_chain_for,
    construct_demos,
    default_criteria,
    load_manual_demos,
    sample_in_cluster,
    sample_random_q,
    sample_retrieval_q,
    select_from_chains,
    strip_rationales,
)
from .embed import embed_corpus
from .errors import ConfigError
from .evaluate import (
    InferenceRecord,
    accuracy,
    cluster_error_rates,
    fixed_demos,
    no_demos,
    run_inference,
    unresolving_rate,
)
from .llm import GREEDY, DecodingParams
from .manifest import RunManifest, cache_stats
from .stream import make_batches, run_bootstrap
from .util import sha256_text


@dataclass
class Pipeline:
    cfg: RunConfig
    spec: DatasetSpec
    questions: list[Question]
    backend: object
    embedder: object
    params: DecodingParams = GREEDY


def prepare_pipeline(
    cfg: RunConfig,
    questions: list[Question] | None = None,
    script_entries: list[dict] | None = None,
    need_backend: bool = True,
) -> Pipeline:
    spec = resolve_dataset_spec(cfg)
    if questions is None:
        if not cfg.data_path:
            raise ConfigError("no corpus file given (--data)")
        questions = load_dataset(cfg.data_path, spec)
    if cfg.limit:
        questions = questions[: cfg.limit]
    backend = build_backend(cfg, script_entries) if need_backend else None
    embedder = build_embedder(cfg)
    return Pipeline(cfg=cfg, spec=spec, questions=questions, backend=backend, embedder=embedder)


def construct_needs_backend(source: str, annotated: bool) -> bool:
    """Chain generation is needed for auto construction and for the sampling
    sources unless they reuse annotated chains."""
    if source == "auto":
        return True
    return source in ("retrieval", "random", "in-cluster") and not annotated


def criteria_for(p: Pipeline) -> SelectionCriteria:
    base = default_criteria(p.spec.answer_format)
    return SelectionCriteria(
        max_question_tokens=p.cfg.max_q_tokens,
        max_rationale_steps=p.cfg.max_steps,
        require_answer_in_rationale=base.require_answer_in_rationale,
    )


def _demo_file_text(demos: list[Demonstration]) -> str:
    payload = [
        {
            "question": d.question.text,
            "rationale": d.chain.rationale,
            "answer": d.chain.answer,
        }
        for d in demos
    ]
    return json.dumps(payload, indent=2, ensure_ascii=False) + "\n"


def _records_csv(records: list[InferenceRecord]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["id", "cluster", "correct", "predicted", "gold"])
    for r in records:
        writer.writerow(
            [
                r.question_id,
                "" if r.cluster is None else r.cluster,
                int(r.correct),
                r.predicted,
                r.gold or "",
            ]
        )
    return buf.getvalue()


def read_records_csv(text: str) -> list[InferenceRecord]:
    reader = csv.DictReader(io.StringIO(text))
    records = []
    for row in reader:
        records.append(
            InferenceRecord(
                question_id=row["id"],
                prompt_sha256="",
                rationale="",
                predicted=row["predicted"],
                gold=row["gold"] or None,
                correct=row["correct"] == "1",
                cluster=int(row["cluster"]) if row["cluster"] else None,
            )
        )
    return records


def _manifest(command: str, cfg: RunConfig, backend, seeds, files: dict[str, str]) -> RunManifest:
    return RunManifest(
        command=command,
        config_hash=cfg.config_hash(),
        seeds=list(seeds),
        cache=cache_stats(backend) if backend is not None else {},
        outputs={name: sha256_text(text) for name, text in sorted(files.items())},
    )


# -- construct ---------------------------------------------------------------


@dataclass
class ConstructOutcome:
    demos: list[Demonstration]
    warnings: list[str] = field(default_factory=list)
    files: dict[str, str] = field(default_factory=dict)
    manifest: RunManifest | None = None


def construct_run(p: Pipeline) -> ConstructOutcome:
    cfg = p.cfg
    k = p.spec.default_k
    criteria = criteria_for(p)
    sort_mode = SortMode(cfg.sort)
    warnings: list[str] = []

    if cfg.source == "manual":
        if not cfg.demos_path:
            raise ConfigError("--source manual needs --demos <file>")
        demos = load_manual_demos(cfg.demos_path, p.spec.answer_format)
    elif cfg.source == "auto":
        vectors = embed_corpus(p.questions, p.embedder)
        result = construct_demos(
            p.questions, vectors, k, criteria, p.backend, p.params,
            sort_mode=sort_mode, seed=cfg.seed,
        )
        demos = result.demos
        warnings = [
            f"cluster {w.cluster} exhausted criteria; fallback index {w.fallback_index}"
            for w in result.warnings
        ]
    elif cfg.source == "annotated":
        annotated = [q for q in p.questions if q.annotated_chain]
        if not annotated:
            raise ConfigError("--source annotated needs questions with rationales")
        vectors = embed_corpus(p.questions, p.embedder)
        model = kmeans(vectors, min(k, len(p.questions)), seed=cfg.seed)
        chains = {
            i: annotated_chain_for(q)
            for i, q in enumerate(p.questions)
            if q.annotated_chain and q.gold_answer
        }
        result = select_from_chains(
            p.questions, chains, model, criteria, sort_mode=sort_mode, seed=cfg.seed
        )
        demos = result.demos
        warnings = [
            f"cluster {w.cluster} exhausted criteria; fallback index {w.fallback_index}"
            for w in result.warnings
        ]
    elif cfg.source in ("retrieval", "random", "in-cluster"):
        if cfg.test_id is None:
            raise ConfigError(
                f"--source {cfg.source} builds per-test-question demos; pass --test-id"
            )
        index = int(cfg.test_id)
        if not 0 <= index < len(p.questions):
            raise ConfigError(f"--test-id {cfg.test_id} out of range")
        test = p.questions[index]
        if cfg.source == "retrieval":
            vectors = embed_corpus(p.questions, p.embedder)
            demos = sample_retrieval_q(
                test, p.questions, vectors, k, p.backend, p.params,
                annotated=cfg.annotated,
            )
        elif cfg.source == "random":
            demos = sample_random_q(
                test, p.questions, k, cfg.seed, p.backend, p.params,
                annotated=cfg.annotated,
            )
        else:
            vectors = embed_corpus(p.questions, p.embedder)
            model = kmeans(vectors, min(k, len(p.questions)), seed=cfg.seed)
            demos = sample_in_cluster(
                test, model, p.questions, k, cfg.seed, p.backend, p.params,
                annotated=cfg.annotated,
            )
    else:
        raise ConfigError(f"unknown demo source {cfg.source!r}")

    files = {"demos.json": _demo_file_text(demos)}
    manifest = _manifest("construct", cfg, p.backend, [cfg.seed], files)
    return ConstructOutcome(demos=demos, warnings=warnings, files=files, manifest=manifest)


# -- eval ----------------------------------------------------------------------


@dataclass
class EvalOutcome:
    report: dict
    records: list[InferenceRecord]
    files: dict[str, str] = field(default_factory=dict)
    manifest: RunManifest | None = None


def _provider_for(p: Pipeline, method: Method, seed: int):
    """Demo provider plus prompt style for one evaluation method."""
    cfg = p.cfg
    k = p.spec.default_k
    fmt = p.spec.answer_format
    if method in (Method.ZERO_SHOT, Method.ZERO_SHOT_COT):
        return no_demos, method is Method.ZERO_SHOT_COT
    if method in (Method.MANUAL_COT, Method.FEW_SHOT):
        if not cfg.demos_path:
            raise ConfigError(f"--method {method.value} needs --demos <file>")
        demos = load_manual_demos(cfg.demos_path, fmt)
        if method is Method.FEW_SHOT:
            return fixed_demos(strip_rationales(demos)), False
        return fixed_demos(demos), True
    if method is Method.AUTO_COT:
        if cfg.demos_path:
            return fixed_demos(load_manual_demos(cfg.demos_path, fmt)), True
        vectors = embed_corpus(p.questions, p.embedder)
        result = construct_demos(
            p.questions, vectors, k, criteria_for(p), p.backend, p.params,
            sort_mode=SortMode(cfg.sort), seed=seed,
        )
        return fixed_demos(result.demos), True
    if method is Method.RETRIEVAL_Q_COT:
        vectors = embed_corpus(p.questions, p.embedder)

        def retrieval_provider(q: Question):
            return sample_retrieval_q(
                q, p.questions, vectors, k, p.backend, p.params,
                annotated=cfg.annotated,
            )

        return retrieval_provider, True
    if method is Method.RANDOM_Q_COT:

        def random_provider(q: Question):
            return sample_random_q(
                q, p.questions, k, seed, p.backend, p.params, annotated=cfg.annotated
            )

        return random_provider, True
    if method is Method.IN_CLUSTER:
        vectors = embed_corpus(p.questions, p.embedder)
        model = kmeans(vectors, min(k, len(p.questions)), seed=seed)

        def in_cluster_provider(q: Question):
            return sample_in_cluster(
                q, model, p.questions, k, seed, p.backend, p.params,
                annotated=cfg.annotated,
            )

        return in_cluster_provider, True
    raise ConfigError(f"unknown method {cfg.method!r}")


def eval_run(p: Pipeline, baseline_records: list[InferenceRecord] | None = None) -> EvalOutcome:
    cfg = p.cfg
    method = Method(cfg.method)
    seeds = list(cfg.seeds) or [cfg.seed]

    per_seed: list[dict] = []
    first_records: list[InferenceRecord] | None = None
    for seed in seeds:
        provider, cot = _provider_for(p, method, seed)
        records = run_inference(p.questions, provider, p.backend, p.params, cot=cot)
        per_seed.append({"seed": seed, "accuracy": accuracy(records)})
        if first_records is None:
            first_records = records
    assert first_records is not None

    mean_accuracy = sum(s["accuracy"] for s in per_seed) / len(per_seed)
    report = {
        "method": method.value,
        "dataset": cfg.dataset,
        "n": len(p.questions),
        "correct": sum(r.correct for r in first_records),
        "accuracy": mean_accuracy,
        "per_seed": per_seed,
    }
    if baseline_records is not None:
        report["unresolving_rate"] = unresolving_rate(baseline_records, first_records)

    files = {
        "report.json": json.dumps(report, indent=2, sort_keys=True) + "\n",
        "records.csv": _records_csv(first_records),
    }
    manifest = _manifest("eval", cfg, p.backend, seeds, files)
    return EvalOutcome(report=report, records=first_records, files=files, manifest=manifest)


# -- analyze -------------------------------------------------------------------


@dataclass
class AnalyzeOutcome:
    error_tables: dict[int, dict]
    projection: list[dict]
    files: dict[str, str] = field(default_factory=dict)
    manifest: RunManifest | None = None


def analyze_run(p: Pipeline) -> AnalyzeOutcome:
    """Zero-shot error clustering: run the no-demo baseline over the corpus,
    then report per-cluster error rates for each requested cluster count and
    a 2-D projection for plotting."""
    cfg = p.cfg
    vectors = embed_corpus(p.questions, p.embedder)
    records = run_inference(p.questions, no_demos, p.backend, p.params, cot=True)

    ks = list(cfg.clusters) or [p.spec.default_k]
    error_tables: dict[int, dict] = {}
    for k in ks:
        model = kmeans(vectors, min(k, len(p.questions)), seed=cfg.seed)
        report = cluster_error_rates(records, model)
        error_tables[k] = {
            "rates": report.rates,
            "sizes": report.sizes,
            "frequent_error_cluster": report.frequent_error_cluster,
        }

    base_k = min(p.spec.default_k, len(p.questions))
    model = kmeans(vectors, base_k, seed=cfg.seed)
    points = pca_project_2d(vectors)
    projection = [
        {
            "id": q.id,
            "x": float(points[i, 0]),
            "y": float(points[i, 1]),
            "cluster": int(model.assignment[i]),
            "distance": float(model.distance[i]),
        }
        for i, q in enumerate(p.questions)
    ]

    error_csv = io.StringIO()
    writer = csv.writer(error_csv, lineterminator="\n")
    writer.writerow(["k", "cluster", "size", "error_rate"])
    for k in ks:
        table = error_tables[k]
        for cluster in sorted(table["rates"]):
            writer.writerow(
                [k, cluster, table["sizes"][cluster], f"{table['rates'][cluster]:.6f}"]
            )

    proj_csv = io.StringIO()
    writer = csv.writer(proj_csv, lineterminator="\n")
    writer.writerow(["id", "x", "y", "cluster", "distance"])
    for row in projection:
        writer.writerow(
            [
                row["id"],
                f"{row['x']:.9f}",
                f"{row['y']:.9f}",
                row["cluster"],
                f"{row['distance']:.9f}",
            ]
        )

    files = {
        "cluster_errors.csv": error_csv.getvalue(),
        "projection.csv": proj_csv.getvalue(),
    }
    manifest = _manifest("analyze", cfg, p.backend, [cfg.seed], files)
    return AnalyzeOutcome(
        error_tables=error_tables, projection=projection, files=files, manifest=manifest
    )


# -- stream --------------------------------------------------------------------


@dataclass
class StreamOutcome:
    rows: list[dict]
    memory_size: int
    files: dict[str, str] = field(default_factory=dict)
    manifest: RunManifest | None = None


def stream_run(p: Pipeline) -> StreamOutcome:
    cfg = p.cfg
    batches = make_batches(p.questions, cfg.batch_size)
    result = run_bootstrap(
        batches,
        min(p.spec.default_k, len(p.questions)),
        criteria_for(p),
        p.backend,
        p.embedder,
        params=p.params,
        seed=cfg.seed,
        sort_mode=SortMode(cfg.sort),
    )
    rows = [
        {
            "batch": b.batch,
            "n": len(b.records),
            "correct": sum(r.correct for r in b.records),
            "accuracy": b.accuracy,
        }
        for b in result.batches
    ]
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["batch", "n", "correct", "accuracy"])
    for row in rows:
        writer.writerow(
            [row["batch"], row["n"], row["correct"], f"{row['accuracy']:.6f}"]
        )
    files = {"batches.csv": buf.getvalue()}
    manifest = _manifest("stream", cfg, p.backend, [cfg.seed], files)
    return StreamOutcome(
        rows=rows, memory_size=len(result.memory), files=files, manifest=manifest
    )
