"""Command-line entry point.

Subcommands: construct, infer, eval, analyze, stream, serve. By default each
command runs the pipeline in-process; with --server it becomes a thin HTTP
client of a running service instance and writes the returned artifacts
locally. Exit codes: 0 success, 2 config error, 3 backend exhaustion,
4 data error.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from .config import Method, RunConfig
from .errors import AutoCotError, ConfigError
from .runner import (
    analyze_run,
    construct_needs_backend,
    construct_run,
    eval_run,
    prepare_pipeline,
    read_records_csv,
    stream_run,
)

logger = logging.getLogger(__name__)


def _common_options() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--dataset", default="custom", help="dataset name (registry) or custom")
    common.add_argument("--data", dest="data_path", help="corpus file (JSONL)")
    common.add_argument("--format", dest="answer_format",
                        choices=["number", "multiple-choice", "yes-no", "string-seq"],
                        help="answer format for custom datasets")
    common.add_argument("--dataset-format", default="jsonl", choices=["jsonl"],
                        help="corpus file format (reserved)")
    common.add_argument("--backend", default="", help="scripted:<file> | remote:<endpoint>")
    common.add_argument("--embedder", default="hashbow:256:0",
                        help="hashbow:<dim>:<seed> | remote:<endpoint>")
    common.add_argument("--model", default="default", help="completion model name")
    common.add_argument("--cache-dir", dest="cache_dir")
    common.add_argument("--seed", type=int, default=42)
    common.add_argument("--k", type=int, default=None, help="demonstrations per prompt")
    common.add_argument("--max-q-tokens", dest="max_q_tokens", type=int, default=60)
    common.add_argument("--max-steps", dest="max_steps", type=int, default=5)
    common.add_argument("--limit", type=int, default=None, help="use only the first N questions")
    common.add_argument("--server", default=None, help="run via a service instance at this URL")
    common.add_argument("-v", "--verbose", action="store_true")
    return common


def build_parser() -> argparse.ArgumentParser:
    common = _common_options()
    parser = argparse.ArgumentParser(prog="autocot", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p_construct = sub.add_parser("construct", parents=[common],
                                 help="build a demonstration file")
    p_construct.add_argument("--source", default="auto",
                             choices=["auto", "retrieval", "random", "in-cluster",
                                      "manual", "annotated"])
    p_construct.add_argument("--sort", default="min-dist",
                             choices=["min-dist", "max-dist", "random"])
    p_construct.add_argument("--demos", dest="demos_path", help="manual demo file input")
    p_construct.add_argument("--test-id", dest="test_id",
                             help="test question id for per-question sources")
    p_construct.add_argument("--annotated", action="store_true",
                             help="use dataset rationales instead of generation")
    p_construct.add_argument("--out", required=True, help="demo file to write")

    for name in ("infer", "eval"):
        p = sub.add_parser(name, parents=[common],
                           help="run inference and report metrics")
        p.add_argument("--method", default="auto-cot",
                       choices=[m.value for m in Method])
        p.add_argument("--demos", dest="demos_path", help="demo file for few-shot methods")
        p.add_argument("--sort", default="min-dist",
                       choices=["min-dist", "max-dist", "random"])
        p.add_argument("--annotated", action="store_true")
        p.add_argument("--runs", type=int, default=None,
                       help="number of seeded runs to average")
        p.add_argument("--seeds", default=None, help="comma-separated seeds")
        p.add_argument("--baseline-records", dest="baseline_records",
                       help="records CSV of a baseline run, for the unresolving rate")
        p.add_argument("--report", default=None, help="report JSON path")
        p.add_argument("--records", default=None, help="per-record CSV path")

    p_analyze = sub.add_parser("analyze", parents=[common],
                               help="cluster error rates and 2-D projection")
    p_analyze.add_argument("--clusters", default=None,
                           help="comma-separated cluster counts, e.g. 2,4,6,8")
    p_analyze.add_argument("--out-dir", dest="out_dir", required=True)

    p_stream = sub.add_parser("stream", parents=[common],
                              help="streaming bootstrap over question batches")
    p_stream.add_argument("--batch-size", dest="batch_size", type=int, default=30)
    p_stream.add_argument("--sort", default="min-dist",
                          choices=["min-dist", "max-dist", "random"])
    p_stream.add_argument("--out", required=True, help="per-batch accuracy CSV")

    p_serve = sub.add_parser("serve", parents=[common], help="run the HTTP service")
    p_serve.add_argument("--host", default="127.0.0.1")
    p_serve.add_argument("--port", type=int, default=8000)

    return parser


def config_from_args(args: argparse.Namespace) -> RunConfig:
    seeds: tuple[int, ...] = ()
    if getattr(args, "seeds", None):
        seeds = tuple(int(s) for s in args.seeds.split(","))
        if getattr(args, "runs", None) and len(seeds) != args.runs:
            raise ConfigError(f"--runs {args.runs} does not match {len(seeds)} seeds")
    elif getattr(args, "runs", None):
        seeds = tuple(args.seed + i for i in range(args.runs))
    clusters: tuple[int, ...] = ()
    if getattr(args, "clusters", None):
        clusters = tuple(int(c) for c in args.clusters.split(","))
    return RunConfig(
        dataset=args.dataset,
        data_path=args.data_path,
        answer_format=args.answer_format,
        method=getattr(args, "method", Method.AUTO_COT.value),
        k=args.k,
        seed=args.seed,
        seeds=seeds,
        backend=args.backend,
        embedder=args.embedder,
        model=args.model,
        cache_dir=args.cache_dir,
        max_q_tokens=args.max_q_tokens,
        max_steps=args.max_steps,
        source=getattr(args, "source", "auto"),
        sort=getattr(args, "sort", "min-dist"),
        annotated=getattr(args, "annotated", False),
        demos_path=getattr(args, "demos_path", None),
        test_id=getattr(args, "test_id", None),
        batch_size=getattr(args, "batch_size", 30),
        clusters=clusters,
        limit=args.limit,
    )


def _write_artifacts(files: dict[str, str], targets: dict[str, str], manifest, manifest_path: str) -> None:
    for logical, target in targets.items():
        if logical in files and target:
            path = Path(target)
            path.parent.mkdir(parents=True, exist_ok=True)
            path.write_text(files[logical], encoding="utf-8")
    if manifest is not None:
        manifest.write(manifest_path)


def _run_local(args: argparse.Namespace) -> int:
    cfg = config_from_args(args)
    command = args.command

    if command == "construct":
        pipeline = prepare_pipeline(
            cfg, need_backend=construct_needs_backend(cfg.source, cfg.annotated)
        )
        outcome = construct_run(pipeline)
        _write_artifacts(
            outcome.files, {"demos.json": args.out}, outcome.manifest,
            f"{args.out}.manifest.json",
        )
        for warning in outcome.warnings:
            logger.warning("%s", warning)
        print(f"wrote {len(outcome.demos)} demonstrations to {args.out}")
        return 0

    if command in ("infer", "eval"):
        pipeline = prepare_pipeline(cfg)
        baseline = None
        if getattr(args, "baseline_records", None):
            baseline = read_records_csv(Path(args.baseline_records).read_text())
        outcome = eval_run(pipeline, baseline_records=baseline)
        report_path = args.report or "report.json"
        targets = {"report.json": report_path, "records.csv": args.records or ""}
        _write_artifacts(outcome.files, targets, outcome.manifest,
                         f"{report_path}.manifest.json")
        print(json.dumps(outcome.report, indent=2, sort_keys=True))
        return 0

    if command == "analyze":
        pipeline = prepare_pipeline(cfg)
        outcome = analyze_run(pipeline)
        out_dir = Path(args.out_dir)
        targets = {
            "cluster_errors.csv": str(out_dir / "cluster_errors.csv"),
            "projection.csv": str(out_dir / "projection.csv"),
        }
        _write_artifacts(outcome.files, targets, outcome.manifest,
                         str(out_dir / "manifest.json"))
        for k, table in outcome.error_tables.items():
            print(f"k={k}: frequent-error cluster {table['frequent_error_cluster']}")
        return 0

    if command == "stream":
        pipeline = prepare_pipeline(cfg)
        outcome = stream_run(pipeline)
        _write_artifacts(outcome.files, {"batches.csv": args.out}, outcome.manifest,
                         f"{args.out}.manifest.json")
        for row in outcome.rows:
            print(f"batch {row['batch']}: {row['correct']}/{row['n']} = {row['accuracy']:.3f}")
        return 0

    if command == "serve":
        import uvicorn

        from .service.app import create_app

        uvicorn.run(create_app(), host=args.host, port=args.port)
        return 0

    raise AssertionError(f"unhandled command {command}")


def _run_remote(args: argparse.Namespace) -> int:
    """Thin-client mode: ship the run to a service instance, write results."""
    from .client import ServiceClient

    cfg = config_from_args(args)
    client = ServiceClient(args.server)
    command = args.command
    if command == "construct":
        payload = client.construct(cfg)
        Path(args.out).parent.mkdir(parents=True, exist_ok=True)
        Path(args.out).write_text(payload["files"]["demos.json"], encoding="utf-8")
        Path(f"{args.out}.manifest.json").write_text(
            json.dumps(payload["manifest"], indent=2, sort_keys=True) + "\n"
        )
        print(f"wrote {len(payload['demos'])} demonstrations to {args.out}")
        return 0
    if command in ("infer", "eval"):
        payload = client.evaluate(cfg)
        report_path = Path(args.report or "report.json")
        report_path.parent.mkdir(parents=True, exist_ok=True)
        report_path.write_text(payload["files"]["report.json"], encoding="utf-8")
        if args.records:
            Path(args.records).write_text(payload["files"]["records.csv"], encoding="utf-8")
        print(json.dumps(payload["report"], indent=2, sort_keys=True))
        return 0
    if command == "analyze":
        payload = client.analyze(cfg)
        out_dir = Path(args.out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        (out_dir / "cluster_errors.csv").write_text(payload["files"]["cluster_errors.csv"])
        (out_dir / "projection.csv").write_text(payload["files"]["projection.csv"])
        print("analysis written to", out_dir)
        return 0
    if command == "stream":
        payload = client.stream(cfg)
        Path(args.out).write_text(payload["files"]["batches.csv"], encoding="utf-8")
        for row in payload["rows"]:
            print(f"batch {row['batch']}: {row['correct']}/{row['n']} = {row['accuracy']:.3f}")
        return 0
    raise AssertionError(f"command {command} has no remote mode")


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        if args.server and args.command != "serve":
            return _run_remote(args)
        return _run_local(args)
    except AutoCotError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code


if __name__ == "__main__":
    sys.exit(main())
