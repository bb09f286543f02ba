"""FastAPI service wrapping the pipeline runner.

Endpoints mirror the CLI subcommands: /construct, /eval, /analyze, /stream,
plus /healthz. Domain errors map to HTTP 400 (config), 422 (data), and 502
(backend exhaustion).
"""

from __future__ import annotations

import json
import tempfile
from pathlib import Path

from fastapi import FastAPI, HTTPException

from .. import __version__
from ..config import RunConfig
from ..corpus import Question, load_dataset
from ..errors import BackendError, ConfigError, DataError
from ..runner import (
    Pipeline,
    analyze_run,
    construct_needs_backend,
    construct_run,
    eval_run,
    prepare_pipeline,
    read_records_csv,
    stream_run,
)
from .schemas import (
    AnalyzeRequest,
    AnalyzeResponse,
    ConstructRequest,
    ConstructResponse,
    DemoOut,
    EvalRequest,
    EvalResponse,
    HealthResponse,
    ManifestOut,
    RecordOut,
    StreamRequest,
    StreamResponse,
)


def _config_from(request, method: str | None = None, source: str | None = None,
                 command_fields: dict | None = None) -> RunConfig:
    opts = request.options
    return RunConfig(
        dataset=request.corpus.dataset,
        data_path=request.corpus.path,
        answer_format=request.corpus.answer_format,
        method=method or "auto-cot",
        k=opts.k,
        seed=opts.seed,
        seeds=tuple(opts.seeds),
        backend=request.backend.spec,
        embedder=opts.embedder,
        model=request.backend.model,
        cache_dir=opts.cache_dir,
        max_q_tokens=opts.max_q_tokens,
        max_steps=opts.max_steps,
        source=source or "auto",
        sort=opts.sort,
        annotated=opts.annotated,
        limit=opts.limit,
        **(command_fields or {}),
    )


def _inline_questions(request) -> list[Question] | None:
    """Materialize inline corpus records through the standard loader so the
    service applies exactly the file-format validation the CLI does."""
    records = request.corpus.records
    if records is None:
        return None
    cfg = _config_from(request)
    from ..config import resolve_dataset_spec

    spec = resolve_dataset_spec(cfg)
    with tempfile.NamedTemporaryFile(
        "w", suffix=".jsonl", delete=False, encoding="utf-8"
    ) as fh:
        for record in records:
            fh.write(json.dumps(record, ensure_ascii=False) + "\n")
        tmp = fh.name
    try:
        return load_dataset(tmp, spec)
    finally:
        Path(tmp).unlink(missing_ok=True)


def _script_entries(request) -> list[dict] | None:
    if request.backend.script is None:
        return None
    return [entry.model_dump(exclude_none=True) for entry in request.backend.script]


def _prepare(request, method: str | None = None, source: str | None = None,
             command_fields: dict | None = None, need_backend: bool = True) -> Pipeline:
    cfg = _config_from(request, method=method, source=source,
                       command_fields=command_fields)
    return prepare_pipeline(
        cfg,
        questions=_inline_questions(request),
        script_entries=_script_entries(request),
        need_backend=need_backend,
    )


def create_app() -> FastAPI:
    app = FastAPI(title="autocot", version=__version__)

    @app.exception_handler(ConfigError)
    async def _config_error(_request, exc: ConfigError):
        raise HTTPException(status_code=400, detail=str(exc))

    @app.exception_handler(DataError)
    async def _data_error(_request, exc: DataError):
        raise HTTPException(status_code=422, detail=str(exc))

    @app.exception_handler(BackendError)
    async def _backend_error(_request, exc: BackendError):
        raise HTTPException(status_code=502, detail=str(exc))

    @app.get("/healthz", response_model=HealthResponse)
    def healthz() -> HealthResponse:
        return HealthResponse(status="ok", version=__version__)

    @app.post("/construct", response_model=ConstructResponse)
    def construct(request: ConstructRequest) -> ConstructResponse:
        command_fields = {"test_id": request.test_id}
        if request.source == "manual" and request.demos is not None:
            # inline manual demos: stage them as a server-side temp file
            with tempfile.NamedTemporaryFile(
                "w", suffix=".json", delete=False, encoding="utf-8"
            ) as fh:
                json.dump([d.model_dump() for d in request.demos], fh)
                command_fields["demos_path"] = fh.name
        pipeline = _prepare(
            request,
            source=request.source,
            command_fields=command_fields,
            need_backend=construct_needs_backend(
                request.source, request.options.annotated
            ),
        )
        try:
            outcome = construct_run(pipeline)
        finally:
            staged = command_fields.get("demos_path")
            if staged:
                Path(staged).unlink(missing_ok=True)
        return ConstructResponse(
            demos=[
                DemoOut(
                    question=d.question.text,
                    rationale=d.chain.rationale,
                    answer=d.chain.answer,
                )
                for d in outcome.demos
            ],
            warnings=outcome.warnings,
            files=outcome.files,
            manifest=ManifestOut(**outcome.manifest.to_dict()),
        )

    @app.post("/eval", response_model=EvalResponse)
    def evaluate(request: EvalRequest) -> EvalResponse:
        command_fields = {}
        staged = None
        if request.demos is not None:
            with tempfile.NamedTemporaryFile(
                "w", suffix=".json", delete=False, encoding="utf-8"
            ) as fh:
                json.dump([d.model_dump() for d in request.demos], fh)
                staged = fh.name
            command_fields["demos_path"] = staged
        pipeline = _prepare(request, method=request.method,
                            command_fields=command_fields)
        baseline = (
            read_records_csv(request.baseline_records_csv)
            if request.baseline_records_csv
            else None
        )
        try:
            outcome = eval_run(pipeline, baseline_records=baseline)
        finally:
            if staged:
                Path(staged).unlink(missing_ok=True)
        return EvalResponse(
            report=outcome.report,
            records=[
                RecordOut(
                    id=r.question_id,
                    cluster=r.cluster,
                    correct=r.correct,
                    predicted=r.predicted,
                    gold=r.gold,
                )
                for r in outcome.records
            ],
            files=outcome.files,
            manifest=ManifestOut(**outcome.manifest.to_dict()),
        )

    @app.post("/analyze", response_model=AnalyzeResponse)
    def analyze(request: AnalyzeRequest) -> AnalyzeResponse:
        pipeline = _prepare(
            request, command_fields={"clusters": tuple(request.clusters)}
        )
        outcome = analyze_run(pipeline)
        return AnalyzeResponse(
            error_tables=outcome.error_tables,
            projection=outcome.projection,
            files=outcome.files,
            manifest=ManifestOut(**outcome.manifest.to_dict()),
        )

    @app.post("/stream", response_model=StreamResponse)
    def stream(request: StreamRequest) -> StreamResponse:
        pipeline = _prepare(
            request, command_fields={"batch_size": request.batch_size}
        )
        outcome = stream_run(pipeline)
        return StreamResponse(
            rows=outcome.rows,
            memory_size=outcome.memory_size,
            files=outcome.files,
            manifest=ManifestOut(**outcome.manifest.to_dict()),
        )

    return app
