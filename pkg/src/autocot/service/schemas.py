"""Pydantic request/response models for the HTTP service.

A request names its corpus either by a server-local `path` or by inline
`records` (the same objects as dataset file lines). The completion backend is
either a spec string ("scripted:<file>" / "remote:<endpoint>") or inline
`script` entries, which lets fully offline clients ship their script with the
request.
"""

from __future__ import annotations

from pydantic import BaseModel, Field


class CorpusIn(BaseModel):
    dataset: str = "custom"
    path: str | None = None
    records: list[dict] | None = None
    answer_format: str | None = None


class ScriptEntry(BaseModel):
    prompt: str | None = None
    prompt_sha256: str | None = None
    completion: str


class BackendIn(BaseModel):
    spec: str = ""  # "scripted:<file>" | "remote:<endpoint>"
    script: list[ScriptEntry] | None = None
    model: str = "default"


class RunOptions(BaseModel):
    k: int | None = None
    seed: int = 42
    seeds: list[int] = Field(default_factory=list)
    embedder: str = "hashbow:256:0"
    cache_dir: str | None = None
    max_q_tokens: int = 60
    max_steps: int = 5
    sort: str = "min-dist"
    annotated: bool = False
    limit: int | None = None


class DemoOut(BaseModel):
    question: str
    rationale: str
    answer: str


class ConstructRequest(BaseModel):
    corpus: CorpusIn
    backend: BackendIn = Field(default_factory=BackendIn)
    options: RunOptions = Field(default_factory=RunOptions)
    source: str = "auto"
    test_id: str | None = None
    demos: list[DemoOut] | None = None  # manual source: inline demo file


class ManifestOut(BaseModel):
    command: str
    config_hash: str
    seeds: list[int]
    cache: dict
    outputs: dict


class ConstructResponse(BaseModel):
    demos: list[DemoOut]
    warnings: list[str]
    files: dict[str, str]
    manifest: ManifestOut


class EvalRequest(BaseModel):
    corpus: CorpusIn
    backend: BackendIn = Field(default_factory=BackendIn)
    options: RunOptions = Field(default_factory=RunOptions)
    method: str = "auto-cot"
    demos: list[DemoOut] | None = None
    baseline_records_csv: str | None = None


class RecordOut(BaseModel):
    id: str
    cluster: int | None
    correct: bool
    predicted: str
    gold: str | None


class EvalResponse(BaseModel):
    report: dict
    records: list[RecordOut]
    files: dict[str, str]
    manifest: ManifestOut


class AnalyzeRequest(BaseModel):
    corpus: CorpusIn
    backend: BackendIn = Field(default_factory=BackendIn)
    options: RunOptions = Field(default_factory=RunOptions)
    clusters: list[int] = Field(default_factory=list)


class AnalyzeResponse(BaseModel):
    error_tables: dict[int, dict]
    projection: list[dict]
    files: dict[str, str]
    manifest: ManifestOut


class StreamRequest(BaseModel):
    corpus: CorpusIn
    backend: BackendIn = Field(default_factory=BackendIn)
    options: RunOptions = Field(default_factory=RunOptions)
    batch_size: int = 30


class StreamResponse(BaseModel):
    rows: list[dict]
    memory_size: int
    files: dict[str, str]
    manifest: ManifestOut


class HealthResponse(BaseModel):
    status: str
    version: str
