"""Demonstration construction and every demonstration-sampling baseline.

The diversity-based construction clusters the corpus, walks each cluster
nearest-center first, generates a zero-shot chain per candidate, and keeps
the first candidate that passes the selection criteria (simple questions,
short rationales, answer present in the rationale for number tasks). The
similarity / random / in-cluster samplers draw per-test-question demo sets
for the comparison baselines.
"""

from __future__ import annotations

import json
import logging
import random
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path

import numpy as np

from .cluster import ClusterModel, kmeans, sort_by_center_distance, top_k_similar
from .corpus import (
    AnswerFormat,
    Question,
    count_question_tokens,
    normalize_gold_answer,
)
from .cot import (
    Demonstration,
    ReasoningChain,
    count_rationale_steps,
    generate_chain,
    make_demonstration,
    render_answer_only_demonstration,
)
from .errors import (
    ClusterTooSmall,
    DataError,
    MalformedRecord,
    MissingAnnotatedChain,
    TooFewPoints,
)
from .llm import GREEDY, DecodingParams
from .util import derived_seed

logger = logging.getLogger(__name__)

DEFAULT_MAX_QUESTION_TOKENS = 60
DEFAULT_MAX_RATIONALE_STEPS = 5


@dataclass(frozen=True)
class SelectionCriteria:
    max_question_tokens: int = DEFAULT_MAX_QUESTION_TOKENS
    max_rationale_steps: int = DEFAULT_MAX_RATIONALE_STEPS
    require_answer_in_rationale: bool = False

    def __post_init__(self):
        if self.max_question_tokens < 1 or self.max_rationale_steps < 1:
            raise ValueError("criteria thresholds must be positive")


def default_criteria(fmt: AnswerFormat) -> SelectionCriteria:
    """Number tasks additionally require the answer to appear inside the
    rationale (multiple-choice and the other formats do not)."""
    return SelectionCriteria(
        require_answer_in_rationale=(fmt is AnswerFormat.NUMBER)
    )


class SortMode(str, Enum):
    MIN_DIST = "min-dist"
    MAX_DIST = "max-dist"
    RANDOM = "random"


class DemoSourceKind(str, Enum):
    AUTO = "auto"
    RETRIEVAL = "retrieval"
    RANDOM = "random"
    IN_CLUSTER = "in-cluster"
    MANUAL = "manual"
    ANNOTATED = "annotated"


@dataclass(frozen=True)
class DemoSource:
    kind: DemoSourceKind
    sort_mode: SortMode = SortMode.MIN_DIST
    seed: int = 42
    path: str | None = None


def meets_criteria(q: Question, chain: ReasoningChain, c: SelectionCriteria) -> bool:
    """Gate a candidate demonstration: question short enough, rationale with
    few enough steps, and (when required) a non-empty answer occurring as a
    substring of the rationale."""
    if count_question_tokens(q.text) > c.max_question_tokens:
        return False
    if chain.step_count > c.max_rationale_steps:
        return False
    if c.require_answer_in_rationale:
        if not chain.answer:
            return False
        if chain.answer not in chain.rationale:
            return False
    return True


@dataclass(frozen=True)
class ClusterExhausted:
    """Non-fatal warning: no candidate in the cluster passed the criteria."""

    cluster: int
    fallback_index: int | None  # question index used instead, None if skipped


@dataclass
class ConstructionResult:
    demos: list[Demonstration]
    warnings: list[ClusterExhausted] = field(default_factory=list)
    model: ClusterModel | None = None


def _candidate_order(model: ClusterModel, cluster: int, sort_mode: SortMode, seed: int) -> list[int]:
    ascending = sort_by_center_distance(model, cluster)
    if sort_mode is SortMode.MIN_DIST:
        return ascending
    if sort_mode is SortMode.MAX_DIST:
        return sorted(ascending, key=lambda i: (-model.distance[i], i))
    rng = random.Random(derived_seed("in-cluster-order", seed, cluster))
    shuffled = list(ascending)
    rng.shuffle(shuffled)
    return shuffled


def select_from_chains(
    questions: list[Question],
    chains: dict[int, ReasoningChain],
    model: ClusterModel,
    criteria: SelectionCriteria,
    sort_mode: SortMode = SortMode.MIN_DIST,
    seed: int = 42,
) -> ConstructionResult:
    """Criteria-gated per-cluster selection over already-generated chains.

    Used directly by the streaming bootstrap (stored chains, no regeneration)
    and by construct_demos after it generates chains on the fly. Clusters are
    visited in ascending index order; within a cluster candidates follow
    `sort_mode`. A cluster whose candidates all fail falls back to its
    nearest-center question with any non-empty answer and records a warning.
    """
    demos: list[Demonstration] = []
    warnings: list[ClusterExhausted] = []
    for cluster in range(model.k):
        order = _candidate_order(model, cluster, sort_mode, seed)
        chosen = None
        for idx in order:
            chain = chains.get(idx)
            if chain is None:
                continue
            if meets_criteria(questions[idx], chain, criteria):
                chosen = idx
                break
        if chosen is None:
            for idx in sort_by_center_distance(model, cluster):
                chain = chains.get(idx)
                if chain is not None and chain.answer:
                    chosen = idx
                    break
            warnings.append(ClusterExhausted(cluster=cluster, fallback_index=chosen))
            logger.warning(
                "cluster %d exhausted selection criteria; fallback=%s",
                cluster,
                chosen,
            )
        if chosen is not None:
            demos.append(make_demonstration(questions[chosen], chains[chosen]))
    return ConstructionResult(demos=demos, warnings=warnings, model=model)


def construct_demos(
    questions: list[Question],
    vectors: np.ndarray,
    k: int,
    criteria: SelectionCriteria,
    backend,
    params: DecodingParams = GREEDY,
    sort_mode: SortMode = SortMode.MIN_DIST,
    seed: int = 42,
) -> ConstructionResult:
    """Diversity-based demonstration construction: cluster the corpus into k
    groups, then take the first criteria-passing candidate per cluster,
    generating each candidate's chain by zero-shot prompting as needed.

    Generation stops early inside a cluster at the first passing candidate,
    so a well-behaved cluster costs exactly one chain. Output order is
    cluster-index order; at most one demonstration per cluster.
    """
    model = kmeans(vectors, k, seed=seed)
    demos: list[Demonstration] = []
    warnings: list[ClusterExhausted] = []
    for cluster in range(model.k):
        order = _candidate_order(model, cluster, sort_mode, seed)
        chains: dict[int, ReasoningChain] = {}
        chosen = None
        for idx in order:
            chain = generate_chain(questions[idx], backend, params)
            chains[idx] = chain
            if meets_criteria(questions[idx], chain, criteria):
                chosen = idx
                break
        if chosen is None:
            for idx in sort_by_center_distance(model, cluster):
                if idx in chains and chains[idx].answer:
                    chosen = idx
                    break
            warnings.append(ClusterExhausted(cluster=cluster, fallback_index=chosen))
            logger.warning(
                "cluster %d exhausted selection criteria; fallback=%s",
                cluster,
                chosen,
            )
        if chosen is not None:
            demos.append(make_demonstration(questions[chosen], chains[chosen]))
    return ConstructionResult(demos=demos, warnings=warnings, model=model)


def annotated_chain_for(q: Question) -> ReasoningChain:
    """Reasoning chain taken from a dataset's annotated rationale; uses the
    gold answer and makes no backend calls."""
    if not q.annotated_chain:
        raise MissingAnnotatedChain(f"question {q.id} has no annotated chain")
    if not q.gold_answer:
        raise MissingAnnotatedChain(f"question {q.id} has no gold answer")
    return ReasoningChain(
        rationale=q.annotated_chain,
        answer_raw="",
        answer=q.gold_answer,
        step_count=count_rationale_steps(q.annotated_chain),
    )


def build_demos_from_annotated(questions: list[Question]) -> list[Demonstration]:
    return [make_demonstration(q, annotated_chain_for(q)) for q in questions]


def _corpus_index(corpus: list[Question], test: Question) -> int:
    for i, q in enumerate(corpus):
        if q.id == test.id:
            return i
    raise ValueError(f"test question {test.id} is not part of the corpus")


def _chain_for(q: Question, backend, params: DecodingParams, annotated: bool) -> ReasoningChain:
    if annotated:
        return annotated_chain_for(q)
    return generate_chain(q, backend, params)


def sample_retrieval_q(
    test: Question,
    corpus: list[Question],
    vectors: np.ndarray,
    k: int,
    backend=None,
    params: DecodingParams = GREEDY,
    annotated: bool = False,
) -> list[Demonstration]:
    """k most similar corpus questions to the test question (query excluded),
    most similar first, each paired with a zero-shot chain (or its annotated
    chain when `annotated`)."""
    query = _corpus_index(corpus, test)
    indices = top_k_similar(query, vectors, k)
    return [
        make_demonstration(corpus[i], _chain_for(corpus[i], backend, params, annotated))
        for i in indices
    ]


def random_sample_indices(n: int, k: int, exclude: int, seed: int, test_id: str) -> list[int]:
    """Seeded uniform sample without replacement, excluding one index. The
    draw is keyed by (seed, test_id) so every test question gets its own
    reproducible sample."""
    population = [i for i in range(n) if i != exclude]
    if len(population) < k:
        raise TooFewPoints(f"need {k} non-test questions, have {len(population)}")
    rng = random.Random(derived_seed("random-q", seed, test_id))
    return rng.sample(population, k)


def sample_random_q(
    test: Question,
    corpus: list[Question],
    k: int,
    seed: int,
    backend=None,
    params: DecodingParams = GREEDY,
    annotated: bool = False,
) -> list[Demonstration]:
    """k corpus questions sampled uniformly at random (test excluded)."""
    exclude = _corpus_index(corpus, test)
    indices = random_sample_indices(len(corpus), k, exclude, seed, test.id)
    return [
        make_demonstration(corpus[i], _chain_for(corpus[i], backend, params, annotated))
        for i in indices
    ]


def in_cluster_sample_indices(
    model: ClusterModel, exclude: int, k: int, seed: int, test_id: str
) -> list[int]:
    cluster = int(model.assignment[exclude])
    members = [int(i) for i in model.members(cluster) if int(i) != exclude]
    if len(members) < k:
        raise ClusterTooSmall(
            f"cluster {cluster} has {len(members)} other members, need {k}"
        )
    rng = random.Random(derived_seed("in-cluster", seed, test_id))
    return rng.sample(members, k)


def sample_in_cluster(
    test: Question,
    model: ClusterModel,
    corpus: list[Question],
    k: int,
    seed: int,
    backend=None,
    params: DecodingParams = GREEDY,
    annotated: bool = False,
) -> list[Demonstration]:
    """k random questions from the test question's own cluster (test
    excluded) — the similarity-stressed ablation baseline."""
    exclude = _corpus_index(corpus, test)
    indices = in_cluster_sample_indices(model, exclude, k, seed, test.id)
    return [
        make_demonstration(corpus[i], _chain_for(corpus[i], backend, params, annotated))
        for i in indices
    ]


def load_manual_demos(path: str | Path, fmt: AnswerFormat) -> list[Demonstration]:
    """Load hand-written demonstrations from the demonstration file format:
    a JSON list of {"question", "rationale", "answer"} objects."""
    path = Path(path)
    if not path.exists():
        raise DataError(f"demo file not found: {path}")
    with path.open(encoding="utf-8") as fh:
        raw = json.load(fh)
    if not isinstance(raw, list):
        raise MalformedRecord(0, "demo file must be a JSON list")
    demos = []
    for i, item in enumerate(raw):
        if not isinstance(item, dict):
            raise MalformedRecord(i, "demo entry is not an object")
        for key in ("question", "rationale", "answer"):
            if not str(item.get(key, "")).strip():
                raise MalformedRecord(i, f"demo entry missing {key!r}")
        question = Question(
            id=str(i), text=str(item["question"]).strip(), answer_format=fmt
        )
        rationale = str(item["rationale"])
        chain = ReasoningChain(
            rationale=rationale,
            answer_raw=str(item["answer"]),
            answer=normalize_gold_answer(str(item["answer"]), fmt),
            step_count=count_rationale_steps(rationale),
        )
        demos.append(make_demonstration(question, chain))
    return demos


def write_demo_file(demos: list[Demonstration], path: str | Path) -> None:
    """Persist demonstrations in the demonstration file format (round-trips
    through load_manual_demos)."""
    payload = [
        {
            "question": d.question.text,
            "rationale": d.chain.rationale,
            "answer": d.chain.answer,
        }
        for d in demos
    ]
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(
        json.dumps(payload, indent=2, ensure_ascii=False) + "\n", encoding="utf-8"
    )


def strip_rationales(demos: list[Demonstration]) -> list[Demonstration]:
    """Direct-answer variants of the given demonstrations (rationales
    removed), for the no-reasoning few-shot baseline."""
    stripped = []
    for d in demos:
        chain = ReasoningChain(
            rationale="", answer_raw=d.chain.answer_raw, answer=d.chain.answer, step_count=0
        )
        stripped.append(
            Demonstration(
                d.question, chain, render_answer_only_demonstration(d.question, chain)
            )
        )
    return stripped
