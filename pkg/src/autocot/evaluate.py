"""Inference over test sets plus every metric and diagnostic: accuracy,
unresolving rate, per-cluster error rates, wrong-demonstration injection,
and demonstration-component shuffling.
"""

from __future__ import annotations

import logging
import math
import random
from collections.abc import Callable, Sequence
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from enum import Enum

from .cluster import ClusterModel
from .corpus import Question
from .cot import (
    Demonstration,
    ReasoningChain,
    count_rationale_steps,
    extract_answer,
    generate_chain,
    make_demonstration,
    render_inference_prompt,
    render_zero_shot_cot_prompt,
    strip_trailing_answer_sentence,
)
from .errors import (
    BackendUnavailable,
    EmptyRecords,
    NoBaselineErrors,
    PoolTooSmall,
    TooFewDemos,
)
from .llm import GREEDY, DecodingParams, apply_stop
from .util import derived_seed, sha256_text

logger = logging.getLogger(__name__)

DemoProvider = Callable[[Question], Sequence[Demonstration]]


@dataclass(frozen=True)
class InferenceRecord:
    question_id: str
    prompt_sha256: str
    rationale: str
    predicted: str
    gold: str | None
    correct: bool
    cluster: int | None = None
    error: str | None = None


def fixed_demos(demos: Sequence[Demonstration]) -> DemoProvider:
    """Provider that serves the same demonstration list to every test question."""
    return lambda _q: demos


def no_demos(_q: Question) -> Sequence[Demonstration]:
    return ()


def _infer_one(
    q: Question,
    demos: Sequence[Demonstration],
    backend,
    params: DecodingParams,
    cot: bool,
) -> tuple[str, str, str]:
    """Returns (prompt, rationale, predicted)."""
    if cot and not demos:
        # no demonstrations: two-stage zero-shot reasoning
        chain = generate_chain(q, backend, params)
        return render_zero_shot_cot_prompt(q), chain.rationale, chain.answer
    prompt = render_inference_prompt(list(demos), q, cot=cot)
    output = apply_stop(backend.complete(prompt, params), params.stop).strip()
    predicted = extract_answer(output, q.answer_format)
    rationale = strip_trailing_answer_sentence(output).strip() if cot else ""
    return prompt, rationale, predicted


def run_inference(
    tests: list[Question],
    demo_provider: DemoProvider,
    backend,
    params: DecodingParams = GREEDY,
    cot: bool = True,
    model: ClusterModel | None = None,
    max_workers: int = 1,
) -> list[InferenceRecord]:
    """One record per test question, in input order.

    With demonstrations the prompt is answered in a single completion; with
    an empty demo list it reduces to the two-stage zero-shot run. A transient
    backend failure marks that question incorrect (with an error note) rather
    than aborting the run; a scripted-backend miss still propagates, since it
    means the pipeline drifted from its script.
    """

    def build_record(index: int) -> InferenceRecord:
        q = tests[index]
        demos = demo_provider(q)
        cluster = int(model.assignment[int(q.id)]) if model is not None else None
        try:
            prompt, rationale, predicted = _infer_one(q, demos, backend, params, cot)
        except BackendUnavailable as exc:
            logger.warning("backend failure on question %s: %s", q.id, exc)
            return InferenceRecord(
                question_id=q.id,
                prompt_sha256="",
                rationale="",
                predicted="",
                gold=q.gold_answer,
                correct=False,
                cluster=cluster,
                error=str(exc),
            )
        correct = bool(predicted) and predicted == q.gold_answer
        return InferenceRecord(
            question_id=q.id,
            prompt_sha256=sha256_text(prompt),
            rationale=rationale,
            predicted=predicted,
            gold=q.gold_answer,
            correct=correct,
            cluster=cluster,
        )

    indices = range(len(tests))
    if max_workers > 1:
        with ThreadPoolExecutor(max_workers=max_workers) as pool:
            return list(pool.map(build_record, indices))
    return [build_record(i) for i in indices]


def accuracy(records: Sequence[InferenceRecord]) -> float:
    if not records:
        raise EmptyRecords("no inference records")
    return sum(r.correct for r in records) / len(records)


def unresolving_rate(
    baseline_records: Sequence[InferenceRecord],
    method_records: Sequence[InferenceRecord],
) -> float:
    """Among the questions the baseline got wrong, the fraction the method
    also gets wrong."""
    baseline = {r.question_id: r.correct for r in baseline_records}
    method = {r.question_id: r.correct for r in method_records}
    if set(baseline) != set(method):
        raise ValueError("baseline and method must cover the same question ids")
    wrong_ids = [qid for qid, ok in baseline.items() if not ok]
    if not wrong_ids:
        raise NoBaselineErrors("baseline solved every question")
    unresolved = sum(1 for qid in wrong_ids if not method[qid])
    return unresolved / len(wrong_ids)


@dataclass(frozen=True)
class ClusterErrorReport:
    rates: dict[int, float]
    sizes: dict[int, int]
    frequent_error_cluster: int


def cluster_error_rates(
    records: Sequence[InferenceRecord], model: ClusterModel
) -> ClusterErrorReport:
    """Per-cluster wrong/total, plus the argmax ("frequent-error") cluster.
    Record ids are corpus indices into the clustered vectors."""
    wrong = {c: 0 for c in range(model.k)}
    total = {c: 0 for c in range(model.k)}
    for r in records:
        cluster = int(model.assignment[int(r.question_id)])
        total[cluster] += 1
        if not r.correct:
            wrong[cluster] += 1
    rates = {
        c: (wrong[c] / total[c]) if total[c] else 0.0 for c in range(model.k)
    }
    frequent = max(rates, key=lambda c: (rates[c], -c))
    return ClusterErrorReport(rates=rates, sizes=total, frequent_error_cluster=frequent)


def split_pools(
    questions: list[Question], chains: dict[int, ReasoningChain]
) -> tuple[list[Demonstration], list[Demonstration]]:
    """Split generated chains into (correct, wrong) demonstration pools by
    comparing each canonical answer with gold. Chains without an extractable
    answer belong to neither pool (they cannot be rendered)."""
    correct_pool: list[Demonstration] = []
    wrong_pool: list[Demonstration] = []
    for idx, chain in sorted(chains.items()):
        if not chain.answer:
            continue
        demo = make_demonstration(questions[idx], chain)
        if chain.answer == questions[idx].gold_answer:
            correct_pool.append(demo)
        else:
            wrong_pool.append(demo)
    return correct_pool, wrong_pool


def inject_wrong_demos(
    correct_pool: Sequence[Demonstration],
    wrong_pool: Sequence[Demonstration],
    fraction: float,
    k: int,
    seed: int,
) -> list[Demonstration]:
    """Demo list of size k with ceil(fraction*k) wrong demonstrations, the
    rest correct, positions shuffled by seed. `fraction` must be exactly
    representable with k slots."""
    if not 0.0 <= fraction <= 1.0:
        raise ValueError("fraction must be in [0, 1]")
    exact = fraction * k
    if abs(exact - round(exact)) > 1e-9:
        raise ValueError(f"fraction {fraction} is not representable with k={k}")
    n_wrong = math.ceil(exact - 1e-9)
    n_correct = k - n_wrong
    if len(wrong_pool) < n_wrong:
        raise PoolTooSmall(f"wrong pool has {len(wrong_pool)}, need {n_wrong}")
    if len(correct_pool) < n_correct:
        raise PoolTooSmall(f"correct pool has {len(correct_pool)}, need {n_correct}")
    overlap = {d.question.id for d in correct_pool} & {
        d.question.id for d in wrong_pool
    }
    if overlap:
        raise ValueError(f"pools are not disjoint: {sorted(overlap)[:5]}")
    rng = random.Random(derived_seed("inject-wrong", seed, fraction, k))
    picked = rng.sample(list(wrong_pool), n_wrong) + rng.sample(
        list(correct_pool), n_correct
    )
    rng.shuffle(picked)
    return picked


class PerturbMode(str, Enum):
    SHUFFLE_QUESTIONS = "shuffle-questions"
    SHUFFLE_RATIONALES = "shuffle-rationales"
    SHUFFLE_ANSWERS = "shuffle-answers"


def component_permutation(n: int, seed: int) -> list[int]:
    """Seeded permutation of range(n) that prefers derangements (no element
    left in place); falls back to a rotation when shuffling keeps failing."""
    rng = random.Random(derived_seed("perturb", seed, n))
    perm = list(range(n))
    for _ in range(100):
        rng.shuffle(perm)
        if all(perm[i] != i for i in range(n)):
            return perm
    return [(i + 1) % n for i in range(n)]


def perturb_demos(
    demos: Sequence[Demonstration],
    mode: PerturbMode,
    seed: int,
    permutation: Sequence[int] | None = None,
) -> list[Demonstration]:
    """Permute exactly one component (questions, rationales, or answers)
    across the demonstrations and re-render the blocks. An explicit
    `permutation` overrides the seeded one."""
    n = len(demos)
    if n < 2:
        raise TooFewDemos("need at least 2 demonstrations to shuffle")
    perm = list(permutation) if permutation is not None else component_permutation(n, seed)
    if sorted(perm) != list(range(n)):
        raise ValueError("permutation must rearrange all demo positions")

    out: list[Demonstration] = []
    for i in range(n):
        own, src = demos[i], demos[perm[i]]
        if mode is PerturbMode.SHUFFLE_QUESTIONS:
            question, chain = src.question, own.chain
        elif mode is PerturbMode.SHUFFLE_RATIONALES:
            question = own.question
            chain = ReasoningChain(
                rationale=src.chain.rationale,
                answer_raw=own.chain.answer_raw,
                answer=own.chain.answer,
                step_count=count_rationale_steps(src.chain.rationale),
            )
        else:
            question = own.question
            chain = ReasoningChain(
                rationale=own.chain.rationale,
                answer_raw=src.chain.answer_raw,
                answer=src.chain.answer,
                step_count=own.chain.step_count,
            )
        out.append(make_demonstration(question, chain))
    return out
