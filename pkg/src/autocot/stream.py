"""Bootstrap variant for the streaming setting: questions arrive in small
batches, and demonstrations for each new batch are constructed from the
question-chain memory accumulated over all earlier batches.

Batch 1 has no memory to draw on, so every question is answered zero-shot
(its prompts are byte-identical to plain zero-shot runs). From batch 2 on,
memory questions are embedded and clustered (k' = min(k, |memory|)) and the
stored chains are reused for selection — nothing is regenerated.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

from .cluster import kmeans
from .corpus import Question
from .cot import (
    Demonstration,
    ReasoningChain,
    count_rationale_steps,
    extract_answer,
    generate_chain,
    render_inference_prompt,
    render_zero_shot_cot_prompt,
    strip_trailing_answer_sentence,
)
from .demo import SelectionCriteria, SortMode, select_from_chains
from .embed import embed_corpus
from .errors import BackendUnavailable
from .evaluate import InferenceRecord, accuracy
from .llm import GREEDY, DecodingParams, apply_stop
from .util import sha256_text

logger = logging.getLogger(__name__)

DEFAULT_BATCH_SIZE = 30


@dataclass(frozen=True)
class MemoryEntry:
    question: Question
    chain: ReasoningChain


@dataclass
class BootstrapMemory:
    """Append-only pool of question-chain pairs seen so far."""

    entries: list[MemoryEntry] = field(default_factory=list)
    batch_index: int = 0

    def add(self, question: Question, chain: ReasoningChain) -> None:
        self.entries.append(MemoryEntry(question, chain))

    def __len__(self) -> int:
        return len(self.entries)


@dataclass
class BatchResult:
    batch: int
    records: list[InferenceRecord]
    accuracy: float
    demos: list[Demonstration]


@dataclass
class BootstrapResult:
    batches: list[BatchResult]
    memory: BootstrapMemory


def make_batches(questions: list[Question], batch_size: int) -> list[list[Question]]:
    if batch_size < 1:
        raise ValueError("batch_size must be positive")
    return [
        questions[i : i + batch_size] for i in range(0, len(questions), batch_size)
    ]


def _memory_demos(
    memory: BootstrapMemory,
    k: int,
    criteria: SelectionCriteria,
    embedder,
    seed: int,
    sort_mode: SortMode,
) -> list[Demonstration]:
    questions = [e.question for e in memory.entries]
    chains = {i: e.chain for i, e in enumerate(memory.entries)}
    vectors = embed_corpus(questions, embedder)
    k_eff = min(k, len(questions))
    model = kmeans(vectors, k_eff, seed=seed)
    result = select_from_chains(
        questions, chains, model, criteria, sort_mode=sort_mode, seed=seed
    )
    return result.demos


def run_bootstrap(
    batches: list[list[Question]],
    k: int,
    criteria: SelectionCriteria,
    backend,
    embedder,
    params: DecodingParams = GREEDY,
    seed: int = 42,
    sort_mode: SortMode = SortMode.MIN_DIST,
) -> BootstrapResult:
    """Run the streaming bootstrap over the given batches.

    Demonstrations at batch b are always drawn from the memory built through
    batch b-1, never from the current batch. Chains produced while answering
    a batch are appended to memory afterwards — including chains whose answer
    extraction failed (they stay in memory but are never selectable). A
    question whose backend call fails outright contributes no memory entry.
    """
    if any(not batch for batch in batches):
        raise ValueError("batches must be non-empty")
    memory = BootstrapMemory()
    results: list[BatchResult] = []

    for batch_no, batch in enumerate(batches, start=1):
        demos: list[Demonstration] = []
        if batch_no > 1 and memory.entries:
            demos = _memory_demos(memory, k, criteria, embedder, seed, sort_mode)

        records: list[InferenceRecord] = []
        new_entries: list[MemoryEntry] = []
        for q in batch:
            try:
                if demos:
                    prompt = render_inference_prompt(demos, q)
                    output = apply_stop(
                        backend.complete(prompt, params), params.stop
                    ).strip()
                    predicted = extract_answer(output, q.answer_format)
                    rationale = strip_trailing_answer_sentence(output).strip()
                    chain = ReasoningChain(
                        rationale=rationale,
                        answer_raw=output,
                        answer=predicted,
                        step_count=count_rationale_steps(rationale),
                    )
                else:
                    prompt = render_zero_shot_cot_prompt(q)
                    chain = generate_chain(q, backend, params)
                    predicted = chain.answer
            except BackendUnavailable as exc:
                logger.warning("backend failure on question %s: %s", q.id, exc)
                records.append(
                    InferenceRecord(
                        question_id=q.id,
                        prompt_sha256="",
                        rationale="",
                        predicted="",
                        gold=q.gold_answer,
                        correct=False,
                        error=str(exc),
                    )
                )
                continue
            records.append(
                InferenceRecord(
                    question_id=q.id,
                    prompt_sha256=sha256_text(prompt),
                    rationale=chain.rationale,
                    predicted=predicted,
                    gold=q.gold_answer,
                    correct=bool(predicted) and predicted == q.gold_answer,
                )
            )
            new_entries.append(MemoryEntry(q, chain))

        for entry in new_entries:
            memory.add(entry.question, entry.chain)
        memory.batch_index = batch_no
        results.append(
            BatchResult(
                batch=batch_no,
                records=records,
                accuracy=accuracy(records),
                demos=demos,
            )
        )
    return BootstrapResult(batches=results, memory=memory)
