"""Prompt rendering and reasoning-chain parsing.

The prompt grammar is fixed and byte-exact:

    zero-shot CoT:   Q: {question}\\nA: Let's think step by step.
    demonstration:   Q: {question}\\nA: Let's think step by step. {rationale} The answer is {answer}.
    few-shot input:  demonstrations joined by blank lines, then the test block
    answer-only:     Q: {question}\\nA: The answer is

Rationale newlines are flattened to single spaces inside a rendered
demonstration; reasoning steps are counted on the raw rationale before
flattening (one step boundary per newline character).
"""

from __future__ import annotations

import re
from dataclasses import dataclass

from .corpus import AnswerFormat, Question, normalize_gold_answer
from .errors import MissingAnswer, UnnormalizableAnswer
from .llm import DecodingParams, GREEDY, apply_stop

STEP_BY_STEP = "Let's think step by step."
ANSWER_MARKER = "The answer is"

# Second-stage extraction suffixes, per answer format.
EXTRACTION_SUFFIXES: dict[AnswerFormat, str] = {
    AnswerFormat.NUMBER: "\nTherefore, the answer (arabic numerals) is",
    AnswerFormat.MULTIPLE_CHOICE: "\nTherefore, among A through E, the answer is",
    AnswerFormat.YES_NO: "\nTherefore, the answer (Yes or No) is",
    AnswerFormat.STRING_SEQ: "\nTherefore, the answer is",
}

_SENTENCE_END = (".", "!", "?", '."', ".'", '!"', '?"')


@dataclass(frozen=True)
class ReasoningChain:
    """Generated rationale plus its extracted canonical answer. An empty
    `answer` marks extraction failure; selection criteria reject it later."""

    rationale: str
    answer_raw: str
    answer: str
    step_count: int


@dataclass(frozen=True)
class Demonstration:
    question: Question
    chain: ReasoningChain
    rendered: str


def render_zero_shot_cot_prompt(q: Question) -> str:
    return f"Q: {q.text}\nA: {STEP_BY_STEP}"


def render_zero_shot_prompt(q: Question) -> str:
    """Direct-answer baseline prompt (no reasoning elicitation)."""
    return f"Q: {q.text}\nA: {ANSWER_MARKER}"


def extraction_prompt(
    q: Question, rationale: str, suffix: str | None = None
) -> str:
    """Second-stage prompt: question, generated rationale, format suffix."""
    if suffix is None:
        suffix = EXTRACTION_SUFFIXES[q.answer_format]
    return f"{render_zero_shot_cot_prompt(q)} {rationale}{suffix}"


def count_rationale_steps(rationale: str) -> int:
    """Number of newline characters — the step-separator convention of
    generated rationales."""
    return rationale.count("\n")


def looks_truncated(rationale: str) -> bool:
    """Heuristic for generation that hit the token limit mid-sentence."""
    tail = rationale.rstrip()
    return bool(tail) and not tail.endswith(_SENTENCE_END)


def generate_chain(
    q: Question,
    backend,
    params: DecodingParams = GREEDY,
    suffix: str | None = None,
) -> ReasoningChain:
    """Two-stage zero-shot chain generation: elicit a rationale, then append
    the extraction suffix and complete again for the answer text.

    A truncated rationale short-circuits to an extraction failure (empty
    canonical answer) without spending the second call.
    """
    prompt = render_zero_shot_cot_prompt(q)
    rationale = apply_stop(backend.complete(prompt, params), params.stop).strip()
    steps = count_rationale_steps(rationale)
    if looks_truncated(rationale):
        return ReasoningChain(rationale, "", "", steps)
    stage2 = extraction_prompt(q, rationale, suffix)
    answer_raw = apply_stop(backend.complete(stage2, params), params.stop).strip()
    answer = extract_answer(answer_raw, q.answer_format)
    if not answer:
        answer = extract_answer(rationale, q.answer_format)
    return ReasoningChain(rationale, answer_raw, answer, steps)


_NUMBER_RE = re.compile(r"[-+]?\d[\d,]*(?:\.\d+)?")
_CHOICE_RE = re.compile(r"\b([A-E])\b")
_YES_NO_RE = re.compile(r"\b(yes|no)\b", re.IGNORECASE)
_QUOTED_RE = re.compile(r'"([^"]+)"')


def extract_answer(text: str, fmt: AnswerFormat) -> str:
    """Pull the canonical answer out of generated text; "" when nothing
    matches. The result is always in normalize_gold_answer's canonical form.
    """
    if not text:
        return ""

    if fmt is AnswerFormat.NUMBER:
        marker = text.rfind(ANSWER_MARKER)
        scope = text[marker:] if marker != -1 else text
        matches = _NUMBER_RE.findall(scope)
        if not matches:
            return ""
        try:
            return normalize_gold_answer(matches[-1], fmt)
        except UnnormalizableAnswer:
            return ""

    if fmt is AnswerFormat.MULTIPLE_CHOICE:
        matches = _CHOICE_RE.findall(text)
        return matches[-1] if matches else ""

    if fmt is AnswerFormat.YES_NO:
        matches = _YES_NO_RE.findall(text)
        return matches[-1].lower() if matches else ""

    # STRING_SEQ: last quoted string, else the final word
    quoted = _QUOTED_RE.findall(text)
    if quoted:
        return quoted[-1].strip().lower()
    words = text.split()
    if not words:
        return ""
    return words[-1].strip("\"'.,!?;:").lower()


_DECIMAL_DOT_RE = re.compile(r"(?<=\d)\.(?=\d)")


def strip_trailing_answer_sentence(rationale: str) -> str:
    """Drop a model-emitted final answer sentence so re-rendering never
    duplicates it; earlier in-rationale answer statements are preserved.

    Only a genuine single trailing sentence is removed: the span from the
    last "The answer is" must contain no sentence terminator before its end
    (decimal points do not count).
    """
    idx = rationale.rfind(ANSWER_MARKER)
    if idx == -1:
        return rationale
    span = _DECIMAL_DOT_RE.sub("", rationale[idx:])
    core = span.rstrip(" \t\n\"'")
    if core.endswith((".", "!", "?")):
        core = core[:-1]
    if re.search(r"[.!?]", core):
        return rationale
    return rationale[:idx].rstrip()


def render_demonstration(q: Question, chain: ReasoningChain) -> str:
    """One prompt block: question, flattened rationale, canonical answer.

    The answer sentence is always regenerated from the canonical extracted
    answer, guaranteeing rationale-answer consistency in the rendered block.
    """
    if not chain.answer:
        raise MissingAnswer(f"chain for question {q.id} has no canonical answer")
    rationale = strip_trailing_answer_sentence(chain.rationale)
    flat = " ".join(rationale.split())
    head = f"Q: {q.text}\nA: {STEP_BY_STEP}"
    parts = [head, flat, f"{ANSWER_MARKER} {chain.answer}."]
    return " ".join(p for p in parts if p)


def render_answer_only_demonstration(q: Question, chain: ReasoningChain) -> str:
    """Demonstration block with the rationale removed (direct-answer style)."""
    if not chain.answer:
        raise MissingAnswer(f"chain for question {q.id} has no canonical answer")
    return f"Q: {q.text}\nA: {ANSWER_MARKER} {chain.answer}."


def make_demonstration(q: Question, chain: ReasoningChain) -> Demonstration:
    return Demonstration(q, chain, render_demonstration(q, chain))


def render_inference_prompt(
    demos: list[Demonstration], q_test: Question, cot: bool = True
) -> str:
    """Concatenate demonstration blocks (blank-line separated, in order) and
    the test block. With cot=False both demos and the test block use the
    direct-answer grammar. Zero demos reduces to the bare test prompt."""
    if cot:
        blocks = [d.rendered for d in demos]
        blocks.append(render_zero_shot_cot_prompt(q_test))
    else:
        blocks = [render_answer_only_demonstration(d.question, d.chain) for d in demos]
        blocks.append(render_zero_shot_prompt(q_test))
    return "\n\n".join(blocks)
