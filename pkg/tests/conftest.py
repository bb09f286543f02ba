"""Shared offline test fixtures: scripted corpora and the 6-question
hand-traceable construction fixture."""

from __future__ import annotations

import numpy as np
import pytest

# filled by the acceptance module; printed after the run, outside capture
ACCEPTANCE_RESULTS: list[str] = []


def pytest_terminal_summary(terminalreporter):
    failed_acceptance = [
        rep.nodeid.split("::", 1)[1]
        for rep in terminalreporter.stats.get("failed", [])
        if "test_acceptance.py" in rep.nodeid
    ]
    if not ACCEPTANCE_RESULTS and not failed_acceptance:
        return
    terminalreporter.section("acceptance criteria")
    for line in ACCEPTANCE_RESULTS:
        terminalreporter.write_line(line)
    for name in failed_acceptance:
        terminalreporter.write_line(f"FAIL: {name}")

from autocot.corpus import AnswerFormat, Question
from autocot.cot import EXTRACTION_SUFFIXES, render_zero_shot_cot_prompt
from autocot.llm import ScriptedBackend


def make_question(
    idx: int,
    text: str,
    fmt: AnswerFormat = AnswerFormat.NUMBER,
    gold: str | None = None,
    annotated: str | None = None,
) -> Question:
    return Question(
        id=str(idx),
        text=text,
        answer_format=fmt,
        gold_answer=gold,
        annotated_chain=annotated,
    )


def chain_script(q: Question, stage1: str, answer: str) -> list[dict]:
    """Script both stages of zero-shot chain generation for one question.
    `stage1` is the raw model output (the rationale, possibly ending with an
    answer sentence); the extraction stage replies with the bare answer."""
    prompt1 = render_zero_shot_cot_prompt(q)
    prompt2 = f"{prompt1} {stage1.strip()}{EXTRACTION_SUFFIXES[q.answer_format]}"
    return [
        {"prompt": prompt1, "completion": stage1},
        {"prompt": prompt2, "completion": f" {answer}."},
    ]


@pytest.fixture
def sixq():
    """Six questions in two planted groups with hand-placed 2-D vectors.

    Group A = indices 0..3, group B = indices 4..5. All coordinates are
    dyadic, so group means and member distances are computed exactly:
    A sorts as [2, 1, 0, 3] and B is an exact tie broken by id, [4, 5]. The
    chains for indices 2 and 1 have six reasoning steps (failing the 5-step
    criterion), so the construction must pick index 0 for group A and index 4
    for group B.
    """
    questions = [
        make_question(0, "A farmer has 12 hens and each lays 3 eggs, how many eggs total?", gold="36"),
        make_question(1, "A cook fries 5 eggs and then 7 more eggs, how many eggs in all?", gold="12"),
        make_question(2, "A baker uses 4 eggs per cake for 6 cakes, how many eggs does she need?", gold="24"),
        make_question(3, "A chef boils 9 eggs and eats 2 eggs, how many eggs are left?", gold="7"),
        make_question(4, "A train travels 60 miles per hour for 3 hours, how far does it go?", gold="180"),
        make_question(5, "A bus covers 45 miles per hour for 2 hours, how far does it go?", gold="90"),
    ]
    vectors = np.array(
        [
            [1.0, 0.0],
            [0.875, 0.125],
            [0.8125, 0.1875],
            [0.5625, 0.4375],
            [0.0, 1.0],
            [0.25, 0.75],
        ]
    )
    six_step_rationale = "Step one.\nStep two.\nStep three.\nStep four.\nStep five.\nStep six.\nDone."
    entries: list[dict] = []
    # q2, q1: six newlines -> fail the step criterion; valid answers anyway
    entries += chain_script(questions[2], f" {six_step_rationale} The answer is 24.", "24")
    entries += chain_script(questions[1], f" {six_step_rationale} The answer is 12.", "12")
    entries += chain_script(
        questions[0],
        " The farmer has 12 hens and each lays 3 eggs, so 12*3=36 eggs. The answer is 36.",
        "36",
    )
    entries += chain_script(questions[3], " 9 eggs minus 2 eggs is 7 eggs. The answer is 7.", "7")
    entries += chain_script(
        questions[4],
        " The train does 60 miles per hour for 3 hours, so 60*3=180 miles. The answer is 180.",
        "180",
    )
    entries += chain_script(questions[5], " 45 miles for 2 hours is 45*2=90 miles. The answer is 90.", "90")
    backend = ScriptedBackend.from_entries(entries)
    return {
        "questions": questions,
        "vectors": vectors,
        "backend": backend,
        "groups": {"A": [0, 1, 2, 3], "B": [4, 5]},
        "expected_selection": {"A": 0, "B": 4},
        "expected_order_A": [2, 1, 0, 3],
        "expected_order_B": [4, 5],
    }
