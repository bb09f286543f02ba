import pytest

from autocot.cluster import kmeans
from autocot.cot import render_inference_prompt, render_zero_shot_cot_prompt
from autocot.demo import SelectionCriteria, meets_criteria
from autocot.embed import HashBowEmbedder, embed_corpus
from autocot.evaluate import accuracy, no_demos, run_inference
from autocot.llm import GREEDY, ScriptedBackend
from autocot.stream import make_batches, run_bootstrap
from autocot.util import sha256_text

from conftest import chain_script, make_question


def build_stream_fixture(n_batches=3, batch_size=4, k=2, wrong=()):
    """Batched corpus with scripted zero-shot chains for every question and
    scripted few-shot completions for batches after the first.

    Few-shot prompts depend on the demos selected from memory, so the script
    is built by simulating the bootstrap's own deterministic selection.
    """
    criteria = SelectionCriteria(require_answer_in_rationale=True)
    embedder = HashBowEmbedder(dim=64, seed=0)
    total = n_batches * batch_size
    questions = []
    for i in range(total):
        gold = str(3 * i + 1)
        topic = ["apples", "marbles", "pages", "coins"][i % 4]
        text = f"Jar {i} holds {3 * i + 1} {topic} after refill number {i}, how many {topic}?"
        questions.append(make_question(i, text, gold=gold))

    entries = []
    answers = {}
    for i, q in enumerate(questions):
        value = f"{3 * i + 2}" if i in wrong else q.gold_answer
        answers[i] = value
        entries += chain_script(
            q, f" The jar count works out to {value} items. The answer is {value}.", value
        )

    # simulate selection to script the few-shot prompts of batches 2..n
    batches = [questions[i * batch_size : (i + 1) * batch_size] for i in range(n_batches)]
    memory = list(range(batch_size))  # after batch 1
    for b in range(1, n_batches):
        mem_questions = [questions[i] for i in memory]
        vectors = embed_corpus(mem_questions, embedder)
        model = kmeans(vectors, min(k, len(mem_questions)), seed=42)
        demos = []
        for cluster in range(model.k):
            members = sorted(
                model.members(cluster).tolist(),
                key=lambda m: (model.distance[m], m),
            )
            for m in members:
                idx = memory[m]
                rationale = f"The jar count works out to {answers[idx]} items. The answer is {answers[idx]}."
                from autocot.cot import ReasoningChain, make_demonstration

                chain = ReasoningChain(rationale, answers[idx], answers[idx], 0)
                if meets_criteria(questions[idx], chain, criteria):
                    demos.append(make_demonstration(questions[idx], chain))
                    break
        for q in batches[b]:
            idx = int(q.id)
            prompt = render_inference_prompt(demos, q)
            entries.append(
                {
                    "prompt": prompt,
                    "completion": (
                        f" The jar count works out to {answers[idx]} items. "
                        f"The answer is {answers[idx]}."
                    ),
                }
            )
        memory = memory + [int(q.id) for q in batches[b]]

    backend = ScriptedBackend.from_entries(entries)
    return questions, batches, backend, embedder, criteria


class TestMakeBatches:
    def test_even_split(self):
        questions = [make_question(i, f"q{i}?") for i in range(9)]
        batches = make_batches(questions, 3)
        assert [len(b) for b in batches] == [3, 3, 3]

    def test_ragged_tail(self):
        questions = [make_question(i, f"q{i}?") for i in range(7)]
        batches = make_batches(questions, 3)
        assert [len(b) for b in batches] == [3, 3, 1]

    def test_bad_size(self):
        with pytest.raises(ValueError):
            make_batches([], 0)


class TestRunBootstrap:
    def test_batch_one_is_zero_shot(self):
        questions, batches, backend, embedder, criteria = build_stream_fixture()
        result = run_bootstrap(batches, 2, criteria, backend, embedder, seed=42)
        batch1 = result.batches[0]
        # prompts byte-identical to the zero-shot prompts
        for q, rec in zip(batches[0], batch1.records):
            assert rec.prompt_sha256 == sha256_text(render_zero_shot_cot_prompt(q))
        assert batch1.demos == []

    def test_batch_one_accuracy_equals_zero_shot_run(self):
        questions, batches, backend, embedder, criteria = build_stream_fixture(
            wrong=(1, 2)
        )
        result = run_bootstrap(batches, 2, criteria, backend, embedder, seed=42)
        zero_shot = run_inference(batches[0], no_demos, backend, GREEDY)
        assert result.batches[0].accuracy == accuracy(zero_shot)

    def test_memory_cardinality(self):
        questions, batches, backend, embedder, criteria = build_stream_fixture(
            n_batches=3, batch_size=4
        )
        result = run_bootstrap(batches, 2, criteria, backend, embedder, seed=42)
        assert len(result.memory) == 12  # b * m on a failure-free fixture
        assert result.memory.batch_index == 3

    def test_memory_monotone_and_ordered(self):
        questions, batches, backend, embedder, criteria = build_stream_fixture()
        result = run_bootstrap(batches, 2, criteria, backend, embedder, seed=42)
        ids = [e.question.id for e in result.memory.entries]
        assert ids == [str(i) for i in range(12)]

    def test_demos_drawn_from_earlier_batches_only(self):
        questions, batches, backend, embedder, criteria = build_stream_fixture()
        result = run_bootstrap(batches, 2, criteria, backend, embedder, seed=42)
        for b, batch_result in enumerate(result.batches[1:], start=2):
            seen = {q.id for earlier in batches[: b - 1] for q in earlier}
            for demo in batch_result.demos:
                assert demo.question.id in seen

    def test_batch_three_matches_manual_trace(self):
        questions, batches, backend, embedder, criteria = build_stream_fixture()
        result = run_bootstrap(batches, 2, criteria, backend, embedder, seed=42)
        # independent trace: cluster the 8 remembered questions, take the
        # nearest-center candidate per cluster (all chains pass criteria)
        mem_questions = questions[:8]
        vectors = embed_corpus(mem_questions, embedder)
        model = kmeans(vectors, 2, seed=42)
        expected = []
        for cluster in range(2):
            members = sorted(
                model.members(cluster).tolist(),
                key=lambda m: (model.distance[m], m),
            )
            expected.append(mem_questions[members[0]].id)
        got = [d.question.id for d in result.batches[2].demos]
        assert got == expected

    def test_failed_extraction_retained_but_never_selected(self):
        questions, batches, backend, embedder, criteria = build_stream_fixture()
        # poison one memory chain: replace its scripted stage-2 with garbage
        # by rebuilding the fixture where question 0 yields no parseable answer
        q0 = batches[0][0]
        entries = [
            {"prompt": render_zero_shot_cot_prompt(q0), "completion": " Unclear."},
            {
                "prompt": (
                    f"{render_zero_shot_cot_prompt(q0)} Unclear."
                    "\nTherefore, the answer (arabic numerals) is"
                ),
                "completion": " unknowable.",
            },
        ]
        small_backend = ScriptedBackend.from_entries(entries)
        result = run_bootstrap(
            [[q0]], 1, criteria, small_backend, embedder, seed=42
        )
        assert len(result.memory) == 1
        assert result.memory.entries[0].chain.answer == ""
