import numpy as np
import pytest

from autocot.cluster import ClusterModel
from autocot.cot import (
    ReasoningChain,
    make_demonstration,
    render_inference_prompt,
)
from autocot.errors import (
    EmptyRecords,
    NoBaselineErrors,
    PoolTooSmall,
    ScriptMiss,
    TooFewDemos,
)
from autocot.evaluate import (
    InferenceRecord,
    PerturbMode,
    accuracy,
    cluster_error_rates,
    component_permutation,
    fixed_demos,
    inject_wrong_demos,
    no_demos,
    perturb_demos,
    run_inference,
    split_pools,
    unresolving_rate,
)
from autocot.llm import GREEDY, ScriptedBackend

from conftest import chain_script, make_question


def record(qid, correct, cluster=None):
    return InferenceRecord(
        question_id=str(qid),
        prompt_sha256="",
        rationale="",
        predicted="1" if correct else "0",
        gold="1",
        correct=correct,
        cluster=cluster,
    )


def demo_for(i, answer=None):
    answer = answer if answer is not None else str(2 * i)
    q = make_question(i, f"What is {i} plus {i}?", gold=str(2 * i))
    chain = ReasoningChain(f"Adding gives {answer}.", answer, answer, 0)
    return make_demonstration(q, chain)


class TestRunInference:
    def _fixture(self, n=20, correct=13):
        """Scripted few-shot inference where exactly `correct` answers match."""
        demos = [demo_for(100 + i) for i in range(2)]
        questions = [
            make_question(i, f"Compute {i} doubled?", gold=str(2 * i)) for i in range(n)
        ]
        entries = []
        for i, q in enumerate(questions):
            predicted = 2 * i if i < correct else 2 * i + 1
            prompt = render_inference_prompt(demos, q)
            entries.append(
                {
                    "prompt": prompt,
                    "completion": f" Doubling gives {predicted}. The answer is {predicted}.",
                }
            )
        return questions, demos, ScriptedBackend.from_entries(entries)

    def test_all_correct(self):
        questions, demos, backend = self._fixture(5, 5)
        records = run_inference(questions, fixed_demos(demos), backend, GREEDY)
        assert accuracy(records) == 1.0

    def test_thirteen_of_twenty(self):
        questions, demos, backend = self._fixture(20, 13)
        records = run_inference(questions, fixed_demos(demos), backend, GREEDY)
        assert accuracy(records) == pytest.approx(0.65)

    def test_order_preserved(self):
        questions, demos, backend = self._fixture(6, 6)
        records = run_inference(questions, fixed_demos(demos), backend, GREEDY)
        assert [r.question_id for r in records] == [q.id for q in questions]

    def test_empty_demos_is_zero_shot(self):
        q = make_question(0, "What is two plus two?", gold="4")
        entries = chain_script(q, " Two plus two is 4. The answer is 4.", "4")
        backend = ScriptedBackend.from_entries(entries)
        records = run_inference([q], no_demos, backend, GREEDY)
        assert records[0].correct
        assert backend.calls == 2  # two-stage generation

    def test_script_miss_propagates(self):
        q = make_question(0, "Unscripted question?", gold="1")
        with pytest.raises(ScriptMiss):
            run_inference([q], no_demos, ScriptedBackend.from_entries([]), GREEDY)

    def test_parallel_matches_sequential(self):
        questions, demos, backend = self._fixture(12, 9)
        sequential = run_inference(questions, fixed_demos(demos), backend, GREEDY)
        parallel = run_inference(
            questions, fixed_demos(demos), backend, GREEDY, max_workers=4
        )
        assert sequential == parallel


class TestAccuracy:
    def test_zero(self):
        assert accuracy([record(i, False) for i in range(10)]) == 0.0

    def test_all(self):
        assert accuracy([record(i, True) for i in range(10)]) == 1.0

    def test_multiarith_zero_shot_rate(self):
        # 128 wrong out of 600: accuracy is exactly 472/600, error count 128
        records = [record(i, i >= 128) for i in range(600)]
        assert accuracy(records) == 472 / 600
        assert sum(1 for r in records if not r.correct) == 128
        assert accuracy(records) == pytest.approx(0.7867, abs=5e-5)

    def test_empty(self):
        with pytest.raises(EmptyRecords):
            accuracy([])

    def test_permutation_invariant(self):
        records = [record(i, i % 3 == 0) for i in range(30)]
        shuffled = list(reversed(records))
        assert accuracy(records) == accuracy(shuffled)


class TestUnresolvingRate:
    def _pair(self, total_wrong, still_wrong):
        baseline = [record(i, i >= total_wrong) for i in range(600)]
        method = [record(i, i >= still_wrong) for i in range(600)]
        return baseline, method

    def test_all_resolved(self):
        baseline, method = self._pair(128, 0)
        assert unresolving_rate(baseline, method) == 0.0

    def test_retrieval_like_rate(self):
        baseline, method = self._pair(128, 60)
        assert unresolving_rate(baseline, method) == 60 / 128
        assert unresolving_rate(baseline, method) * 100 == pytest.approx(46.9, abs=0.05)

    def test_random_like_rate(self):
        baseline, method = self._pair(128, 33)
        assert unresolving_rate(baseline, method) == 33 / 128
        assert unresolving_rate(baseline, method) * 100 == pytest.approx(25.8, abs=0.05)

    def test_baseline_against_itself(self):
        baseline, _ = self._pair(128, 0)
        assert unresolving_rate(baseline, baseline) == 1.0

    def test_no_baseline_errors(self):
        baseline = [record(i, True) for i in range(5)]
        with pytest.raises(NoBaselineErrors):
            unresolving_rate(baseline, baseline)

    def test_mismatched_ids(self):
        baseline = [record(i, False) for i in range(5)]
        method = [record(i + 1, False) for i in range(5)]
        with pytest.raises(ValueError):
            unresolving_rate(baseline, method)


def toy_model(assignment):
    assignment = np.array(assignment)
    k = int(assignment.max()) + 1
    return ClusterModel(
        k=k,
        centroids=np.zeros((k, 2)),
        assignment=assignment,
        distance=np.zeros(len(assignment)),
        seed=0,
        n_iter=1,
        objective_history=(0.0,),
    )


class TestClusterErrorRates:
    def test_all_correct(self):
        model = toy_model([0, 0, 1, 1])
        records = [record(i, True) for i in range(4)]
        report = cluster_error_rates(records, model)
        assert report.rates == {0: 0.0, 1: 0.0}

    def test_two_cluster_toy(self):
        model = toy_model([0, 0, 1, 1, 1])
        records = [record(0, False), record(1, True)] + [
            record(i, True) for i in (2, 3, 4)
        ]
        report = cluster_error_rates(records, model)
        assert report.rates == {0: 0.5, 1: 0.0}
        assert report.frequent_error_cluster == 0

    def test_weighted_sum_equals_total_wrong(self):
        rng = np.random.default_rng(7)
        assignment = rng.integers(0, 4, size=50)
        model = toy_model(assignment)
        records = [record(i, bool(rng.integers(0, 2))) for i in range(50)]
        report = cluster_error_rates(records, model)
        weighted = sum(
            report.rates[c] * report.sizes[c] for c in report.rates
        )
        assert weighted == pytest.approx(sum(1 for r in records if not r.correct))


class TestInjectWrongDemos:
    def _pools(self):
        correct = [demo_for(i) for i in range(10)]
        wrong = [demo_for(100 + i, answer=str(i + 1)) for i in range(10)]
        return correct, wrong

    def _count_wrong(self, demos):
        return sum(1 for d in demos if d.chain.answer != d.question.gold_answer)

    def test_fraction_zero(self):
        correct, wrong = self._pools()
        picked = inject_wrong_demos(correct, wrong, 0.0, 8, seed=1)
        assert self._count_wrong(picked) == 0
        assert len(picked) == 8

    def test_half_wrong(self):
        correct, wrong = self._pools()
        picked = inject_wrong_demos(correct, wrong, 0.5, 8, seed=1)
        assert self._count_wrong(picked) == 4

    @pytest.mark.parametrize("fraction,expected", [(0.125, 1), (0.25, 2), (0.375, 3), (0.5, 4)])
    def test_exact_composition_over_seeds(self, fraction, expected):
        correct, wrong = self._pools()
        for seed in range(25):
            picked = inject_wrong_demos(correct, wrong, fraction, 8, seed=seed)
            assert len(picked) == 8
            assert self._count_wrong(picked) == expected

    def test_positions_shuffled(self):
        correct, wrong = self._pools()
        layouts = {
            tuple(d.chain.answer != d.question.gold_answer for d in
                  inject_wrong_demos(correct, wrong, 0.5, 8, seed=seed))
            for seed in range(20)
        }
        assert len(layouts) > 1

    def test_pool_too_small(self):
        correct, wrong = self._pools()
        with pytest.raises(PoolTooSmall):
            inject_wrong_demos(correct, wrong[:2], 0.5, 8, seed=0)

    def test_unrepresentable_fraction(self):
        correct, wrong = self._pools()
        with pytest.raises(ValueError):
            inject_wrong_demos(correct, wrong, 1 / 3, 8, seed=0)


class TestSplitPools:
    def test_split_by_gold(self):
        questions = [make_question(i, f"q{i}?", gold=str(i)) for i in range(4)]
        chains = {
            0: ReasoningChain("says 0.", "0", "0", 0),
            1: ReasoningChain("says 5.", "5", "5", 0),
            2: ReasoningChain("no answer", "", "", 0),
            3: ReasoningChain("says 3.", "3", "3", 0),
        }
        correct, wrong = split_pools(questions, chains)
        assert [d.question.id for d in correct] == ["0", "3"]
        assert [d.question.id for d in wrong] == ["1"]


class TestPerturbDemos:
    def _demos(self, n=4):
        return [demo_for(i) for i in range(n)]

    def test_two_demos_swap_answers(self):
        demos = self._demos(2)
        shuffled = perturb_demos(demos, PerturbMode.SHUFFLE_ANSWERS, seed=0)
        assert shuffled[0].chain.answer == demos[1].chain.answer
        assert shuffled[1].chain.answer == demos[0].chain.answer
        assert shuffled[0].question == demos[0].question
        assert shuffled[0].chain.rationale == demos[0].chain.rationale

    def test_inverse_permutation_recovers(self):
        demos = self._demos(5)
        perm = component_permutation(5, seed=3)
        inverse = [0] * 5
        for i, p in enumerate(perm):
            inverse[p] = i
        once = perturb_demos(demos, PerturbMode.SHUFFLE_RATIONALES, seed=3)
        back = perturb_demos(once, PerturbMode.SHUFFLE_RATIONALES, seed=0, permutation=inverse)
        assert [d.rendered for d in back] == [d.rendered for d in demos]

    def test_rationale_multiset_preserved(self):
        demos = self._demos(6)
        shuffled = perturb_demos(demos, PerturbMode.SHUFFLE_RATIONALES, seed=5)
        assert sorted(d.chain.rationale for d in shuffled) == sorted(
            d.chain.rationale for d in demos
        )

    def test_derangement_preferred(self):
        for seed in range(10):
            perm = component_permutation(6, seed)
            assert all(perm[i] != i for i in range(6))

    def test_questions_mode_rerenders(self):
        demos = self._demos(3)
        shuffled = perturb_demos(demos, PerturbMode.SHUFFLE_QUESTIONS, seed=1)
        for d in shuffled:
            assert d.rendered.startswith(f"Q: {d.question.text}")

    def test_too_few(self):
        with pytest.raises(TooFewDemos):
            perturb_demos(self._demos(1), PerturbMode.SHUFFLE_ANSWERS, seed=0)
