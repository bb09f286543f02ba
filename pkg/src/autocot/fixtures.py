"""Deterministic offline fixtures: a golden demonstration set with its
byte-exact rendered prompt, and planted-cluster synthetic corpora whose
scripted completions reproduce the misleading-by-similarity mechanics
(similar wrong demonstrations induce the same mistake) without any network.

Every fixture is content-addressed: corpus file, completion script, and
expected values are all derived from the fixture spec and a seed.
"""

from __future__ import annotations

import json
import random
from dataclasses import dataclass, field
from pathlib import Path

from .cluster import kmeans, top_k_similar
from .corpus import AnswerFormat, Question, write_dataset
from .cot import generate_chain, make_demonstration, render_inference_prompt
from .demo import SelectionCriteria, SortMode, random_sample_indices, select_from_chains
from .embed import HashBowEmbedder, embed_corpus
from .errors import SpecInvalid
from .llm import GREEDY, ScriptedBackend
from .util import derived_seed

# ---------------------------------------------------------------------------
# Golden demonstration set (arithmetic word problems) and its test question.
# The `answer_text` strings are the complete "A:" blocks; they are the
# reference the renderer must reproduce byte-for-byte.
# ---------------------------------------------------------------------------

GOLDEN_DEMOS: list[dict] = [
    {
        "question": "For Halloween Katie and her sister combined the candy they received. Katie had 8 pieces of candy while her sister had 23. If they ate 8 pieces the first night, how many pieces do they have left?",
        "answer_text": "Let's think step by step. Katie and her sister have a total of 8 + 23 = 31 pieces of candy. If they eat 8 pieces the first night, they have 31 - 8 = 23 pieces left. The answer is 23.",
        "answer": "23",
    },
    {
        "question": "A pet store had 78 puppies. In one day they sold 30 of them and put the rest into cages with 8 in each cage. How many cages did they use?",
        "answer_text": "Let's think step by step. There are 78 puppies. 30 are sold, so that means there are 48 left. 48 divided by 8 is 6, so that means there are 6 cages with 8 puppies in each. The answer is 6.",
        "answer": "6",
    },
    {
        "question": "A waiter had 14 customers to wait on. If 3 customers left and he got another 39 customers, how many customers would he have?",
        "answer_text": "Let's think step by step. The waiter had 14 customers to wait on. If 3 customers left, that means he would have 11 customers left. If he got another 39 customers, that means he would have 50 customers in total. The answer is 50.",
        "answer": "50",
    },
    {
        "question": "Bianca was organizing her book case making sure each of the shelves had exactly 8 books on it. If she had 5 shelves of mystery books and 4 shelves of picture books, how many books did she have total?",
        "answer_text": "Let's think step by step. There are 5 shelves of mystery books. Each shelf has 8 books. So that's 40 mystery books. There are 4 shelves of picture books. Each shelf has 8 books. So that's 32 picture books. 40 + 32 = 72 books. The answer is 72.",
        "answer": "72",
    },
    {
        "question": "Wendy uploaded 45 pictures to Facebook. She put 27 pics into one album and put the rest into 9 different albums. How many pictures were in each album?",
        "answer_text": "Let's think step by step. First, we know that Wendy uploaded 45 pictures in total. Second, we know that Wendy put 27 pictures into one album. That means that Wendy put the remaining 18 pictures into 9 different albums. That means that each album would have 2 pictures. The answer is 2.",
        "answer": "2",
    },
    {
        "question": "A trivia team had 7 members total, but during a game 2 members didn't show up. If each member that did show up scored 4 points, how many points were scored total?",
        "answer_text": "Let's think step by step. There were 7 members on the team, but 2 members didn't show up. That means that there were 5 members that did show up. Each member that showed up scored 4 points. So if 5 members each scored 4 points, then the total number of points scored would be 5*4=20. The answer is 20.",
        "answer": "20",
    },
    {
        "question": "Mike made 69 dollars mowing lawns over the summer. If he spent 24 dollars buying new mower blades, how many 5 dollar games could he buy with the money he had left?",
        "answer_text": "Let's think step by step. Mike made $69 from mowing lawns. He spent $24 on new mower blades. That means he has $45 left. Each game costs $5, so he could buy 9 games. The answer is 9.",
        "answer": "9",
    },
    {
        "question": "The school cafeteria ordered 8 red apples and 43 green apples for students lunches. But, if only 42 students wanted fruit, how many extra did the cafeteria end up with?",
        "answer_text": "Let's think step by step. The school cafeteria ordered 8 red apples and 43 green apples for students lunches. This means that they ordered a total of 51 apples. But, if only 42 students wanted fruit, This means that the school cafeteria would have 9 apples leftover. The answer is 9.",
        "answer": "9",
    },
]

GOLDEN_TEST_QUESTION = (
    "A chef needs to cook 15 potatoes. He has already cooked 8. If each potato "
    "takes 9 minutes to cook, how long will it take him to cook the rest?"
)
GOLDEN_TEST_COMPLETION = (
    "The chef needs to cook 15 potatoes. He has already cooked 8. That means he "
    "has to cook 15-8=7 more potatoes. Each potato takes 9 minutes to cook. That "
    "means it will take him 9*7=63 minutes to cook the rest of the potatoes. "
    "The answer is 63."
)
GOLDEN_TEST_ANSWER = "63"


def golden_prompt() -> str:
    """The reference few-shot prompt, assembled from the transcribed blocks
    (not from the renderer): 8 demonstration blocks then the test block."""
    blocks = [f"Q: {d['question']}\nA: {d['answer_text']}" for d in GOLDEN_DEMOS]
    blocks.append(f"Q: {GOLDEN_TEST_QUESTION}\nA: Let's think step by step.")
    return "\n\n".join(blocks)


# ---------------------------------------------------------------------------
# Planted-cluster synthetic corpora
# ---------------------------------------------------------------------------


def _cook(rng: random.Random) -> dict:
    b, d, c = rng.randint(2, 9), rng.randint(2, 9), rng.randint(2, 9)
    a = b + d
    text = (
        f"A chef needs to cook {a} potatoes. He has already cooked {b}. If each "
        f"potato takes {c} minutes to cook, how long will it take him to cook the rest?"
    )
    gold = d * c
    wrong = a * c + b * c  # "the total" misreading
    return {
        "text": text,
        "gold": gold,
        "wrong": wrong,
        "gold_rationale": (
            f"The chef has already cooked {b} potatoes, so {d} potatoes are left. "
            f"Each takes {c} minutes, so he needs {d}*{c}={gold} minutes to cook the rest."
        ),
        "wrong_rationale": (
            f"The chef has already cooked {b} potatoes, which took {b}*{c} minutes. "
            f"That means it will take him a total of {a}*{c}+{b}*{c}={wrong} minutes "
            f"to cook all {a} potatoes."
        ),
    }


def _upload(rng: random.Random) -> dict:
    per, albums, one = rng.randint(2, 9), rng.randint(2, 9), rng.randint(10, 40)
    total = one + per * albums
    text = (
        f"Wendy uploaded {total} pictures to her blog. She put {one} pictures into "
        f"one album and split the rest evenly across {albums} other albums. How many "
        f"pictures went into each of those albums?"
    )
    gold = per
    wrong = total // albums if total // albums != gold else gold + 1
    return {
        "text": text,
        "gold": gold,
        "wrong": wrong,
        "gold_rationale": (
            f"Wendy uploaded {total} pictures and put {one} into one album, leaving "
            f"{total - one}. Split across {albums} albums that is "
            f"{total - one}/{albums}={gold} pictures in each album."
        ),
        "wrong_rationale": (
            f"Wendy uploaded {total} pictures into {albums} albums, so each album "
            f"holds {total}/{albums}={wrong} pictures."
        ),
    }


def _candy(rng: random.Random) -> dict:
    x, y, ate = rng.randint(5, 30), rng.randint(5, 30), rng.randint(2, 9)
    text = (
        f"For the party Nora and her brother combined their candy. Nora had {x} "
        f"pieces of candy while her brother had {y}. If they ate {ate} pieces the "
        f"first night, how many pieces do they have left?"
    )
    gold = x + y - ate
    wrong = x + y + ate
    return {
        "text": text,
        "gold": gold,
        "wrong": wrong,
        "gold_rationale": (
            f"Nora and her brother have {x}+{y}={x + y} pieces of candy. After eating "
            f"{ate} pieces they have {x + y}-{ate}={gold} pieces left."
        ),
        "wrong_rationale": (
            f"Nora and her brother gathered {x}+{y}={x + y} pieces of candy and then "
            f"{ate} more, giving {wrong} pieces."
        ),
    }


def _puppies(rng: random.Random) -> dict:
    cages, per, sold = rng.randint(3, 9), rng.randint(2, 9), rng.randint(5, 30)
    total = sold + cages * per
    text = (
        f"A pet store had {total} puppies. In one day they sold {sold} of them and "
        f"put the rest into cages with {per} in each cage. How many cages did they use?"
    )
    gold = cages
    wrong = total // per if total // per != gold else gold + 1
    return {
        "text": text,
        "gold": gold,
        "wrong": wrong,
        "gold_rationale": (
            f"There are {total} puppies and {sold} are sold, so {total - sold} are "
            f"left. {total - sold} divided by {per} is {gold} cages."
        ),
        "wrong_rationale": (
            f"There are {total} puppies going into cages of {per}, so the store uses "
            f"{total}/{per}={wrong} cages."
        ),
    }


def _waiter(rng: random.Random) -> dict:
    start, left, more = rng.randint(10, 40), rng.randint(2, 9), rng.randint(10, 40)
    text = (
        f"A waiter had {start} customers to wait on. If {left} customers left and he "
        f"got another {more} customers, how many customers would he have?"
    )
    gold = start - left + more
    wrong = start + left + more
    return {
        "text": text,
        "gold": gold,
        "wrong": wrong,
        "gold_rationale": (
            f"The waiter had {start} customers. After {left} left he had "
            f"{start - left}, and with {more} new ones he has {gold} customers."
        ),
        "wrong_rationale": (
            f"The waiter had {start} customers, {left} at the door, and {more} "
            f"arriving, which makes {wrong} customers."
        ),
    }


def _shelves(rng: random.Random) -> dict:
    per, s1, s2 = rng.randint(4, 9), rng.randint(2, 9), rng.randint(2, 9)
    text = (
        f"Rosa was organizing her book case making sure each of the shelves had "
        f"exactly {per} books on it. If she had {s1} shelves of mystery books and "
        f"{s2} shelves of picture books, how many books did she have total?"
    )
    gold = per * (s1 + s2)
    wrong = per * s1 + s2
    return {
        "text": text,
        "gold": gold,
        "wrong": wrong,
        "gold_rationale": (
            f"There are {s1} shelves of mystery books and {s2} shelves of picture "
            f"books, {s1 + s2} shelves in all. Each holds {per} books, so she has "
            f"{s1 + s2}*{per}={gold} books."
        ),
        "wrong_rationale": (
            f"There are {s1} shelves of {per} mystery books, {s1}*{per}="
            f"{per * s1} books, plus {s2} picture books, giving {wrong} books."
        ),
    }


def _mowing(rng: random.Random) -> dict:
    price, games, spent = rng.randint(3, 9), rng.randint(2, 9), rng.randint(10, 40)
    earned = spent + price * games
    text = (
        f"Marcus made {earned} dollars mowing lawns over the summer. If he spent "
        f"{spent} dollars on new mower blades, how many {price} dollar games could "
        f"he buy with the money he had left?"
    )
    gold = games
    wrong = earned // price if earned // price != gold else gold + 1
    return {
        "text": text,
        "gold": gold,
        "wrong": wrong,
        "gold_rationale": (
            f"Marcus made {earned} dollars and spent {spent}, leaving "
            f"{earned - spent} dollars. Each game costs {price} dollars, so he can "
            f"buy {gold} games."
        ),
        "wrong_rationale": (
            f"Marcus made {earned} dollars and each game costs {price} dollars, so "
            f"he can buy {earned}/{price}={wrong} games."
        ),
    }


def _apples(rng: random.Random) -> dict:
    red, extra, students = rng.randint(5, 20), rng.randint(2, 9), rng.randint(20, 60)
    green = students + extra - red
    text = (
        f"The school cafeteria ordered {red} red apples and {green} green apples for "
        f"students lunches. But, if only {students} students wanted fruit, how many "
        f"extra did the cafeteria end up with?"
    )
    gold = extra
    wrong = red + green
    return {
        "text": text,
        "gold": gold,
        "wrong": wrong,
        "gold_rationale": (
            f"The cafeteria ordered {red}+{green}={red + green} apples in total. With "
            f"only {students} students wanting fruit, {red + green}-{students}={gold} "
            f"apples are left over."
        ),
        "wrong_rationale": (
            f"The cafeteria ordered {red} red and {green} green apples, so it ended "
            f"up with {wrong} apples."
        ),
    }


TEMPLATES = [_cook, _upload, _candy, _puppies, _waiter, _shelves, _mowing, _apples]


@dataclass(frozen=True)
class PlantedCluster:
    size: int
    wrong: int  # number of questions whose zero-shot chain is scripted wrong
    template: int = 0


@dataclass(frozen=True)
class FixtureSpec:
    name: str
    kind: str  # "planted" or "golden"
    out_dir: str | Path
    clusters: tuple[PlantedCluster, ...] = ()
    seed: int = 0
    embed_dim: int = 256
    embed_seed: int = 0
    k: int = 8
    mislead_threshold: int | None = None  # wrong demos needed to mislead; default ceil(k/2)
    script_methods: tuple[str, ...] = ()  # few-shot methods to script: retrieval/random


@dataclass
class Fixture:
    name: str
    corpus_path: Path
    script_path: Path
    expected: dict = field(default_factory=dict)


def _validate(spec: FixtureSpec) -> None:
    if spec.kind not in ("planted", "golden"):
        raise SpecInvalid(f"unknown fixture kind {spec.kind!r}")
    if spec.kind == "planted":
        if not spec.clusters:
            raise SpecInvalid("planted fixture needs at least one cluster")
        for c in spec.clusters:
            if c.size < 1 or not 0 <= c.wrong <= c.size:
                raise SpecInvalid(f"bad cluster spec {c}")
            if not 0 <= c.template < len(TEMPLATES):
                raise SpecInvalid(f"no template {c.template}")
    if spec.kind == "golden" and spec.clusters:
        raise SpecInvalid("golden fixture takes no cluster specs")


def build_fixture(spec: FixtureSpec) -> Fixture:
    _validate(spec)
    if spec.kind == "golden":
        return _build_golden(spec)
    return _build_planted(spec)


def _stage_entries(question_text: str, stage1: str, answer: str, fmt: AnswerFormat) -> list[dict]:
    from .cot import EXTRACTION_SUFFIXES

    prompt1 = f"Q: {question_text}\nA: Let's think step by step."
    rationale = stage1.strip()
    prompt2 = f"{prompt1} {rationale}{EXTRACTION_SUFFIXES[fmt]}"
    return [
        {"prompt": prompt1, "completion": stage1},
        {"prompt": prompt2, "completion": f" {answer}."},
    ]


def _build_golden(spec: FixtureSpec) -> Fixture:
    out = Path(spec.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    records = [
        {"question": d["question"], "answer": d["answer"]} for d in GOLDEN_DEMOS
    ]
    records.append({"question": GOLDEN_TEST_QUESTION, "answer": GOLDEN_TEST_ANSWER})
    corpus_path = out / "corpus.jsonl"
    write_dataset(records, corpus_path)

    entries: list[dict] = []
    for d in GOLDEN_DEMOS:
        # the model's stage-1 output is everything after the fixed prefix
        stage1 = " " + d["answer_text"].removeprefix("Let's think step by step. ")
        entries.extend(
            _stage_entries(d["question"], stage1, d["answer"], AnswerFormat.NUMBER)
        )
    entries.append(
        {"prompt": golden_prompt(), "completion": " " + GOLDEN_TEST_COMPLETION}
    )
    entries.extend(
        _stage_entries(
            GOLDEN_TEST_QUESTION,
            " " + GOLDEN_TEST_COMPLETION,
            GOLDEN_TEST_ANSWER,
            AnswerFormat.NUMBER,
        )
    )
    script_path = out / "script.json"
    script_path.write_text(json.dumps(entries, indent=2, ensure_ascii=False))

    golden_path = out / "golden_prompt.txt"
    golden_path.write_text(golden_prompt(), encoding="utf-8")
    return Fixture(
        name=spec.name,
        corpus_path=corpus_path,
        script_path=script_path,
        expected={
            "golden_prompt_path": str(golden_path),
            "demo_answers": [d["answer"] for d in GOLDEN_DEMOS],
            "test_answer": GOLDEN_TEST_ANSWER,
            "n_questions": len(records),
        },
    )


def _build_planted(spec: FixtureSpec) -> Fixture:
    out = Path(spec.out_dir)
    out.mkdir(parents=True, exist_ok=True)

    items: list[dict] = []
    planted_cluster: list[int] = []
    wrong_ids: list[int] = []
    seen_texts: set[str] = set()
    for ci, cluster in enumerate(spec.clusters):
        template = TEMPLATES[cluster.template]
        cluster_items = []
        for j in range(cluster.size):
            # re-roll on text collisions: one prompt must map to one completion
            for salt in range(100):
                rng = random.Random(derived_seed(spec.name, spec.seed, ci, j, salt))
                item = template(rng)
                if item["text"] not in seen_texts:
                    break
            else:
                raise SpecInvalid(f"cannot generate {cluster.size} distinct questions")
            seen_texts.add(item["text"])
            cluster_items.append(item)
        wrong_positions = set(
            random.Random(derived_seed(spec.name, spec.seed, ci, "wrong")).sample(
                range(cluster.size), cluster.wrong
            )
        )
        for j, item in enumerate(cluster_items):
            item["is_wrong"] = j in wrong_positions
            item["cluster"] = ci
            if item["is_wrong"]:
                wrong_ids.append(len(items))
            planted_cluster.append(ci)
            items.append(item)

    records = [{"question": it["text"], "answer": str(it["gold"])} for it in items]
    corpus_path = out / "corpus.jsonl"
    write_dataset(records, corpus_path)

    # zero-shot chains: wrong questions get the misreading rationale
    entries: list[dict] = []
    for it in items:
        value = it["wrong"] if it["is_wrong"] else it["gold"]
        rationale = it["wrong_rationale"] if it["is_wrong"] else it["gold_rationale"]
        stage1 = f" {rationale} The answer is {value}."
        entries.extend(
            _stage_entries(it["text"], stage1, str(value), AnswerFormat.NUMBER)
        )

    expected: dict = {
        "planted_cluster": planted_cluster,
        "wrong_ids": sorted(wrong_ids),
        "cluster_sizes": [c.size for c in spec.clusters],
        "cluster_wrong": [c.wrong for c in spec.clusters],
        "k": spec.k,
        "embed_dim": spec.embed_dim,
        "embed_seed": spec.embed_seed,
        "seed": spec.seed,
        "methods": {},
    }

    if spec.script_methods:
        expected["methods"] = _script_few_shot(spec, items, entries)

    script_path = out / "script.json"
    script_path.write_text(json.dumps(entries, indent=2, ensure_ascii=False))
    (out / "expected.json").write_text(json.dumps(expected, indent=2))
    return Fixture(
        name=spec.name,
        corpus_path=corpus_path,
        script_path=script_path,
        expected=expected,
    )


def _script_few_shot(spec: FixtureSpec, items: list[dict], entries: list[dict]) -> dict:
    """Script the few-shot completions for the requested sampling methods.

    The builder replays the pipeline's own deterministic selection (embedding,
    retrieval, seeded sampling) to enumerate every prompt, then decides each
    outcome by the planted rule: a test question is answered wrong exactly
    when at least `mislead_threshold` of its demonstrations carry wrong
    answers.
    """
    questions = [
        Question(id=str(i), text=it["text"], answer_format=AnswerFormat.NUMBER,
                 gold_answer=str(it["gold"]))
        for i, it in enumerate(items)
    ]
    backend = ScriptedBackend.from_entries(entries)
    chains = {i: generate_chain(q, backend, GREEDY) for i, q in enumerate(questions)}
    embedder = HashBowEmbedder(dim=spec.embed_dim, seed=spec.embed_seed)
    vectors = embed_corpus(questions, embedder)
    threshold = spec.mislead_threshold or (spec.k + 1) // 2

    auto_indices: list[int] | None = None
    if "auto" in spec.script_methods:
        # replicate the diversity-based construction to learn its demo set
        model = kmeans(vectors, spec.k, seed=spec.seed)
        criteria = SelectionCriteria(require_answer_in_rationale=True)
        selection = select_from_chains(
            questions, chains, model, criteria,
            sort_mode=SortMode.MIN_DIST, seed=spec.seed,
        )
        auto_indices = [int(d.question.id) for d in selection.demos]

    methods: dict = {}
    for method in spec.script_methods:
        wrong_after: list[int] = []
        demo_cluster_share: dict[str, list[int]] = {"same_cluster": [], "wrong_demos": []}
        for i, q in enumerate(questions):
            if method == "retrieval":
                indices = top_k_similar(i, vectors, spec.k)
            elif method == "random":
                indices = random_sample_indices(
                    len(questions), spec.k, i, spec.seed, q.id
                )
            elif method == "auto":
                indices = auto_indices
            else:
                raise SpecInvalid(f"cannot script method {method!r}")
            demos = [make_demonstration(questions[j], chains[j]) for j in indices]
            prompt = render_inference_prompt(demos, q)
            n_wrong = sum(1 for j in indices if items[j]["is_wrong"])
            same = sum(1 for j in indices if items[j]["cluster"] == items[i]["cluster"])
            demo_cluster_share["same_cluster"].append(same)
            demo_cluster_share["wrong_demos"].append(n_wrong)
            misled = n_wrong >= threshold
            value = items[i]["wrong"] if misled else items[i]["gold"]
            rationale = (
                items[i]["wrong_rationale"] if misled else items[i]["gold_rationale"]
            )
            entries.append(
                {
                    "prompt": prompt,
                    "completion": f" {rationale} The answer is {value}.",
                }
            )
            if misled:
                wrong_after.append(i)
        methods[method] = {
            "wrong_ids": wrong_after,
            "same_cluster_counts": demo_cluster_share["same_cluster"],
            "wrong_demo_counts": demo_cluster_share["wrong_demos"],
            "threshold": threshold,
        }
    return methods
