"""Benchmark corpora: uniform question records, answer formats, token counting.

Dataset files are UTF-8 JSONL, one record per line:

    {"question": "...", "answer": "...", "rationale": "...", "options": [...]}

`answer` and `rationale` are optional. `options` (multiple-choice only) holds
the choice texts; the loader appends them to the question text as
"Answer Choices: (A) ... (B) ..." when the text does not already carry them,
and labels the question with the corresponding letters.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass
from decimal import Decimal, InvalidOperation
from enum import Enum
from pathlib import Path

from .errors import DataError, EmptyDataset, MalformedRecord, UnnormalizableAnswer

CHOICE_LETTERS = ("A", "B", "C", "D", "E")


class AnswerFormat(str, Enum):
    NUMBER = "number"
    MULTIPLE_CHOICE = "multiple-choice"
    YES_NO = "yes-no"
    STRING_SEQ = "string-seq"


@dataclass(frozen=True)
class Question:
    """One corpus item. `id` is the zero-based line index as a string, so any
    shuffling experiment is reproducible from (dataset, seed) alone."""

    id: str
    text: str
    answer_format: AnswerFormat
    gold_answer: str | None = None
    options: tuple[str, ...] | None = None
    annotated_chain: str | None = None

    def __post_init__(self):
        if not self.text:
            raise ValueError("question text must be non-empty")


@dataclass(frozen=True)
class DatasetSpec:
    """Static description of a benchmark: format, demo count, file location."""

    name: str
    answer_format: AnswerFormat
    default_k: int
    path: str | Path | None = None

    def __post_init__(self):
        if self.default_k < 1:
            raise ValueError("default_k must be >= 1")


# Demo counts: 8 unless noted (4-choice/letter tasks use 4, csqa 7, strategyqa 6).
BUILTIN_DATASETS: dict[str, DatasetSpec] = {
    "multiarith": DatasetSpec("multiarith", AnswerFormat.NUMBER, 8),
    "gsm8k": DatasetSpec("gsm8k", AnswerFormat.NUMBER, 8),
    "addsub": DatasetSpec("addsub", AnswerFormat.NUMBER, 8),
    "aqua": DatasetSpec("aqua", AnswerFormat.MULTIPLE_CHOICE, 4),
    "singleeq": DatasetSpec("singleeq", AnswerFormat.NUMBER, 8),
    "svamp": DatasetSpec("svamp", AnswerFormat.NUMBER, 8),
    "csqa": DatasetSpec("csqa", AnswerFormat.MULTIPLE_CHOICE, 7),
    "strategyqa": DatasetSpec("strategyqa", AnswerFormat.YES_NO, 6),
    "letter": DatasetSpec("letter", AnswerFormat.STRING_SEQ, 4),
    "coin": DatasetSpec("coin", AnswerFormat.YES_NO, 8),
}

_CURRENCY = "$€£¥"
_YES_NO_MAP = {"yes": "yes", "no": "no", "true": "yes", "false": "no"}


def count_question_tokens(text: str) -> int:
    """Whitespace-delimited token count after trimming.

    Deliberately tokenizer-free: the selection criterion this feeds mirrors a
    hand-crafting heuristic and must not depend on any model vocabulary.
    """
    return len(text.split())


def normalize_gold_answer(raw: str, fmt: AnswerFormat) -> str:
    """Coerce a raw answer string to its canonical comparison form.

    Number: no currency/commas/trailing zeros ("$43." -> "43", "1.0" -> "1").
    MultipleChoice: single uppercase letter A..E. YesNo: "yes"/"no"
    (true/false accepted). StringSeq: lowercased, stripped.

    Raises UnnormalizableAnswer when `raw` cannot be coerced to `fmt`.
    Idempotent for every format.
    """
    s = raw.strip()
    if not s:
        raise UnnormalizableAnswer(f"empty answer for format {fmt.value}")

    if fmt is AnswerFormat.NUMBER:
        cleaned = s.replace(",", "").strip()
        for ch in _CURRENCY:
            cleaned = cleaned.replace(ch, "")
        cleaned = cleaned.strip().rstrip(".")
        try:
            d = Decimal(cleaned)
        except InvalidOperation:
            raise UnnormalizableAnswer(f"not a number: {raw!r}") from None
        out = format(d, "f")
        if "." in out:
            out = out.rstrip("0").rstrip(".")
        if out in ("-0", ""):
            out = "0"
        return out

    if fmt is AnswerFormat.MULTIPLE_CHOICE:
        letter = s.strip(" .()").upper()
        if letter not in CHOICE_LETTERS:
            raise UnnormalizableAnswer(f"not a choice letter: {raw!r}")
        return letter

    if fmt is AnswerFormat.YES_NO:
        folded = s.strip(" .").lower()
        if folded not in _YES_NO_MAP:
            raise UnnormalizableAnswer(f"not yes/no: {raw!r}")
        return _YES_NO_MAP[folded]

    # STRING_SEQ
    return s.strip().strip('"').strip().lower()


_CHOICES_MARK = re.compile(r"Answer Choices:", re.IGNORECASE)


def _attach_options(text: str, options: list[str]) -> str:
    if _CHOICES_MARK.search(text):
        return text
    rendered = " ".join(
        f"({CHOICE_LETTERS[i]}) {opt}" for i, opt in enumerate(options)
    )
    return f"{text} Answer Choices: {rendered}"


def load_dataset(path: str | Path, spec: DatasetSpec) -> list[Question]:
    """Load every record of a JSONL dataset file, in file order.

    Question ids are "0".."n-1" by line position. Gold answers are normalized
    on load so extraction output and gold compare equal. Blank lines are
    tolerated; anything else that fails to parse raises MalformedRecord with
    its 1-based line number. A file with zero records raises EmptyDataset.
    """
    path = Path(path)
    if not path.exists():
        raise DataError(f"corpus file not found: {path}")
    questions: list[Question] = []
    with path.open(encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                record = json.loads(line)
            except json.JSONDecodeError as exc:
                raise MalformedRecord(line_no, f"invalid JSON: {exc.msg}") from exc
            if not isinstance(record, dict):
                raise MalformedRecord(line_no, "record is not an object")
            text = str(record.get("question", "")).strip()
            if not text:
                raise MalformedRecord(line_no, "missing question text")

            options = None
            if spec.answer_format is AnswerFormat.MULTIPLE_CHOICE:
                raw_options = record.get("options")
                if raw_options is not None:
                    if (
                        not isinstance(raw_options, list)
                        or not all(isinstance(o, str) for o in raw_options)
                        or not 1 <= len(raw_options) <= len(CHOICE_LETTERS)
                    ):
                        raise MalformedRecord(line_no, "bad options list")
                    text = _attach_options(text, raw_options)
                    options = CHOICE_LETTERS[: len(raw_options)]
                else:
                    options = CHOICE_LETTERS

            gold = None
            raw_answer = record.get("answer")
            if raw_answer is not None and str(raw_answer).strip():
                try:
                    gold = normalize_gold_answer(str(raw_answer), spec.answer_format)
                except UnnormalizableAnswer as exc:
                    raise MalformedRecord(line_no, str(exc)) from exc

            rationale = record.get("rationale")
            questions.append(
                Question(
                    id=str(len(questions)),
                    text=text,
                    answer_format=spec.answer_format,
                    gold_answer=gold,
                    options=options,
                    annotated_chain=str(rationale) if rationale else None,
                )
            )
    if not questions:
        raise EmptyDataset(f"no records in {path}")
    return questions


def write_dataset(records: list[dict], path: str | Path) -> None:
    """Write records in the dataset file format (one JSON object per line)."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", encoding="utf-8") as fh:
        for record in records:
            fh.write(json.dumps(record, ensure_ascii=False) + "\n")
