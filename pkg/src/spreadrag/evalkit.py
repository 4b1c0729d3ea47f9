"""Question answering evaluation: datasets, metrics, run driver.

Metrics follow the usual extractive QA convention: answers are normalized
(lowercase, punctuation stripped, articles dropped, whitespace collapsed),
exact match compares normalized strings, and F1 is token-level overlap.
Both scores take the maximum over the gold answer and its aliases.
"""

from __future__ import annotations

import json
import logging
import random
import re
import string
import time
from collections import Counter
from dataclasses import dataclass, field
from typing import Callable

logger = logging.getLogger(__name__)

_ARTICLES = re.compile(r"\b(a|an|the)\b")
_PUNCT_TABLE = str.maketrans("", "", string.punctuation)


@dataclass
class QAItem:
    id: str
    question: str
    answer: str
    aliases: list[str] = field(default_factory=list)

    def golds(self) -> list[str]:
        return [self.answer] + [a for a in self.aliases if a]


def normalize_answer(text: str) -> str:
    """Lowercase, strip punctuation, drop articles, collapse whitespace."""
    text = text.lower()
    text = text.translate(_PUNCT_TABLE)
    text = _ARTICLES.sub(" ", text)
    return " ".join(text.split())


def exact_match(predicted: str, gold: str) -> float:
    return 1.0 if normalize_answer(predicted) == normalize_answer(gold) else 0.0


def f1_score(predicted: str, gold: str) -> float:
    predicted_tokens = normalize_answer(predicted).split()
    gold_tokens = normalize_answer(gold).split()
    if not predicted_tokens or not gold_tokens:
        return 1.0 if predicted_tokens == gold_tokens else 0.0
    common = Counter(predicted_tokens) & Counter(gold_tokens)
    overlap = sum(common.values())
    if overlap == 0:
        return 0.0
    precision = overlap / len(predicted_tokens)
    recall = overlap / len(gold_tokens)
    return 2 * precision * recall / (precision + recall)


def best_scores(predicted: str, golds: list[str]) -> tuple[float, float]:
    """(EM, F1) maximized independently over the gold variants."""
    if not golds:
        raise ValueError("at least one gold answer required")
    em = max(exact_match(predicted, gold) for gold in golds)
    f1 = max(f1_score(predicted, gold) for gold in golds)
    return em, f1


def load_dataset(path: str) -> list[QAItem]:
    """Read QA items from a JSONL file.

    Each line needs a question and an answer; the item id falls back to the
    line number and aliases are read from 'answer_aliases' or 'aliases'.
    """
    items = []
    with open(path, encoding="utf-8") as handle:
        for lineno, line in enumerate(handle, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                record = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ValueError(f"{path}:{lineno}: invalid JSON: {exc.msg}") from exc
            question = str(record.get("question", "")).strip()
            answer = str(record.get("answer", "")).strip()
            if not question or not answer:
                raise ValueError(f"{path}:{lineno}: record needs 'question' and 'answer'")
            raw_aliases = record.get("answer_aliases") or record.get("aliases") or []
            if not isinstance(raw_aliases, list):
                raise ValueError(f"{path}:{lineno}: aliases must be a list")
            items.append(
                QAItem(
                    id=str(record.get("id") or record.get("_id") or f"item-{lineno}"),
                    question=question,
                    answer=answer,
                    aliases=[str(a).strip() for a in raw_aliases if str(a).strip()],
                )
            )
    if not items:
        raise ValueError(f"no records in {path}")
    return items


def sample_items(items: list[QAItem], size: int, seed: int) -> list[QAItem]:
    """Seeded random subset; the full list (original order) if size covers it."""
    if size < 1:
        raise ValueError("sample size must be >= 1")
    if size >= len(items):
        return list(items)
    return random.Random(seed).sample(items, size)


@dataclass
class EvalRecord:
    item_id: str
    question: str
    gold: str
    aliases: list[str]
    predicted: str
    em: float
    f1: float
    insufficient: bool
    latency_s: float

    def to_dict(self) -> dict:
        return {
            "item_id": self.item_id,
            "question": self.question,
            "gold": self.gold,
            "aliases": self.aliases,
            "predicted": self.predicted,
            "em": self.em,
            "f1": round(self.f1, 6),
            "insufficient": self.insufficient,
            "latency_s": round(self.latency_s, 3),
        }


@dataclass
class EvalReport:
    pipeline: str
    dataset: str
    records: list[EvalRecord] = field(default_factory=list)

    @property
    def n(self) -> int:
        return len(self.records)

    @property
    def em_mean(self) -> float:
        return sum(r.em for r in self.records) / self.n if self.records else 0.0

    @property
    def f1_mean(self) -> float:
        return sum(r.f1 for r in self.records) / self.n if self.records else 0.0

    @property
    def correct(self) -> int:
        """Count of exact-match answers (a mechanical stand-in for judged
        correctness, which needs a human or judge model)."""
        return sum(1 for r in self.records if r.em == 1.0)

    @property
    def insufficient_count(self) -> int:
        return sum(1 for r in self.records if r.insufficient)

    def to_dict(self) -> dict:
        return {
            "pipeline": self.pipeline,
            "dataset": self.dataset,
            "n": self.n,
            "em": round(self.em_mean, 4),
            "f1": round(self.f1_mean, 4),
            "correct": self.correct,
            "insufficient": self.insufficient_count,
        }


def run_eval(
    answer_fn: Callable[[str], object],
    items: list[QAItem],
    pipeline: str,
    dataset: str = "",
    records_path: str | None = None,
) -> EvalReport:
    """Answer every item and score it.

    answer_fn takes the question text and returns an object with ``text``
    and ``insufficient`` attributes (a pipeline Answer).  Per-item records
    stream to records_path as JSONL when given.
    """
    report = EvalReport(pipeline=pipeline, dataset=dataset)
    sink = open(records_path, "w", encoding="utf-8") if records_path else None
    try:
        for item in items:
            started = time.perf_counter()
            result = answer_fn(item.question)
            elapsed = time.perf_counter() - started
            em, f1 = best_scores(result.text, item.golds())
            record = EvalRecord(
                item_id=item.id,
                question=item.question,
                gold=item.answer,
                aliases=item.aliases,
                predicted=result.text,
                em=em,
                f1=f1,
                insufficient=bool(result.insufficient),
                latency_s=elapsed,
            )
            report.records.append(record)
            if sink:
                sink.write(json.dumps(record.to_dict(), ensure_ascii=False) + "\n")
            logger.info("item %s: em=%.0f f1=%.2f", item.id, em, f1)
    finally:
        if sink:
            sink.close()
    return report


def format_report_table(reports: list[EvalReport]) -> str:
    """Fixed-width table over one or more eval runs.

    Columns mirror the usual benchmark summary: per pipeline and dataset,
    the number of items, mean EM, mean F1, and exact-match count.
    """
    headers = ("Pipeline", "Dataset", "N", "EM", "F1", "Correct")
    rows = [
        (
            report.pipeline,
            report.dataset or "-",
            str(report.n),
            f"{report.em_mean:.2f}",
            f"{report.f1_mean:.2f}",
            str(report.correct),
        )
        for report in reports
    ]
    widths = [max(len(h), *(len(row[i]) for row in rows)) if rows else len(h)
              for i, h in enumerate(headers)]
    def line(cells):
        return "  ".join(cell.ljust(widths[i]) for i, cell in enumerate(cells)).rstrip()
    out = [line(headers), line(tuple("-" * w for w in widths))]
    out.extend(line(row) for row in rows)
    return "\n".join(out)
