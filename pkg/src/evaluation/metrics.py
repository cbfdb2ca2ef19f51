"""
Answer accuracy, approximate sentence-selection accuracy and the per-run
evaluation report.
"""

import logging
from dataclasses import asdict, dataclass
from typing import Callable, Iterable, List, Optional, Sequence

import numpy as np
import torch

from src.parsing.document import FlatExample, PreparedExample
from src.parsing.tokenizer import normalize_answer
from src.parsing.vocab import Vocabulary

logger = logging.getLogger(__name__)


def answers_match(predicted: str, gold: str) -> bool:
    """Exact match after lowercasing, tokenizing and single-spacing both sides."""
    return normalize_answer(predicted) == normalize_answer(gold)


def answer_accuracy(predict: Callable[[object], str], examples: Sequence) -> float:
    """Share of examples whose predicted surface matches the gold answer."""
    if not examples:
        return 0.0
    hits = sum(answers_match(predict(ex), ex.answer) for ex in examples)
    return hits / len(examples)


def sentence_accuracy(select: Callable[[PreparedExample], int], examples: Iterable[PreparedExample],
                      first_match_only: bool = False) -> Optional[float]:
    """
    Share of the examples with at least one answer-matching sentence where
    the selected index is a matching sentence (or, with first_match_only, the
    first matching one).

    Returns None when no example has a match.
    """
    hits, total = 0, 0
    for ex in examples:
        if not ex.answer_matches:
            continue
        total += 1
        index = select(ex)
        if first_match_only:
            hits += index == ex.answer_matches[0]
        else:
            hits += index in ex.answer_matches
    return hits / total if total else None


@dataclass
class EvalReport:
    method: str
    num_examples: int
    answer_correct: int
    sentence_total: int
    sentence_hits: int
    first_match_hits: int
    mean_log_prob: float
    mean_entropy: Optional[float] = None
    oracle: bool = False

    @property
    def answer_accuracy(self) -> float:
        return self.answer_correct / self.num_examples if self.num_examples else 0.0

    @property
    def sentence_accuracy(self) -> Optional[float]:
        return self.sentence_hits / self.sentence_total if self.sentence_total else None

    @property
    def first_match_accuracy(self) -> Optional[float]:
        return self.first_match_hits / self.sentence_total if self.sentence_total else None

    def as_row(self) -> dict:
        row = asdict(self)
        row.update(
            answer_acc=self.answer_accuracy,
            sent_acc=self.sentence_accuracy,
            first_match_acc=self.first_match_accuracy,
        )
        return row

    def summary(self) -> str:
        sent = "n/a" if self.sentence_accuracy is None else f"{self.sentence_accuracy:.3f}"
        return (f"{self.method}: answer_acc={self.answer_accuracy:.3f} ({self.answer_correct}/{self.num_examples}) "
                f"sent_acc={sent} (over {self.sentence_total})")


def evaluate_model(model, examples: Sequence[PreparedExample], vocab: Vocabulary, method: str,
                   mode: str = "hard", k: int = 1,
                   choose: Optional[Callable[[PreparedExample], int]] = None,
                   oracle: bool = False) -> EvalReport:
    """
    Run test-time inference of a coarse-to-fine model over a split.

    `choose` forces the selected sentence (First/Oracle baselines); otherwise
    the model's argmax (top-K for hard, highest probability for soft) is used.
    """
    correct = sentence_total = hits = first_hits = 0
    log_probs: List[float] = []
    entropies: List[float] = []
    for ex in examples:
        forced = choose(ex) if choose is not None else None
        prediction = model.predict(ex, vocab, mode=mode, k=k, forced_index=forced)
        correct += answers_match(prediction.answer.surface, ex.answer)
        if ex.answer_matches:
            sentence_total += 1
            hits += prediction.sentence_index in ex.answer_matches
            first_hits += prediction.sentence_index == ex.answer_matches[0]
        with torch.no_grad():
            log_probs.append(float(model.answer_loglik(ex, prediction.summary)))
        entropies.append(prediction.entropy)

    report = EvalReport(
        method=method,
        num_examples=len(examples),
        answer_correct=correct,
        sentence_total=sentence_total,
        sentence_hits=hits,
        first_match_hits=first_hits,
        mean_log_prob=float(np.mean(log_probs)) if log_probs else 0.0,
        mean_entropy=float(np.mean(entropies)) if entropies else None,
        oracle=oracle,
    )
    logger.debug(report.summary())
    return report


def evaluate_base(model, examples: Sequence[FlatExample], vocab: Vocabulary, method: str = "base") -> EvalReport:
    """Answer accuracy of the flat Base model; it selects no sentence."""
    correct = 0
    log_probs = []
    for ex in examples:
        prediction = model.predict(ex, vocab)
        correct += answers_match(prediction.surface, ex.answer)
        with torch.no_grad():
            log_probs.append(float(model.answer_loglik(ex)))
    return EvalReport(
        method=method,
        num_examples=len(examples),
        answer_correct=correct,
        sentence_total=0,
        sentence_hits=0,
        first_match_hits=0,
        mean_log_prob=float(np.mean(log_probs)) if log_probs else 0.0,
    )
