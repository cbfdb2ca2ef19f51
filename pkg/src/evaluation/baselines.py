"""
Reference systems: First (always sentence 0), Oracle (first sentence that
contains the answer, else sentence 0) and Base (flat reader over the first
300 document tokens).
"""

import logging
from typing import Optional, Sequence

from src.evaluation.metrics import EvalReport, evaluate_base, evaluate_model
from src.parsing.document import FlatExample, PreparedExample
from src.parsing.vocab import Vocabulary

logger = logging.getLogger(__name__)

BASELINES = ("first", "oracle", "base")


def first_sentence(ex: PreparedExample) -> int:
    return 0


def oracle_sentence(ex: PreparedExample) -> int:
    return ex.answer_matches[0] if ex.answer_matches else 0


def run_baseline(kind: str, vocab: Vocabulary, model=None,
                 examples: Optional[Sequence[PreparedExample]] = None,
                 flat_examples: Optional[Sequence[FlatExample]] = None,
                 base_model=None) -> EvalReport:
    """
    Evaluate a baseline.

    First and Oracle feed their sentence as a K=1 hard summary into the
    answer generator of `model`; Base runs `base_model` on `flat_examples`.
    """
    if kind == "first":
        if model is None or examples is None:
            raise ValueError("first baseline needs a model and prepared examples")
        report = evaluate_model(model, examples, vocab, method="first", choose=first_sentence)
    elif kind == "oracle":
        if model is None or examples is None:
            raise ValueError("oracle baseline needs a model and prepared examples")
        report = evaluate_model(model, examples, vocab, method="oracle", choose=oracle_sentence, oracle=True)
    elif kind == "base":
        if base_model is None or flat_examples is None:
            raise ValueError("base baseline needs a trained base model and flat examples")
        report = evaluate_base(base_model, flat_examples, vocab, method="base")
    else:
        raise ValueError(f"unknown baseline {kind!r}; expected one of {BASELINES}")
    logger.info(report.summary())
    return report
