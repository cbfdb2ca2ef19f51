"""
Model bundles: the hierarchical coarse-to-fine model (selector + summary +
answer generator over one shared embedding table) and the flat Base model.
"""

from dataclasses import dataclass
from typing import Optional

import numpy as np
import torch
from torch import Tensor, nn

from src.models.generator import AnswerGenerator, AnswerPrediction
from src.models.selection import SelectionDistribution, as_ids, build_selector
from src.models.summary import HardSummary, SoftSummary, hard_select, soft_blend
from src.nn import ops
from src.nn.init import init_parameters
from src.parsing.document import FlatExample, PreparedExample
from src.parsing.vocab import Vocabulary


@dataclass
class Prediction:
    sentence_index: int
    sentence_prob: float
    answer: AnswerPrediction
    summary: object
    entropy: float


class CoarseToFineModel(nn.Module):
    """
    All learnable parameters of the hierarchical model.

    `embedding` is the single table read by the selector, the encoder, the
    decoder inputs and the decoder output layer.
    """

    def __init__(self, vocab_size: int, embed: int = 64, hidden: int = 128, selector: str = "bow",
                 chunk_size: int = 7, fixed_j: bool = False, filters: int = 64, width: int = 5,
                 process_pads: bool = True, max_answer_len: int = 10, dtype: torch.dtype = torch.float64):
        super().__init__()
        self.embedding = nn.Parameter(torch.zeros(vocab_size, embed, dtype=dtype))
        self.selector = build_selector(selector, embed, hidden, chunk_size=chunk_size, fixed_j=fixed_j,
                                       filters=filters, width=width, dtype=dtype)
        self.generator = AnswerGenerator(embed, hidden, process_pads=process_pads,
                                         max_answer_len=max_answer_len, dtype=dtype)

    @classmethod
    def from_config(cls, config, vocab: Vocabulary) -> "CoarseToFineModel":
        model = cls(
            vocab_size=len(vocab),
            embed=config["model.embed"],
            hidden=config["model.hidden"],
            selector=config["selector.kind"],
            chunk_size=config["selector.chunk_size"],
            fixed_j=config["selector.fixed_j"],
            filters=config["selector.filters"],
            width=config["selector.width"],
            process_pads=config["encoder.process_pads"],
            max_answer_len=config["model.max_answer_len"],
            dtype=ops.resolve_dtype(config["tensor.dtype"]),
        )
        init_parameters(model, scale=config["model.init_scale"], seed=config["train.seed"])
        return model

    @staticmethod
    def grid(ex: PreparedExample) -> Tensor:
        return torch.as_tensor(ex.sentences, dtype=torch.long)

    def select(self, ex: PreparedExample) -> SelectionDistribution:
        return self.selector(as_ids(ex.query_ids), self.grid(ex), ex.sentence_lengths, self.embedding)

    def hard_summary(self, ex: PreparedExample, dist: SelectionDistribution, k: int, mode: str = "argmax",
                     rng: Optional[np.random.Generator] = None) -> HardSummary:
        return hard_select(dist, ex.sentences, ex.sentence_lengths, k, mode=mode, rng=rng)

    def forced_summary(self, ex: PreparedExample, index: int) -> HardSummary:
        """K=1 hard summary of a given sentence (gold label, First, Oracle)."""
        row = ex.sentences[index]
        return HardSummary(indices=[index], selection_order=[index], token_ids=list(row))

    def soft_summary(self, ex: PreparedExample, dist: SelectionDistribution) -> SoftSummary:
        return soft_blend(dist, self.grid(ex), self.embedding)

    def encode(self, ex: PreparedExample, summary) -> Tensor:
        return self.generator.encode(ex.query_ids, summary, self.embedding)

    def answer_loglik(self, ex: PreparedExample, summary) -> Tensor:
        """log p(y* | x, d_hat); the REINFORCE reward for a hard summary."""
        return self.generator.decode_loglik(self.encode(ex, summary), ex.answer_ids, self.embedding)

    def predict(self, ex: PreparedExample, vocab: Vocabulary, mode: str = "hard", k: int = 1,
                forced_index: Optional[int] = None) -> Prediction:
        """
        Test-time inference: argmax (top-K) selection for hard mode, blending
        for soft mode, or a forced sentence for the First/Oracle baselines.
        """
        with torch.no_grad():
            dist = self.select(ex)
            probs = dist.numpy()
            if forced_index is not None:
                summary = self.forced_summary(ex, forced_index)
                index = forced_index
            elif mode == "soft":
                summary = self.soft_summary(ex, dist)
                index = dist.argmax()
            else:
                summary = self.hard_summary(ex, dist, k, mode="argmax")
                index = summary.first
            state = self.encode(ex, summary)
            answer = self.generator.decode_greedy(state, self.embedding, vocab, ex.placeholder_map)
        return Prediction(sentence_index=index, sentence_prob=float(probs[index]), answer=answer,
                          summary=summary, entropy=dist.entropy())


class BaseModel(nn.Module):
    """Flat sequence-to-sequence reader over [x; first N document tokens]."""

    def __init__(self, vocab_size: int, embed: int = 64, hidden: int = 128, max_answer_len: int = 10,
                 dtype: torch.dtype = torch.float64):
        super().__init__()
        self.embedding = nn.Parameter(torch.zeros(vocab_size, embed, dtype=dtype))
        self.generator = AnswerGenerator(embed, hidden, process_pads=True, max_answer_len=max_answer_len,
                                         separator=False, dtype=dtype)

    @classmethod
    def from_config(cls, config, vocab: Vocabulary) -> "BaseModel":
        model = cls(
            vocab_size=len(vocab),
            embed=config["model.embed"],
            hidden=config["model.hidden"],
            max_answer_len=config["model.max_answer_len"],
            dtype=ops.resolve_dtype(config["tensor.dtype"]),
        )
        init_parameters(model, scale=config["model.init_scale"], seed=config["train.seed"])
        return model

    def encode(self, ex: FlatExample) -> Tensor:
        return self.generator.encode(ex.query_ids, ex.document_ids, self.embedding)

    def answer_loglik(self, ex: FlatExample) -> Tensor:
        return self.generator.decode_loglik(self.encode(ex), ex.answer_ids, self.embedding)

    def predict(self, ex: FlatExample, vocab: Vocabulary) -> AnswerPrediction:
        with torch.no_grad():
            return self.generator.decode_greedy(self.encode(ex), self.embedding, vocab, ex.placeholder_map)
