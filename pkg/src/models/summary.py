"""
Document summaries built from a selection distribution: hard (K sentences
drawn without replacement, or the top K) and soft (probability-weighted
token embeddings).
"""

import logging
from dataclasses import dataclass
from typing import List, Optional, Sequence

import numpy as np
import torch
from torch import Tensor

from src.errors import ShapeError
from src.models.selection import SelectionDistribution
from src.nn import ops
from src.parsing.vocab import PAD

logger = logging.getLogger(__name__)


@dataclass
class HardSummary:
    """
    `indices` is the assembly order of `token_ids` (draw order when sampled,
    ascending sentence index for argmax); `selection_order` is the order in
    which sentences were drawn or ranked.
    """
    indices: List[int]
    selection_order: List[int]
    token_ids: List[int]
    k_exceeded: bool = False

    @property
    def first(self) -> int:
        return self.selection_order[0]


@dataclass
class SoftSummary:
    blended: Tensor  # (M, e)
    pad_mass: Optional[Tensor] = None  # (M,) probability that position m is a pad


def _assemble(sentences: Sequence[Sequence[int]], lengths: Sequence[int], indices: Sequence[int]) -> List[int]:
    row_length = len(sentences[0])
    tokens = []
    for i in indices:
        tokens.extend(sentences[i][: lengths[i]])
    return tokens + [PAD] * (row_length * len(indices) - len(tokens))


def hard_select(dist: SelectionDistribution, sentences: Sequence[Sequence[int]], lengths: Sequence[int],
                k: int, mode: str = "argmax", rng: Optional[np.random.Generator] = None) -> HardSummary:
    """
    Pick K distinct sentences.

    sample: draw, remove, renormalize, repeat; argmax: top K by probability
    with ties to the lower index. Asking for more sentences than the document
    has returns all of them and sets k_exceeded.
    """
    if k < 1:
        raise ShapeError(f"K must be >= 1, got {k}")
    probs = dist.numpy().astype(np.float64)
    num = probs.shape[0]
    if num != len(sentences):
        raise ShapeError(f"distribution over {num} sentences vs document of {len(sentences)}")
    exceeded = k > num
    if exceeded:
        logger.debug("K=%d exceeds %d sentences; returning all", k, num)
    k = min(k, num)

    if mode == "argmax":
        order = sorted(range(num), key=lambda i: (-probs[i], i))[:k]
        indices = sorted(order)
    elif mode == "sample":
        if rng is None:
            raise ValueError("sample mode needs an rng")
        remaining = probs.copy()
        order = []
        for _ in range(k):
            total = remaining.sum()
            if total <= 0:
                # leftover mass underflowed; fall back to uniform over the rest
                p = np.array([0.0 if i in order else 1.0 for i in range(num)])
                p /= p.sum()
            else:
                p = remaining / total
            choice = int(rng.choice(num, p=p))
            order.append(choice)
            remaining[choice] = 0.0
        indices = list(order)
    else:
        raise ValueError(f"unknown selection mode {mode!r}")

    return HardSummary(indices=indices, selection_order=order,
                       token_ids=_assemble(sentences, lengths, indices), k_exceeded=exceeded)


def sample_log_prob(dist: SelectionDistribution, order: Sequence[int]) -> Tensor:
    """
    Log-probability of an ordered draw without replacement:
    sum_k [log p(i_k) - log(1 - sum_{j<k} p(i_j))].
    """
    log_probs = dist.log_probs
    total = log_probs.new_zeros(())
    taken = log_probs.new_zeros(())
    for step, i in enumerate(order):
        total = total + log_probs[i]
        if step:
            total = total - ops.log(1.0 - taken)
        taken = taken + torch.exp(log_probs[i])
    return total


def soft_blend(dist: SelectionDistribution, grid: Tensor, E: Tensor) -> SoftSummary:
    """d_m = sum_l p_l * E[s_{l,m}]; pads blend in with the PAD embedding."""
    if grid.dim() != 2 or grid.shape[0] != len(dist):
        raise ShapeError(f"soft_blend: grid {tuple(grid.shape)} vs distribution over {len(dist)}")
    embedded = ops.embedding(E, grid)  # (L, M, e)
    is_pad = (grid == PAD).to(dist.probs.dtype)
    return SoftSummary(blended=torch.einsum("l,lme->me", dist.probs, embedded),
                       pad_mass=torch.einsum("l,lm->m", dist.probs, is_pad))
