"""
Shared test utilities: central finite differences and tiny model builders.
"""

from typing import Callable, List, Optional, Sequence

import numpy as np
import torch
from torch import Tensor

from src.models.coarse_to_fine import CoarseToFineModel
from src.models.selection import as_ids
from src.nn.init import init_parameters
from src.parsing.document import PreparedExample
from src.parsing.vocab import EOS, PAD

FD_STEP = 1e-5
FD_TOLERANCE = 1e-4


def relative_error(analytic: np.ndarray, numeric: np.ndarray, floor: float = 1e-7) -> float:
    diff = np.linalg.norm(analytic - numeric)
    scale = max(np.linalg.norm(analytic), np.linalg.norm(numeric), floor)
    return float(diff / scale)


def finite_difference_error(loss_fn: Callable[[], Tensor], params: Sequence[Tensor], eps: float = FD_STEP,
                            max_coords: int = 25, seed: int = 0) -> float:
    """
    Relative error between autograd and central-difference gradients of
    loss_fn() over (a random subset of) the coordinates of `params`.
    """
    rng = np.random.default_rng(seed)
    params = list(params)
    loss = loss_fn()
    grads = torch.autograd.grad(loss, params, allow_unused=True)

    analytic: List[float] = []
    numeric: List[float] = []
    with torch.no_grad():
        for p, g in zip(params, grads):
            g = torch.zeros_like(p) if g is None else g
            # gradients (e.g. of conv1d inputs) and inputs may be non-contiguous
            flat_grad = g.reshape(-1)
            n = p.numel()
            coords = range(n) if n <= max_coords else rng.choice(n, size=max_coords, replace=False)
            for i in coords:
                i = int(i)
                index = tuple(int(c) for c in np.unravel_index(i, tuple(p.shape)))
                original = float(p.data[index])
                p.data[index] = original + eps
                up = float(loss_fn())
                p.data[index] = original - eps
                down = float(loss_fn())
                p.data[index] = original
                numeric.append((up - down) / (2 * eps))
                analytic.append(float(flat_grad[i]))
    return relative_error(np.array(analytic), np.array(numeric))


def random_example(rng: np.random.Generator, vocab_size: int, num_sentences: int, row_length: int,
                   query_len: int = 2, answer_len: int = 1, first_id: int = 4,
                   lengths: Optional[Sequence[int]] = None) -> PreparedExample:
    """Random PreparedExample over ids [first_id, vocab_size)."""
    def ids(n):
        return [int(t) for t in rng.integers(first_id, vocab_size, size=n)]

    if lengths is None:
        lengths = [int(rng.integers(1, row_length + 1)) for _ in range(num_sentences)]
    rows = [ids(n) + [PAD] * (row_length - n) for n in lengths]
    return PreparedExample(
        query_ids=ids(query_len),
        sentences=rows,
        sentence_lengths=list(lengths),
        answer_ids=ids(answer_len) + [EOS],
        gold_sentence=int(rng.integers(num_sentences)),
    )


def tiny_model(vocab_size: int = 12, embed: int = 3, hidden: int = 4, selector: str = "bow", seed: int = 0,
               scale: float = 0.3, **kwargs) -> CoarseToFineModel:
    model = CoarseToFineModel(vocab_size=vocab_size, embed=embed, hidden=hidden, selector=selector, **kwargs)
    init_parameters(model, scale=scale, seed=seed)
    return model


def relu_margin(model: CoarseToFineModel, ex: PreparedExample) -> float:
    """Smallest |pre-activation| of the selection scorer (distance to the ReLU kink)."""
    with torch.no_grad():
        features, _ = model.selector.unit_features(as_ids(ex.query_ids), model.grid(ex), ex.sentence_lengths,
                                                   model.embedding)
        margin = float(model.selector.scorer.preactivations(features).abs().min())
        if model.selector.kind == "cnn":
            maps = model.selector.feature_maps(as_ids(ex.query_ids), model.grid(ex), model.embedding)
            if maps.shape[-2] > 1:
                top2 = torch.topk(maps, 2, dim=-2).values
                margin = min(margin, float((top2[..., 0, :] - top2[..., 1, :]).abs().min()))
    return margin
