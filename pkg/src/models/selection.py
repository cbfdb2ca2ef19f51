"""
Coarse sentence-selection models defining p(s | x, d).

All three scorers share one shape: build a feature vector per unit
(sentence, or chunk of a sentence), append the sentence-index one-hot, score
it with v^T relu(W h), and softmax over units.
"""

from dataclasses import dataclass
from typing import List, Optional, Sequence

import torch
from torch import Tensor, nn

from src.errors import ShapeError
from src.nn import ops
from src.parsing.document import ONEHOT_DIM
from src.parsing.vocab import PAD


@dataclass
class SelectionDistribution:
    """
    Probabilities over the kept sentences.

    `log_probs` stays attached to the autograd graph; `chunk_probs[l]` holds
    the probabilities of sentence l's chunks for the chunked scorer.
    """
    log_probs: Tensor
    chunk_probs: Optional[List[Tensor]] = None

    @property
    def probs(self) -> Tensor:
        return torch.exp(self.log_probs)

    def __len__(self) -> int:
        return self.log_probs.shape[0]

    def numpy(self):
        return self.probs.detach().cpu().numpy()

    def argmax(self) -> int:
        # torch.argmax returns the first maximal index, so ties go to the lower id
        return int(torch.argmax(self.log_probs.detach()))

    def entropy(self) -> float:
        p = self.probs.detach()
        return float(-(p * self.log_probs.detach()).sum())


def as_ids(ids: Sequence[int]) -> Tensor:
    return torch.as_tensor(list(ids), dtype=torch.long)


def bow_repr(token_ids: Tensor, E: Tensor, include_pads: bool = False) -> Tensor:
    """Mean embedding of the non-pad tokens of one sequence."""
    if token_ids.dim() != 1:
        raise ShapeError(f"bow_repr: expected a 1-D id sequence, got {tuple(token_ids.shape)}")
    mask = None if include_pads else token_ids != PAD
    if mask is not None and not bool(mask.any()):
        raise ShapeError("bow_repr: sequence has no non-pad tokens")
    return ops.mean_rows(ops.embedding(E, token_ids), mask)


def bow_grid(grid: Tensor, E: Tensor, include_pads: bool = False) -> Tensor:
    """bow_repr applied to every row of an (N, M) id grid at once."""
    embedded = ops.embedding(E, grid)
    if include_pads:
        return embedded.mean(dim=1)
    mask = (grid != PAD).to(E.dtype)
    counts = mask.sum(dim=1)
    if bool((counts == 0).any()):
        raise ShapeError("bow_repr: a row has no non-pad tokens")
    return (embedded * mask.unsqueeze(-1)).sum(dim=1) / counts.unsqueeze(-1)


class Scorer(nn.Module):
    """Single-layer feed-forward scoring v^T relu(W h)."""

    def __init__(self, in_features: int, hidden: int, dtype: torch.dtype):
        super().__init__()
        self.W = nn.Parameter(torch.zeros(hidden, in_features, dtype=dtype))
        self.v = nn.Parameter(torch.zeros(hidden, dtype=dtype))

    def preactivations(self, features: Tensor) -> Tensor:
        return ops.linear(features, self.W)

    def forward(self, features: Tensor) -> Tensor:
        return ops.matmul(ops.relu(self.preactivations(features)), self.v)


class SentenceSelector(nn.Module):
    """Base class; subclasses implement features()."""

    kind = ""
    chunked = False

    def __init__(self, feature_dim: int, hidden: int, dtype: torch.dtype):
        super().__init__()
        self.scorer = Scorer(feature_dim + ONEHOT_DIM, hidden, dtype)
        self.register_buffer("onehots", torch.eye(ONEHOT_DIM, dtype=dtype), persistent=False)

    def features(self, query_ids: Tensor, grid: Tensor, lengths: Sequence[int], E: Tensor):
        """
        Returns:
            (features, owners): one row per scored unit and the sentence index
            each unit belongs to
        """
        raise NotImplementedError

    def unit_features(self, query_ids: Tensor, grid: Tensor, lengths: Sequence[int], E: Tensor):
        features, owners = self.features(query_ids, grid, lengths, E)
        if grid.shape[0] > ONEHOT_DIM:
            raise ShapeError(f"{grid.shape[0]} sentences exceed the one-hot size {ONEHOT_DIM}")
        return ops.concat([features, self.onehots[owners]], dim=-1), owners

    def forward(self, query_ids: Tensor, grid: Tensor, lengths: Sequence[int], E: Tensor) -> SelectionDistribution:
        if grid.dim() != 2 or grid.shape[0] < 1:
            raise ShapeError(f"selector: expected an (L, M) grid with L >= 1, got {tuple(grid.shape)}")
        h, owners = self.unit_features(query_ids, grid, lengths, E)
        log_probs = ops.log_softmax(self.scorer(h))
        if not self.chunked:
            return SelectionDistribution(log_probs=log_probs)
        return self._marginalize(log_probs, owners, grid.shape[0])

    @staticmethod
    def _marginalize(chunk_log_probs: Tensor, owners: Tensor, num_sentences: int) -> SelectionDistribution:
        sentence_log_probs = []
        chunk_probs = []
        for l in range(num_sentences):
            mine = chunk_log_probs[owners == l]
            sentence_log_probs.append(torch.logsumexp(mine, dim=0))
            chunk_probs.append(torch.exp(mine))
        return SelectionDistribution(log_probs=torch.stack(sentence_log_probs), chunk_probs=chunk_probs)


class BowSelector(SentenceSelector):
    """h_l = [BoW(x); BoW(s_l); onehot(l)]."""

    kind = "bow"

    def __init__(self, embed: int, hidden: int, dtype: torch.dtype = torch.float64):
        super().__init__(2 * embed, hidden, dtype)

    def features(self, query_ids, grid, lengths, E):
        query = bow_repr(query_ids, E)
        sentences = bow_grid(grid, E)
        owners = torch.arange(grid.shape[0])
        return ops.concat([query.expand(grid.shape[0], -1), sentences], dim=-1), owners


class ChunkedBowSelector(SentenceSelector):
    """
    Scores fixed-size chunks of each sentence as BoW units and marginalizes
    chunk probabilities back onto sentences.

    By default chunks cover the non-pad tokens only (the last may be short);
    with fixed_j every padded row is cut into ceil(M / chunk_size) chunks and
    pads count toward the chunk means.
    """

    kind = "chunk"
    chunked = True

    def __init__(self, embed: int, hidden: int, chunk_size: int = 7, fixed_j: bool = False,
                 dtype: torch.dtype = torch.float64):
        super().__init__(2 * embed, hidden, dtype)
        if chunk_size < 1:
            raise ShapeError(f"chunk_size must be >= 1, got {chunk_size}")
        self.chunk_size = chunk_size
        self.fixed_j = fixed_j

    def chunk_grid(self, grid: Tensor, lengths: Sequence[int]):
        c = self.chunk_size
        chunks, owners = [], []
        for l in range(grid.shape[0]):
            row = grid[l]
            span = row.shape[0] if self.fixed_j else int(lengths[l])
            for start in range(0, span, c):
                piece = row[start:min(start + c, span)]
                chunks.append(torch.cat([piece, piece.new_full((c - piece.shape[0],), PAD)]))
                owners.append(l)
        return torch.stack(chunks), torch.as_tensor(owners, dtype=torch.long)

    def features(self, query_ids, grid, lengths, E):
        chunks, owners = self.chunk_grid(grid, lengths)
        query = bow_repr(query_ids, E)
        if self.fixed_j:
            # a chunk made only of padding still has a well-defined mean
            chunk_repr = bow_grid(chunks, E, include_pads=True)
        else:
            chunk_repr = bow_grid(chunks, E)
        return ops.concat([query.expand(chunks.shape[0], -1), chunk_repr], dim=-1), owners


class CnnSelector(SentenceSelector):
    """
    h_l = [maxpool(conv(emb([x; s_l]))); onehot(l)] with F filters of width w.

    Inputs shorter than w are right-padded with the PAD embedding.
    """

    kind = "cnn"

    def __init__(self, embed: int, hidden: int, filters: int = 64, width: int = 5,
                 dtype: torch.dtype = torch.float64):
        if filters < 1 or width < 1:
            raise ShapeError(f"filters and width must be >= 1, got {filters}, {width}")
        super().__init__(filters, hidden, dtype)
        self.width = width
        self.filters = nn.Parameter(torch.zeros(filters, embed, width, dtype=dtype))
        self.b_conv = nn.Parameter(torch.zeros(filters, dtype=dtype))

    def sequences(self, query_ids: Tensor, grid: Tensor) -> Tensor:
        seqs = torch.cat([query_ids.expand(grid.shape[0], -1), grid], dim=1)
        short = self.width - seqs.shape[1]
        if short > 0:
            seqs = torch.cat([seqs, seqs.new_full((seqs.shape[0], short), PAD)], dim=1)
        return seqs

    def feature_maps(self, query_ids: Tensor, grid: Tensor, E: Tensor) -> Tensor:
        """(L, T - w + 1, F) convolution output before pooling."""
        return ops.conv1d(ops.embedding(E, self.sequences(query_ids, grid)), self.filters, self.b_conv)

    def features(self, query_ids, grid, lengths, E):
        pooled = ops.max_over_time(self.feature_maps(query_ids, grid, E))
        return pooled, torch.arange(grid.shape[0])


def build_selector(kind: str, embed: int, hidden: int, chunk_size: int = 7, fixed_j: bool = False,
                   filters: int = 64, width: int = 5, dtype: torch.dtype = torch.float64) -> SentenceSelector:
    if kind == "bow":
        return BowSelector(embed, hidden, dtype=dtype)
    if kind == "chunk":
        return ChunkedBowSelector(embed, hidden, chunk_size=chunk_size, fixed_j=fixed_j, dtype=dtype)
    if kind == "cnn":
        return CnnSelector(embed, hidden, filters=filters, width=width, dtype=dtype)
    raise ValueError(f"unknown selector kind {kind!r}")


def _run(selector: SentenceSelector, x: Sequence[int], d: Sequence[Sequence[int]],
         E: Tensor, lengths: Optional[Sequence[int]] = None) -> SelectionDistribution:
    grid = torch.as_tensor([list(row) for row in d], dtype=torch.long)
    if lengths is None:
        lengths = [int((row != PAD).sum()) for row in grid]
    return selector(as_ids(x), grid, lengths, E)


def score_bow(x, d, E: Tensor, params: BowSelector) -> SelectionDistribution:
    return _run(params, x, d, E)


def score_chunked(x, d, E: Tensor, params: ChunkedBowSelector) -> SelectionDistribution:
    return _run(params, x, d, E)


def score_cnn(x, d, E: Tensor, params: CnnSelector) -> SelectionDistribution:
    return _run(params, x, d, E)
