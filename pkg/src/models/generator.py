"""
GRU encoder-decoder producing p(y | x, d_hat).

The embedding table is owned by the enclosing model and passed in; it feeds
the encoder, the decoder inputs and (through the tied output layer) the
decoder logits.
"""

from dataclasses import dataclass
from typing import Dict, List, Optional, Sequence, Union

import torch
from torch import Tensor, nn

from src.errors import ShapeError
from src.models.summary import HardSummary, SoftSummary
from src.nn import ops
from src.nn.gru import GRUCell, gru_cell
from src.parsing.vocab import BOS, EOS, PAD, Vocabulary

SEPARATOR = EOS


@dataclass
class AnswerPrediction:
    token_ids: List[int]
    surface: str
    log_prob: float


def render_answer(token_ids: Sequence[int], vocab: Vocabulary, placeholder_map: Dict[int, str]) -> str:
    """Join decoded tokens with single spaces, restoring placeholder surfaces."""
    words = []
    for token_id in token_ids:
        if token_id == EOS:
            break
        if vocab.is_placeholder(token_id):
            words.append(placeholder_map.get(token_id, vocab.token(token_id)))
        else:
            words.append(vocab.token(token_id))
    return " ".join(words)


class AnswerGenerator(nn.Module):
    """
    Single-layer GRU encoder and decoder.

    Output logits are E . (W_o h) when the hidden size differs from the
    embedding size, and E . h otherwise.
    """

    def __init__(self, embed: int, hidden: int, process_pads: bool = True,
                 max_answer_len: int = 10, separator: bool = True, dtype: torch.dtype = torch.float64):
        super().__init__()
        self.embed = embed
        self.hidden = hidden
        self.process_pads = process_pads
        self.separator = separator
        self.max_answer_len = max_answer_len
        self.encoder = GRUCell(embed, hidden, dtype)
        self.decoder = GRUCell(embed, hidden, dtype)
        self.W_o = nn.Parameter(torch.zeros(embed, hidden, dtype=dtype)) if hidden != embed else None
        self.encoder_steps = 0

    # -- encoding -----------------------------------------------------------

    def _prefix_ids(self, query_ids: Sequence[int]) -> List[int]:
        return list(query_ids) + ([SEPARATOR] if self.separator else [])

    def encoder_inputs(self, query_ids: Sequence[int], summary: Union[HardSummary, SoftSummary, Sequence[int]],
                       E: Tensor) -> Tensor:
        """
        Embedded encoder input [x; SEP; d_hat] as a (T, e) matrix, or
        [x; d_hat] for a generator built without the separator.

        `summary` may also be a plain id list (the flat Base input).
        """
        if not query_ids:
            raise ShapeError("encode: empty query")
        prefix = ops.embedding(E, torch.as_tensor(self._prefix_ids(query_ids), dtype=torch.long))
        if isinstance(summary, SoftSummary):
            if summary.blended.dim() != 2 or summary.blended.shape[1] != E.shape[1]:
                raise ShapeError(f"encode: blended summary {tuple(summary.blended.shape)} vs embedding dim {E.shape[1]}")
            return ops.concat([prefix, summary.blended], dim=0)

        ids = summary.token_ids if isinstance(summary, HardSummary) else list(summary)
        if not self.process_pads:
            ids = [t for t in ids if t != PAD]
        if not ids:
            return prefix
        return ops.concat([prefix, ops.embedding(E, torch.as_tensor(ids, dtype=torch.long))], dim=0)

    def encoder_weights(self, query_ids: Sequence[int],
                        summary: Union[HardSummary, SoftSummary, Sequence[int]]) -> Tensor:
        """
        Non-pad mass of every position of encoder_inputs, (T,).

        Query and separator positions weigh 1, a PAD id 0, and a blended
        position one minus its pad probability. A position of weight w moves
        the state by w * (h' - h), so pads leave it untouched in both modes.
        """
        dtype = self.encoder.W_z.dtype
        prefix = torch.ones(len(self._prefix_ids(query_ids)), dtype=dtype)
        if isinstance(summary, SoftSummary):
            if summary.pad_mass is None:
                return ops.concat([prefix, torch.ones(summary.blended.shape[0], dtype=dtype)], dim=0)
            return ops.concat([prefix, 1.0 - summary.pad_mass], dim=0)

        ids = summary.token_ids if isinstance(summary, HardSummary) else list(summary)
        if not self.process_pads:
            ids = [t for t in ids if t != PAD]
        return ops.concat([prefix, torch.as_tensor([float(t != PAD) for t in ids], dtype=dtype)], dim=0)

    def run_encoder(self, inputs: Tensor, weights: Optional[Tensor] = None) -> Tensor:
        """
        Fold the GRU over a (T, e) sequence from the zero state. Every position
        costs one GRU step; `weights` scales how far each step moves the state.
        """
        if weights is not None and weights.shape != inputs.shape[:1]:
            raise ShapeError(f"encoder weights {tuple(weights.shape)} vs inputs {tuple(inputs.shape)}")
        h = self.encoder.initial_state()
        for t in range(inputs.shape[0]):
            h_next = gru_cell(h, inputs[t], self.encoder)
            h = h_next if weights is None else weights[t] * h_next + (1.0 - weights[t]) * h
        self.encoder_steps += inputs.shape[0]
        return h

    def run_encoder_batch(self, inputs: Tensor, mask: Tensor, weights: Optional[Tensor] = None) -> Tensor:
        """
        Batched fold over (B, T, e) right-padded inputs; rows stop updating
        where mask is 0, so each row ends in the state of its own length.
        Optional (B, T) `weights` act as in run_encoder.
        """
        h = self.encoder.initial_state(inputs.shape[0])
        m = mask.to(inputs.dtype)
        if weights is not None:
            m = m * weights.to(inputs.dtype)
        m = m.unsqueeze(-1)
        for t in range(inputs.shape[1]):
            h_next = gru_cell(h, inputs[:, t], self.encoder)
            h = m[:, t] * h_next + (1.0 - m[:, t]) * h
        self.encoder_steps += int(mask.sum())
        return h

    def encode(self, query_ids: Sequence[int], summary, E: Tensor) -> Tensor:
        return self.run_encoder(self.encoder_inputs(query_ids, summary, E),
                                self.encoder_weights(query_ids, summary))

    # -- decoding -----------------------------------------------------------

    def logits(self, states: Tensor, E: Tensor) -> Tensor:
        projected = states if self.W_o is None else ops.linear(states, self.W_o)
        return ops.linear(projected, E)

    def _teacher_forced_log_probs(self, state: Tensor, target_ids: Sequence[int], E: Tensor) -> Tensor:
        inputs = ops.embedding(E, torch.as_tensor([BOS] + list(target_ids[:-1]), dtype=torch.long))
        h = state
        states = []
        for t in range(inputs.shape[0]):
            h = gru_cell(h, inputs[t], self.decoder)
            states.append(h)
        return ops.log_softmax(self.logits(torch.stack(states), E))

    def decode_loglik(self, state: Tensor, target_ids: Sequence[int], E: Tensor) -> Tensor:
        """Teacher-forced sum_t log softmax(E . h_t)[y_t]; target must end with EOS."""
        if not target_ids:
            raise ShapeError("decode_loglik: empty target")
        if target_ids[-1] != EOS:
            raise ShapeError("decode_loglik: target must end with EOS")
        log_probs = self._teacher_forced_log_probs(state, target_ids, E)
        target = torch.as_tensor(list(target_ids), dtype=torch.long)
        return log_probs.gather(1, target.unsqueeze(1)).sum()

    def step_distributions(self, state: Tensor, target_ids: Sequence[int], E: Tensor) -> Tensor:
        """Per-step output distributions under teacher forcing, (T, V)."""
        return torch.exp(self._teacher_forced_log_probs(state, target_ids, E))

    def decode_greedy(self, state: Tensor, E: Tensor, vocab: Vocabulary,
                      placeholder_map: Optional[Dict[int, str]] = None,
                      max_len: Optional[int] = None) -> AnswerPrediction:
        """Argmax decoding (ties to the lower id) until EOS or max_len steps."""
        max_len = self.max_answer_len if max_len is None else max_len
        if max_len < 1:
            raise ShapeError(f"max_len must be >= 1, got {max_len}")
        h = state
        previous = BOS
        ids: List[int] = []
        total = 0.0
        with torch.no_grad():
            for _ in range(max_len):
                x = ops.embedding(E, torch.as_tensor(previous))
                h = gru_cell(h, x, self.decoder)
                log_probs = ops.log_softmax(self.logits(h, E))
                token = int(torch.argmax(log_probs))
                total += float(log_probs[token])
                ids.append(token)
                if token == EOS:
                    break
                previous = token
        return AnswerPrediction(token_ids=ids, surface=render_answer(ids, vocab, placeholder_map or {}),
                                log_prob=total)
