"""
Gated recurrent unit with the formulation

    z  = sigmoid(W_z x + U_z h + b_z)
    r  = sigmoid(W_r x + U_r h + b_r)
    h~ = tanh(W_h x + U_h (r * h) + b_h)
    h' = (1 - z) * h + z * h~

Note this differs from torch.nn.GRU, which applies the reset gate after the
U_h product; the cell is therefore written out from the checked primitives.
"""

import torch
from torch import Tensor, nn

from src.errors import ShapeError
from src.nn import ops


class GRUCell(nn.Module):
    """One GRU layer's weights; works on a single state (H,) or a batch (B, H)."""

    def __init__(self, input_size: int, hidden_size: int, dtype: torch.dtype = torch.float64):
        super().__init__()
        self.input_size = input_size
        self.hidden_size = hidden_size

        def weight(rows: int, cols: int) -> nn.Parameter:
            return nn.Parameter(torch.zeros(rows, cols, dtype=dtype))

        def bias(size: int) -> nn.Parameter:
            return nn.Parameter(torch.zeros(size, dtype=dtype))

        self.W_z, self.U_z, self.b_z = weight(hidden_size, input_size), weight(hidden_size, hidden_size), bias(hidden_size)
        self.W_r, self.U_r, self.b_r = weight(hidden_size, input_size), weight(hidden_size, hidden_size), bias(hidden_size)
        self.W_h, self.U_h, self.b_h = weight(hidden_size, input_size), weight(hidden_size, hidden_size), bias(hidden_size)

    def initial_state(self, batch: int = 0) -> Tensor:
        shape = (batch, self.hidden_size) if batch else (self.hidden_size,)
        return torch.zeros(shape, dtype=self.W_z.dtype)

    def forward(self, h: Tensor, x: Tensor) -> Tensor:
        return gru_cell(h, x, self)


def gru_cell(h: Tensor, x: Tensor, params: GRUCell) -> Tensor:
    """
    Advance the GRU by one step.

    Args:
        h: previous state, (H,) or (B, H)
        x: input, (E,) or (B, E)
        params: the cell's weights

    Returns:
        next state with the shape of h
    """
    if h.shape[-1] != params.hidden_size or x.shape[-1] != params.input_size or h.dim() != x.dim():
        raise ShapeError(
            f"gru_cell: state {tuple(h.shape)} / input {tuple(x.shape)} vs "
            f"cell ({params.input_size} -> {params.hidden_size})"
        )
    if h.dim() == 2 and h.shape[0] != x.shape[0]:
        raise ShapeError(f"gru_cell: batch mismatch {tuple(h.shape)} vs {tuple(x.shape)}")

    z = ops.sigmoid(ops.linear(x, params.W_z, params.b_z) + ops.linear(h, params.U_z))
    r = ops.sigmoid(ops.linear(x, params.W_r, params.b_r) + ops.linear(h, params.U_r))
    candidate = ops.tanh(ops.linear(x, params.W_h, params.b_h) + ops.linear(ops.mul(r, h), params.U_h))
    return (1.0 - z) * h + z * candidate
