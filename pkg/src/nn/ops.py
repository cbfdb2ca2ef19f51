"""
Checked tensor primitives.

Every model in the package is composed from these functions. They run on
torch autograd (each returned tensor is a node of the reverse-mode graph) and
add what the raw torch calls do not: shape validation with the offending
shapes named, and rejection of NaN/Inf forward values.
"""

from contextlib import contextmanager
from typing import Iterator, Optional, Sequence

import torch
import torch.nn.functional as F
from torch import Tensor

from src.errors import NonFiniteError, ShapeError

_CHECK_FINITE = True

DTYPES = {"float32": torch.float32, "float64": torch.float64}


def resolve_dtype(name: str) -> torch.dtype:
    try:
        return DTYPES[name]
    except KeyError:
        raise ShapeError(f"unsupported dtype {name!r}")


def set_finite_checks(enabled: bool) -> None:
    global _CHECK_FINITE
    _CHECK_FINITE = bool(enabled)


@contextmanager
def finite_checks(enabled: bool) -> Iterator[None]:
    """Temporarily switch the NaN/Inf check (benchmarks time the bare math)."""
    global _CHECK_FINITE
    previous = _CHECK_FINITE
    _CHECK_FINITE = bool(enabled)
    try:
        yield
    finally:
        _CHECK_FINITE = previous


def _finite(out: Tensor, name: str) -> Tensor:
    if _CHECK_FINITE and not bool(torch.isfinite(out).all()):
        raise NonFiniteError(f"{name} produced non-finite values (shape {tuple(out.shape)})")
    return out


def _shape(t: Tensor) -> tuple:
    return tuple(t.shape)


def matmul(a: Tensor, b: Tensor) -> Tensor:
    """a (..., n) @ b (n, m) or b (n,)."""
    if a.dim() < 1 or b.dim() not in (1, 2) or a.shape[-1] != b.shape[0]:
        raise ShapeError(f"matmul: {_shape(a)} @ {_shape(b)}")
    return _finite(a @ b, "matmul")


def linear(x: Tensor, weight: Tensor, bias: Optional[Tensor] = None) -> Tensor:
    """x (..., n) times weight (m, n) transposed, plus bias (m)."""
    if weight.dim() != 2 or x.shape[-1] != weight.shape[1]:
        raise ShapeError(f"linear: input {_shape(x)} vs weight {_shape(weight)}")
    if bias is not None and _shape(bias) != (weight.shape[0],):
        raise ShapeError(f"linear: bias {_shape(bias)} vs weight {_shape(weight)}")
    return _finite(F.linear(x, weight, bias), "linear")


def add(a: Tensor, b: Tensor) -> Tensor:
    """Elementwise sum; b may also be a bias vector matching a's last dim."""
    if _shape(a) != _shape(b) and not (b.dim() == 1 and a.dim() >= 1 and a.shape[-1] == b.shape[0]):
        raise ShapeError(f"add: {_shape(a)} + {_shape(b)}")
    return _finite(a + b, "add")


def mul(a: Tensor, b: Tensor) -> Tensor:
    if _shape(a) != _shape(b) and b.dim() != 0:
        raise ShapeError(f"mul: {_shape(a)} * {_shape(b)}")
    return _finite(a * b, "mul")


def concat(parts: Sequence[Tensor], dim: int = -1) -> Tensor:
    """Row-wise concatenation [a; b; ...] along `dim`; other dims must agree."""
    if not parts:
        raise ShapeError("concat: no inputs")
    ref = list(parts[0].shape)
    axis = dim % len(ref)
    for p in parts[1:]:
        other = list(p.shape)
        if len(other) != len(ref) or other[:axis] + other[axis + 1:] != ref[:axis] + ref[axis + 1:]:
            raise ShapeError(f"concat along {dim}: {[_shape(t) for t in parts]}")
    return torch.cat(list(parts), dim=dim)


def mean_rows(x: Tensor, mask: Optional[Tensor] = None) -> Tensor:
    """Mean over dim 0, optionally over the rows where mask is true only."""
    if x.dim() < 1 or x.shape[0] == 0:
        raise ShapeError(f"mean_rows: empty input {_shape(x)}")
    if mask is None:
        return _finite(x.mean(dim=0), "mean_rows")
    if _shape(mask) != (x.shape[0],):
        raise ShapeError(f"mean_rows: mask {_shape(mask)} vs rows {_shape(x)}")
    count = mask.sum()
    if int(count) == 0:
        raise ShapeError("mean_rows: every row is masked out")
    weights = mask.to(x.dtype).reshape(-1, *([1] * (x.dim() - 1)))
    return _finite((x * weights).sum(dim=0) / count.to(x.dtype), "mean_rows")


def relu(x: Tensor) -> Tensor:
    return _finite(torch.relu(x), "relu")


def tanh(x: Tensor) -> Tensor:
    return _finite(torch.tanh(x), "tanh")


def sigmoid(x: Tensor) -> Tensor:
    return _finite(torch.sigmoid(x), "sigmoid")


def log_softmax(logits: Tensor, dim: int = -1) -> Tensor:
    """z - logsumexp(z), shifted by the max for stability."""
    if logits.dim() == 0 or logits.shape[dim] == 0:
        raise ShapeError(f"log_softmax: empty axis in {_shape(logits)}")
    shift = logits.max(dim=dim, keepdim=True).values.detach()
    shifted = logits - shift
    out = shifted - torch.logsumexp(shifted, dim=dim, keepdim=True)
    return _finite(out, "log_softmax")


def softmax(logits: Tensor, dim: int = -1) -> Tensor:
    return torch.exp(log_softmax(logits, dim=dim))


def log(x: Tensor) -> Tensor:
    return _finite(torch.log(x), "log")


def embedding(table: Tensor, ids: Tensor) -> Tensor:
    """Rows of `table` (V, e) indexed by integer `ids` of any shape."""
    if table.dim() != 2:
        raise ShapeError(f"embedding: table must be 2-D, got {_shape(table)}")
    if ids.numel() and (int(ids.min()) < 0 or int(ids.max()) >= table.shape[0]):
        raise ShapeError(f"embedding: ids outside [0, {table.shape[0]})")
    return F.embedding(ids, table)


def conv1d(seq: Tensor, filters: Tensor, bias: Tensor) -> Tensor:
    """
    Valid 1-D convolution over time.

    Args:
        seq: (T, e) input sequence or a (B, T, e) batch of them, T >= width
        filters: (F, e, width)
        bias: (F,)

    Returns:
        (T - width + 1, F) feature map, batched like `seq`
    """
    if seq.dim() not in (2, 3) or filters.dim() != 3 or seq.shape[-1] != filters.shape[1]:
        raise ShapeError(f"conv1d: seq {_shape(seq)} vs filters {_shape(filters)}")
    if _shape(bias) != (filters.shape[0],):
        raise ShapeError(f"conv1d: bias {_shape(bias)} vs filters {_shape(filters)}")
    if seq.shape[-2] < filters.shape[2]:
        raise ShapeError(f"conv1d: sequence length {seq.shape[-2]} < width {filters.shape[2]}")
    batch = seq if seq.dim() == 3 else seq.unsqueeze(0)
    out = F.conv1d(batch.transpose(1, 2), filters, bias).transpose(1, 2)
    if seq.dim() == 2:
        out = out.squeeze(0)
    return _finite(out, "conv1d")


def max_over_time(x: Tensor) -> Tensor:
    """Per-feature maximum over the time axis of a (T, F) map or a (B, T, F) batch."""
    if x.dim() not in (2, 3) or x.shape[-2] == 0:
        raise ShapeError(f"max_over_time: expected non-empty (T, F), got {_shape(x)}")
    return x.max(dim=-2).values
