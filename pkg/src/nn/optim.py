"""
Backward pass and the clipped Adam update.
"""

import logging
from dataclasses import dataclass
from typing import Dict, Iterable, List

import torch
from torch import Tensor, nn

from src.errors import ShapeError

logger = logging.getLogger(__name__)


def backward(loss: Tensor, params: Iterable[nn.Parameter]) -> Dict[str, Tensor]:
    """
    Populate .grad of every parameter from a scalar loss.

    Parameters the loss does not reach get a zero gradient rather than None.

    Returns:
        map from parameter position ("p0", "p1", ...) to its gradient
    """
    if loss.dim() != 0:
        raise ShapeError(f"backward: loss must be a scalar, got shape {tuple(loss.shape)}")
    params = list(params)
    if loss.requires_grad:
        loss.backward()
    grads = {}
    for i, p in enumerate(params):
        if p.grad is None:
            p.grad = torch.zeros_like(p)
        grads[f"p{i}"] = p.grad
    return grads


def global_norm(tensors: Iterable[Tensor]) -> float:
    norms = [torch.linalg.vector_norm(t) for t in tensors]
    if not norms:
        return 0.0
    return float(torch.linalg.vector_norm(torch.stack(norms)))


def clip_by_global_norm(grads: List[Tensor], clip_norm: float) -> float:
    """
    Rescale grads in place so their joint norm is at most clip_norm.

    Returns:
        the norm before clipping
    """
    norm = global_norm(grads)
    if norm > clip_norm:
        scale = clip_norm / norm
        for g in grads:
            g.mul_(scale)
    return norm


@dataclass
class UpdateResult:
    grad_norm: float
    clipped: bool
    skipped: bool


class ClippedAdam:
    """
    Adam (beta1=0.9, beta2=0.999, eps=1e-8) preceded by global-norm clipping.

    Holds the learning rate, the clip norm and the per-parameter moment
    accumulators. A step whose gradients contain NaN/Inf is skipped and
    reported as such; the parameters and moments are left untouched.
    """

    def __init__(self, params: Iterable[nn.Parameter], lr: float = 1e-3, clip_norm: float = 5.0,
                 betas=(0.9, 0.999), eps: float = 1e-8):
        if lr <= 0 or clip_norm <= 0:
            raise ValueError(f"lr and clip_norm must be positive (got {lr}, {clip_norm})")
        self.params = [p for p in params if p.requires_grad]
        self.lr = lr
        self.clip_norm = clip_norm
        self._adam = torch.optim.Adam(self.params, lr=lr, betas=betas, eps=eps)

    def zero_grad(self) -> None:
        for p in self.params:
            p.grad = None

    def step(self) -> UpdateResult:
        grads = []
        for p in self.params:
            if p.grad is None:
                p.grad = torch.zeros_like(p)
            grads.append(p.grad)

        if not all(bool(torch.isfinite(g).all()) for g in grads):
            logger.warning("Skipping optimizer step: non-finite gradient")
            self.zero_grad()
            return UpdateResult(grad_norm=float("nan"), clipped=False, skipped=True)

        norm = clip_by_global_norm(grads, self.clip_norm)
        self._adam.step()
        return UpdateResult(grad_norm=norm, clipped=norm > self.clip_norm, skipped=False)

    def state_dict(self) -> dict:
        return self._adam.state_dict()
