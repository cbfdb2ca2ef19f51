"""
Parameter initialization: uniform(-scale, scale) for weights, zeros for biases.
"""

import torch
from torch import nn


def is_bias(name: str) -> bool:
    leaf = name.rsplit(".", 1)[-1]
    return leaf.startswith("b_") or leaf == "bias"


def init_parameters(module: nn.Module, scale: float = 0.08, seed: int = 0) -> None:
    """Re-initialize every parameter of `module` from a seeded generator, in name order."""
    generator = torch.Generator().manual_seed(seed)
    with torch.no_grad():
        for name, param in sorted(module.named_parameters(), key=lambda item: item[0]):
            if is_bias(name):
                param.zero_()
            else:
                values = torch.rand(param.shape, generator=generator, dtype=torch.float64)
                param.copy_((values * 2.0 - 1.0) * scale)
