"""
Checkpoint archives.

A checkpoint is a single .npz archive: one little-endian float64 array per
parameter name, plus a JSON header (stored under "__header__") carrying the
vocabulary hash, the config hash and free-form metadata.
"""

import io
import json
from pathlib import Path
from typing import Any, Dict, Optional

import numpy as np
import torch
from torch import nn

from src.errors import DataError

HEADER_KEY = "__header__"


def save_checkpoint(path: str, module: nn.Module, vocab_hash: str, config_hash: str,
                    meta: Optional[Dict[str, Any]] = None) -> str:
    arrays = {
        name: param.detach().cpu().numpy().astype("<f8")
        for name, param in module.state_dict().items()
    }
    header = {"vocab_hash": vocab_hash, "config_hash": config_hash, "meta": meta or {}}
    arrays[HEADER_KEY] = np.frombuffer(json.dumps(header, sort_keys=True).encode("utf-8"), dtype=np.uint8)

    out = Path(path)
    out.parent.mkdir(parents=True, exist_ok=True)
    buffer = io.BytesIO()
    np.savez(buffer, **arrays)
    out.write_bytes(buffer.getvalue())
    return str(out)


def read_header(path: str) -> Dict[str, Any]:
    with np.load(path) as archive:
        if HEADER_KEY not in archive.files:
            raise DataError(f"{path}: not a checkpoint (missing header)")
        return json.loads(archive[HEADER_KEY].tobytes().decode("utf-8"))


def load_checkpoint(path: str, module: nn.Module, expected_vocab_hash: Optional[str] = None) -> Dict[str, Any]:
    """
    Copy the archived parameters into `module` (cast to its dtype).

    Returns:
        the JSON header
    """
    header = read_header(path)
    if expected_vocab_hash is not None and header["vocab_hash"] != expected_vocab_hash:
        raise DataError(f"{path}: checkpoint was trained with a different vocabulary")

    state = module.state_dict()
    with np.load(path) as archive:
        names = set(archive.files) - {HEADER_KEY}
        if names != set(state):
            missing = sorted(set(state) - names)
            extra = sorted(names - set(state))
            raise DataError(f"{path}: parameter mismatch (missing {missing}, unexpected {extra})")
        for name, tensor in state.items():
            array = archive[name]
            if tuple(array.shape) != tuple(tensor.shape):
                raise DataError(f"{path}: {name} has shape {array.shape}, model expects {tuple(tensor.shape)}")
            state[name] = torch.from_numpy(array.astype(np.float64)).to(tensor.dtype)
    module.load_state_dict(state)
    return header
