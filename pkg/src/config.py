"""
Run configuration: typed defaults merged with a config file, the environment
(prefix C2F_, optionally loaded from a .env file) and command-line flags.
"""

import hashlib
import json
import os
from pathlib import Path
from typing import Any, Dict, Mapping, Optional, Set

from dotenv import load_dotenv

from src.errors import ConfigError

ENV_PREFIX = "C2F_"

DEFAULTS: Dict[str, Any] = {
    # text pipeline
    "limits.sentences": 35,
    "limits.tokens": 35,
    "vocab.size": 20000,
    "vocab.placeholders": 100,
    "data.title_append": False,
    # sentence selection
    "selector.kind": "bow",
    "selector.chunk_size": 7,
    "selector.fixed_j": False,
    "selector.filters": 64,
    "selector.width": 5,
    # summary
    "summary.mode": "hard",
    "summary.k": 1,
    # answer generation
    "encoder.process_pads": True,
    "model.hidden": 128,
    "model.embed": 64,
    "model.max_answer_len": 10,
    "model.init_scale": 0.08,
    # training
    "train.method": "reinforce",
    "train.decay": 0.8,
    "train.epochs": 10,
    "train.batch_size": 16,
    "train.lr": 1e-3,
    "train.clip": 5.0,
    "train.seed": 0,
    "reinforce.baseline": "none",
    # baselines / tensors / logging
    "base.tokens": 300,
    "tensor.dtype": "float64",
    "tensor.check_finite": True,
    "log.level": "INFO",
}

CHOICES: Dict[str, tuple] = {
    "selector.kind": ("bow", "chunk", "cnn"),
    "summary.mode": ("hard", "soft"),
    "train.method": ("pipeline", "reinforce", "soft", "base"),
    "reinforce.baseline": ("none", "mean"),
    "tensor.dtype": ("float32", "float64"),
    "log.level": ("DEBUG", "INFO", "WARNING", "ERROR"),
}

# inclusive (low, high); None leaves a side open
RANGES: Dict[str, tuple] = {
    "limits.sentences": (1, 35),
    "limits.tokens": (1, None),
    "vocab.size": (1, None),
    "vocab.placeholders": (1, None),
    "selector.chunk_size": (1, None),
    "selector.filters": (1, None),
    "selector.width": (1, None),
    "summary.k": (1, None),
    "model.hidden": (1, None),
    "model.embed": (1, None),
    "model.max_answer_len": (1, None),
    "train.decay": (0.3, 1.0),
    "train.epochs": (0, None),
    "train.batch_size": (1, None),
    "base.tokens": (1, None),
}

# strictly positive
POSITIVE = ("model.init_scale", "train.lr", "train.clip")


def _env_name(key: str) -> str:
    return ENV_PREFIX + key.replace(".", "_").upper()


def _coerce(key: str, value: Any) -> Any:
    """Cast a raw value (often a string) to the type of the key's default."""
    default = DEFAULTS[key]
    try:
        if isinstance(default, bool):
            if isinstance(value, bool):
                result = value
            elif str(value).strip().lower() in ("1", "true", "yes", "on"):
                result = True
            elif str(value).strip().lower() in ("0", "false", "no", "off"):
                result = False
            else:
                raise ValueError(value)
        elif isinstance(default, int):
            if isinstance(value, float) and not value.is_integer():
                raise ValueError(value)
            result = int(value)
        elif isinstance(default, float):
            result = float(value)
        else:
            result = str(value)
    except (TypeError, ValueError):
        raise ConfigError(f"{key}: cannot interpret {value!r} as {type(default).__name__}")

    if key in CHOICES and result not in CHOICES[key]:
        raise ConfigError(f"{key}: {result!r} not in {list(CHOICES[key])}")
    if key in RANGES:
        low, high = RANGES[key]
        if result < low or (high is not None and result > high):
            raise ConfigError(f"{key}: {result} outside [{low}, {'inf' if high is None else high}]")
    if key in POSITIVE and not result > 0:
        raise ConfigError(f"{key}: must be positive, got {result}")
    return result


def _flatten(data: Mapping[str, Any], prefix: str = "") -> Dict[str, Any]:
    flat = {}
    for name, value in data.items():
        key = f"{prefix}{name}"
        if isinstance(value, Mapping):
            flat.update(_flatten(value, key + "."))
        else:
            flat[key] = value
    return flat


def read_config_file(path: str) -> Dict[str, Any]:
    """
    Read a config file.

    JSON files may be nested ({"selector": {"kind": "cnn"}}) or flat
    ({"selector.kind": "cnn"}); anything else is parsed as key=value lines
    with '#' comments.
    """
    text = Path(path).read_text(encoding="utf-8")
    if text.lstrip().startswith("{"):
        try:
            return _flatten(json.loads(text))
        except json.JSONDecodeError as e:
            raise ConfigError(f"{path}: invalid JSON ({e})")

    values = {}
    for number, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{number}: expected key=value")
        key, value = line.split("=", 1)
        values[key.strip()] = value.strip()
    return values


class RunConfig:
    """Merged, validated view of every module's configuration keys."""

    def __init__(self, values: Optional[Mapping[str, Any]] = None):
        self._values = dict(DEFAULTS)
        # keys set by a file, the environment or flags rather than left at their default
        self.explicit: Set[str] = set()
        if values:
            self.update(values)

    @classmethod
    def load(cls,
             config_file: Optional[str] = None,
             env: Optional[Mapping[str, str]] = None,
             overrides: Optional[Mapping[str, Any]] = None,
             dotenv: bool = True) -> "RunConfig":
        """
        Build a config with precedence defaults < file < environment < overrides.

        Args:
            config_file: optional JSON or key=value file
            env: environment mapping (defaults to os.environ)
            overrides: values from command-line flags
            dotenv: load a .env file into os.environ first
        """
        if dotenv and env is None:
            load_dotenv()
        config = cls()
        if config_file:
            config.update(read_config_file(config_file))
        config.update(cls._from_env(os.environ if env is None else env))
        if overrides:
            config.update({k: v for k, v in overrides.items() if v is not None})
        return config

    @staticmethod
    def _from_env(env: Mapping[str, str]) -> Dict[str, str]:
        known = {_env_name(key): key for key in DEFAULTS}
        values = {}
        for name, value in env.items():
            if not name.startswith(ENV_PREFIX):
                continue
            if name not in known:
                raise ConfigError(f"unknown environment key {name}")
            values[known[name]] = value
        return values

    def update(self, values: Mapping[str, Any]) -> None:
        for key, value in values.items():
            if key not in DEFAULTS:
                raise ConfigError(f"unknown config key {key!r}")
            self._values[key] = _coerce(key, value)
            self.explicit.add(key)

    def replace(self, **changes: Any) -> "RunConfig":
        """Copy with changes; keyword names use '__' for '.' (selector__kind)."""
        other = RunConfig()
        other._values = dict(self._values)
        other.explicit = set(self.explicit)
        other.update({k.replace("__", "."): v for k, v in changes.items()})
        return other

    def overlay(self, other: "RunConfig") -> "RunConfig":
        """Copy with the keys that `other` sets explicitly applied on top (a saved run plus flags)."""
        merged = self.replace()
        merged.update({key: other[key] for key in sorted(other.explicit)})
        return merged

    def __getitem__(self, key: str) -> Any:
        if key not in self._values:
            raise ConfigError(f"unknown config key {key!r}")
        return self._values[key]

    def as_dict(self) -> Dict[str, Any]:
        return dict(self._values)

    def to_json(self) -> str:
        return json.dumps(self._values, sort_keys=True, separators=(",", ":"))

    def config_hash(self) -> str:
        return hashlib.sha256(self.to_json().encode("utf-8")).hexdigest()

    def save(self, path: str) -> str:
        out = Path(path)
        out.parent.mkdir(parents=True, exist_ok=True)
        payload = {"config_hash": self.config_hash(), "values": self._values}
        out.write_text(json.dumps(payload, indent=2, sort_keys=True), encoding="utf-8")
        return str(out)

    @classmethod
    def from_file(cls, path: str) -> "RunConfig":
        """Load a config written by save()."""
        payload = json.loads(Path(path).read_text(encoding="utf-8"))
        return cls(payload.get("values", payload))

    def __repr__(self) -> str:
        return f"RunConfig({self.config_hash()[:12]})"
