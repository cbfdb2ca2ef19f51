"""
Synthetic question-answering corpus that stands in for the Wikipedia-derived
datasets at desk scale.

Every document describes an entity. One evidence sentence states the queried
property ("<entity> has <property> <value>"); the rest are filler sentences,
optionally including a distractor that repeats the answer string about a
different entity. With missing evidence the value is paraphrased through a
fixed alias, so the answer is still determined but never appears verbatim.
"""

import json
import logging
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Dict, List, Tuple

import numpy as np

from src.errors import ConfigError
from src.ingestion.jsonl_io import write_jsonl
from src.parsing.document import RawExample

logger = logging.getLogger(__name__)

POSITION_DISTRIBUTIONS = ("first-heavy", "uniform", "tail-heavy")
SPLITS = (("train", 0.7), ("dev", 0.1), ("test", 0.2))

# property -> [(value, alias used when the evidence is paraphrased)]
PROPERTIES: Dict[str, List[Tuple[str, str]]] = {
    "color": [("red", "crimson"), ("blue", "azure"), ("green", "emerald"), ("yellow", "amber"),
              ("black", "ebony"), ("white", "ivory")],
    "cuisine": [("spicy noodles", "fiery ramen"), ("rice", "paddy grain"), ("bread", "sourdough"),
                ("fish", "trout"), ("cheese", "brie"), ("soup", "broth")],
    "sport": [("football", "soccer"), ("tennis", "racquet game"), ("rowing", "sculling"),
              ("chess", "board game"), ("cricket", "test match"), ("hockey", "ice game")],
    "language": [("french", "gallic tongue"), ("spanish", "castilian"), ("german", "teutonic"),
                 ("greek", "hellenic"), ("latin", "roman tongue"), ("dutch", "flemish")],
    "climate": [("tropical", "humid heat"), ("arid", "desert dry"), ("polar", "frozen cold"),
                ("temperate", "mild weather"), ("alpine", "mountain chill"), ("monsoon", "rainy season")],
}

LANDMARKS = ["river", "valley", "harbor", "bridge", "tower", "forest", "lake", "market", "castle", "canyon"]
SEASONS = ["spring", "summer", "autumn", "winter"]
ONSETS = ["b", "d", "k", "l", "m", "n", "p", "r", "s", "t", "v", "z", "th", "gr", "kh"]
VOWELS = ["a", "e", "i", "o", "u", "ai", "ou"]

FILLER_TEMPLATES = [
    "{other} is a town near the {landmark}.",
    "{entity} was founded in {year}.",
    "The {landmark} of {entity} attracts visitors every {season}.",
    "{other} and {entity} signed a treaty in {year}.",
    "Many people in {entity} travel to the {landmark} in {season}.",
]


@dataclass
class GeneratorConfig:
    num_examples: int = 1000
    min_sentences: int = 10
    max_sentences: int = 35
    position: str = "first-heavy"
    distractor_rate: float = 0.0
    missing_evidence_rate: float = 0.0
    natural: bool = False
    seed: int = 0

    def validate(self) -> None:
        if self.num_examples < 1:
            raise ConfigError("num_examples must be >= 1")
        if not 1 <= self.min_sentences <= self.max_sentences:
            raise ConfigError(f"empty sentence range [{self.min_sentences}, {self.max_sentences}]")
        if self.position not in POSITION_DISTRIBUTIONS:
            raise ConfigError(f"position must be one of {list(POSITION_DISTRIBUTIONS)}")
        for name in ("distractor_rate", "missing_evidence_rate"):
            rate = getattr(self, name)
            if not 0.0 <= rate <= 1.0:
                raise ConfigError(f"{name} must be in [0, 1], got {rate}")
        if self.distractor_rate > 0 and self.min_sentences < 2:
            raise ConfigError("distractors need documents of at least 2 sentences")


def position_weights(kind: str, n: int) -> np.ndarray:
    if kind == "uniform":
        weights = np.ones(n)
    elif kind == "first-heavy":
        weights = 0.5 ** np.arange(n)
    else:
        weights = 0.5 ** np.arange(n)[::-1]
    return weights / weights.sum()


def _reserved_words() -> set:
    words = set()
    for prop, pairs in PROPERTIES.items():
        words.add(prop)
        for value, alias in pairs:
            words.update(value.split())
            words.update(alias.split())
    return words


RESERVED = _reserved_words()


def _entity_name(rng: np.random.Generator) -> str:
    while True:
        syllables = int(rng.integers(2, 4))
        name = "".join(ONSETS[rng.integers(len(ONSETS))] + VOWELS[rng.integers(len(VOWELS))]
                       for _ in range(syllables))
        if name not in RESERVED:
            return name.capitalize()


def generate_example(cfg: GeneratorConfig, index: int) -> Tuple[RawExample, int]:
    """
    Build example `index` from its own derived random stream.

    Returns:
        the example and the position of its evidence sentence
    """
    rng = np.random.default_rng([cfg.seed, index])
    entity = _entity_name(rng)
    others = [_entity_name(rng) for _ in range(3)]

    prop_names = sorted(PROPERTIES)
    prop = prop_names[rng.integers(len(prop_names))]
    value, alias = PROPERTIES[prop][rng.integers(len(PROPERTIES[prop]))]

    n = int(rng.integers(cfg.min_sentences, cfg.max_sentences + 1))
    evidence_at = int(rng.choice(n, p=position_weights(cfg.position, n)))

    sentences = []
    for i in range(n):
        if rng.random() < 0.4:
            other_prop = prop_names[rng.integers(len(prop_names))]
            while other_prop == prop:
                other_prop = prop_names[rng.integers(len(prop_names))]
            other_value = PROPERTIES[other_prop][rng.integers(len(PROPERTIES[other_prop]))][0]
            sentences.append(f"{entity} has {other_prop} {other_value}.")
        else:
            template = FILLER_TEMPLATES[rng.integers(len(FILLER_TEMPLATES))]
            sentences.append(template.format(
                entity=entity,
                other=others[rng.integers(len(others))],
                landmark=LANDMARKS[rng.integers(len(LANDMARKS))],
                season=SEASONS[rng.integers(len(SEASONS))],
                year=int(rng.integers(1200, 2000)),
            ))

    stated = alias if rng.random() < cfg.missing_evidence_rate else value
    sentences[evidence_at] = f"{entity} has {prop} {stated}."

    if n > 1 and rng.random() < cfg.distractor_rate:
        slot = int(rng.integers(n - 1))
        slot = slot + 1 if slot >= evidence_at else slot
        sentences[slot] = f"{others[0]} has {prop} {value}."

    if cfg.natural:
        query = f"What is the {prop} of {entity}?"
    else:
        query = f"{prop} of {entity}"
    return RawExample(query=query, document=sentences, answer=value), evidence_at


def gen_synthetic(cfg: GeneratorConfig) -> Dict[str, List[RawExample]]:
    """Generate the corpus and cut it 70/10/20 into train/dev/test."""
    cfg.validate()
    examples = [generate_example(cfg, i)[0] for i in range(cfg.num_examples)]

    splits = {}
    start = 0
    for i, (name, share) in enumerate(SPLITS):
        end = cfg.num_examples if i == len(SPLITS) - 1 else start + int(round(share * cfg.num_examples))
        splits[name] = examples[start:end]
        start = end
    logger.info("Generated %d examples (%s)", cfg.num_examples,
                ", ".join(f"{k}={len(v)}" for k, v in splits.items()))
    return splits


def write_splits(splits: Dict[str, List[RawExample]], output_dir: str, cfg: GeneratorConfig,
                 config_hash: str = "") -> Dict[str, str]:
    """Write <split>.jsonl files plus generator.json describing how they were made."""
    out = Path(output_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = {name: write_jsonl(examples, str(out / f"{name}.jsonl")) for name, examples in splits.items()}
    meta = {"generator": asdict(cfg), "config_hash": config_hash}
    (out / "generator.json").write_text(json.dumps(meta, indent=2, sort_keys=True), encoding="utf-8")
    return paths
