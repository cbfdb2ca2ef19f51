"""
Word vocabulary with reserved special and placeholder ids.
"""

import hashlib
import json
from collections import Counter
from pathlib import Path
from typing import Dict, Iterable, List, Optional

from src.errors import VocabularyError
from src.parsing.tokenizer import tokenize

PAD, UNK, BOS, EOS = 0, 1, 2, 3
SPECIAL_TOKENS = ["<pad>", "<unk>", "<bos>", "<eos>"]
NUM_SPECIAL = len(SPECIAL_TOKENS)


def placeholder_token(index: int) -> str:
    return f"PH_{index}"


class Vocabulary:
    """
    Frozen token <-> id mapping.

    Layout: specials (PAD=0, UNK=1, BOS=2, EOS=3), then placeholder ids
    PH_0..PH_{P-1}, then corpus tokens by descending frequency.
    """

    def __init__(self, tokens: List[str], placeholder_count: int):
        self._placeholder_count = placeholder_count
        self._id_to_token = (
            list(SPECIAL_TOKENS)
            + [placeholder_token(i) for i in range(placeholder_count)]
            + list(tokens)
        )
        self._token_to_id = {tok: i for i, tok in enumerate(self._id_to_token)}
        if len(self._token_to_id) != len(self._id_to_token):
            raise VocabularyError("duplicate tokens in vocabulary")

    def __len__(self) -> int:
        return len(self._id_to_token)

    def __contains__(self, token: str) -> bool:
        return token in self._token_to_id and not self.is_reserved(self._token_to_id[token])

    @property
    def placeholder_count(self) -> int:
        return self._placeholder_count

    @property
    def first_placeholder(self) -> int:
        return NUM_SPECIAL

    def placeholder_id(self, index: int) -> int:
        return NUM_SPECIAL + index % self._placeholder_count

    def is_placeholder(self, token_id: int) -> bool:
        return NUM_SPECIAL <= token_id < NUM_SPECIAL + self._placeholder_count

    def is_reserved(self, token_id: int) -> bool:
        return token_id < NUM_SPECIAL + self._placeholder_count

    def token_id(self, token: str) -> Optional[int]:
        """Id of a corpus token, or None when it is out of vocabulary."""
        token_id = self._token_to_id.get(token)
        if token_id is None or self.is_reserved(token_id):
            return None
        return token_id

    def token(self, token_id: int) -> str:
        return self._id_to_token[token_id]

    def corpus_tokens(self) -> List[str]:
        return self._id_to_token[NUM_SPECIAL + self._placeholder_count:]

    def vocab_hash(self) -> str:
        payload = json.dumps({"placeholders": self._placeholder_count, "tokens": self.corpus_tokens()})
        return hashlib.sha256(payload.encode("utf-8")).hexdigest()

    def save(self, path: str) -> str:
        out = Path(path)
        out.parent.mkdir(parents=True, exist_ok=True)
        out.write_text(json.dumps({
            "placeholders": self._placeholder_count,
            "tokens": self.corpus_tokens(),
            "vocab_hash": self.vocab_hash(),
        }, indent=1), encoding="utf-8")
        return str(out)

    @classmethod
    def load(cls, path: str) -> "Vocabulary":
        data = json.loads(Path(path).read_text(encoding="utf-8"))
        return cls(data["tokens"], data["placeholders"])


def count_tokens(corpus: Iterable) -> Counter:
    counts: Counter = Counter()
    for raw in corpus:
        counts.update(tokenize(raw.query))
        for sentence in raw.document:
            counts.update(tokenize(sentence))
        counts.update(tokenize(raw.answer))
    return counts


def build_vocab(corpus: Iterable, max_vocab: int, placeholder_count: int) -> Vocabulary:
    """
    Keep the most frequent tokens (ties broken lexicographically) in the
    room left after the specials and placeholders.

    Args:
        corpus: RawExample stream
        max_vocab: total size cap, including reserved ids
        placeholder_count: number of placeholder ids P
    """
    if placeholder_count < 1:
        raise VocabularyError("placeholder_count must be >= 1")
    if max_vocab <= NUM_SPECIAL + placeholder_count:
        raise VocabularyError(
            f"max_vocab {max_vocab} leaves no room after {NUM_SPECIAL} specials and {placeholder_count} placeholders"
        )
    counts = count_tokens(corpus)
    if not counts:
        raise VocabularyError("cannot build a vocabulary from an empty corpus")

    room = max_vocab - NUM_SPECIAL - placeholder_count
    ranked = sorted(counts.items(), key=lambda item: (-item[1], item[0]))
    return Vocabulary([tok for tok, _ in ranked[:room]], placeholder_count)


def oov_rate(corpus: Iterable, vocab: Vocabulary) -> float:
    """Fraction of token occurrences in the corpus that are out of vocabulary."""
    counts = count_tokens(corpus)
    total = sum(counts.values())
    if total == 0:
        return 0.0
    missing = sum(n for tok, n in counts.items() if tok not in vocab)
    return missing / total
