"""
Examples and their preparation: truncation to a sentence grid, placeholder
substitution for out-of-vocabulary words, and distant gold-sentence labels.
"""

from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence

import numpy as np

from src.errors import DataError
from src.parsing.tokenizer import tokenize
from src.parsing.vocab import EOS, PAD, UNK, Vocabulary

ONEHOT_DIM = 35
TITLE_TOKENS = 5


@dataclass
class RawExample:
    """A (query, document, answer) triple as read from disk."""
    query: str
    document: List[str]
    answer: str

    def __post_init__(self):
        if not self.query or not self.query.strip():
            raise DataError("query must be non-empty", field="query")
        if not self.answer or not self.answer.strip():
            raise DataError("answer must be non-empty", field="answer")
        if not self.document:
            raise DataError("document must contain at least one sentence", field="document")

    def to_dict(self) -> dict:
        return {"query": self.query, "document": list(self.document), "answer": self.answer}


@dataclass(frozen=True)
class Limits:
    sentences: int = 35
    tokens: int = 35
    title_append: bool = False

    def __post_init__(self):
        if not 1 <= self.sentences <= ONEHOT_DIM:
            raise DataError(f"limits.sentences must be in [1, {ONEHOT_DIM}], got {self.sentences}")
        if self.tokens < 1:
            raise DataError(f"limits.tokens must be >= 1, got {self.tokens}")

    @classmethod
    def from_config(cls, config) -> "Limits":
        return cls(
            sentences=config["limits.sentences"],
            tokens=config["limits.tokens"],
            title_append=config["data.title_append"],
        )


@dataclass
class PreparedExample:
    """
    Id-level view of one example.

    `sentences` is an L x M grid (pads only at row tails); `answer_ids` ends
    with EOS; `placeholder_map` maps placeholder ids back to surface strings.
    """
    query_ids: List[int]
    sentences: List[List[int]]
    sentence_lengths: List[int]
    answer_ids: List[int]
    placeholder_map: Dict[int, str] = field(default_factory=dict)
    gold_sentence: Optional[int] = None
    answer_matches: List[int] = field(default_factory=list)
    answer: str = ""

    @property
    def num_sentences(self) -> int:
        return len(self.sentences)

    @property
    def row_length(self) -> int:
        return len(self.sentences[0])

    @property
    def has_answer_match(self) -> bool:
        return bool(self.answer_matches)

    def row_tokens(self, index: int) -> List[int]:
        """Non-pad ids of sentence `index`."""
        return self.sentences[index][:self.sentence_lengths[index]]

    def sentence_index_onehots(self, dim: int = ONEHOT_DIM) -> np.ndarray:
        return np.eye(dim)[: self.num_sentences]


@dataclass
class FlatExample:
    """Input of the flat Base model: the first `token_budget` document tokens."""
    query_ids: List[int]
    document_ids: List[int]
    answer_ids: List[int]
    placeholder_map: Dict[int, str] = field(default_factory=dict)
    answer: str = ""


class _Placeholders:
    """Assigns placeholder ids to OOV surfaces in order of first occurrence."""

    def __init__(self, vocab: Vocabulary):
        self.vocab = vocab
        self.by_surface: Dict[str, int] = {}
        self.by_id: Dict[int, str] = {}

    def assign(self, token: str) -> int:
        token_id = self.vocab.token_id(token)
        if token_id is not None:
            return token_id
        if token not in self.by_surface:
            # wraps around once more than P distinct OOVs are seen
            ph = self.vocab.placeholder_id(len(self.by_surface))
            self.by_surface[token] = ph
            self.by_id.setdefault(ph, token)
        return self.by_surface[token]

    def lookup(self, token: str) -> int:
        token_id = self.vocab.token_id(token)
        if token_id is not None:
            return token_id
        return self.by_surface.get(token, UNK)


def _tokenized_sentences(raw: RawExample) -> List[List[str]]:
    sentences = [tokenize(s) for s in raw.document]
    sentences = [s for s in sentences if s]
    if not sentences:
        raise DataError("document has no non-empty sentences", field="document")
    return sentences


def _answer_tokens(raw: RawExample) -> List[str]:
    tokens = tokenize(raw.answer)
    if not tokens:
        raise DataError("answer has no tokens", field="answer")
    return tokens


def prepare_example(raw: RawExample, vocab: Vocabulary, limits: Limits = Limits()) -> PreparedExample:
    """
    Tokenize, crop to the first `limits.sentences` sentences of at most
    `limits.tokens` tokens, substitute placeholders and label the gold sentence.

    With title_append the document's first five tokens close every row; they
    count toward the row length and the sentence itself is cut to make room.
    """
    sentences = _tokenized_sentences(raw)
    title = [tok for sentence in sentences for tok in sentence][:TITLE_TOKENS] if limits.title_append else []

    rows_tokens = []
    for sentence in sentences[: limits.sentences]:
        room = max(limits.tokens - len(title), 1)
        rows_tokens.append((sentence[:room] + title)[: limits.tokens])

    placeholders = _Placeholders(vocab)
    rows = []
    lengths = []
    for tokens in rows_tokens:
        ids = [placeholders.assign(tok) for tok in tokens]
        lengths.append(len(ids))
        rows.append(ids + [PAD] * (limits.tokens - len(ids)))

    query_ids = [placeholders.lookup(tok) for tok in tokenize(raw.query)]
    if not query_ids:
        raise DataError("query has no tokens", field="query")
    answer_ids = [placeholders.lookup(tok) for tok in _answer_tokens(raw)] + [EOS]

    example = PreparedExample(
        query_ids=query_ids,
        sentences=rows,
        sentence_lengths=lengths,
        answer_ids=answer_ids,
        placeholder_map=dict(placeholders.by_id),
        answer=raw.answer,
    )
    example.answer_matches = answer_matching_sentences(example)
    example.gold_sentence = label_gold_sentence(example, answer_ids[:-1])
    return example


def prepare_flat_example(raw: RawExample, vocab: Vocabulary, token_budget: int = 300) -> FlatExample:
    """Flatten the document and keep its first `token_budget` tokens."""
    tokens = [tok for sentence in _tokenized_sentences(raw) for tok in sentence][:token_budget]
    placeholders = _Placeholders(vocab)
    document_ids = [placeholders.assign(tok) for tok in tokens]
    query_ids = [placeholders.lookup(tok) for tok in tokenize(raw.query)]
    if not query_ids:
        raise DataError("query has no tokens", field="query")
    answer_ids = [placeholders.lookup(tok) for tok in _answer_tokens(raw)] + [EOS]
    return FlatExample(
        query_ids=query_ids,
        document_ids=document_ids,
        answer_ids=answer_ids,
        placeholder_map=dict(placeholders.by_id),
        answer=raw.answer,
    )


def contains_subsequence(haystack: Sequence[int], needle: Sequence[int]) -> bool:
    n = len(needle)
    if n == 0 or n > len(haystack):
        return False
    return any(list(haystack[i:i + n]) == list(needle) for i in range(len(haystack) - n + 1))


def answer_matching_sentences(ex: PreparedExample, answer_ids: Optional[Sequence[int]] = None) -> List[int]:
    """Indices of every row whose non-pad ids contain the answer contiguously."""
    if answer_ids is None:
        answer_ids = ex.answer_ids[:-1] if ex.answer_ids and ex.answer_ids[-1] == EOS else ex.answer_ids
    return [l for l in range(ex.num_sentences) if contains_subsequence(ex.row_tokens(l), answer_ids)]


def label_gold_sentence(ex: PreparedExample, answer_ids: Sequence[int]) -> int:
    """First row containing the answer id-subsequence, or 0 when none does."""
    for l in range(ex.num_sentences):
        if contains_subsequence(ex.row_tokens(l), answer_ids):
            return l
    return 0
