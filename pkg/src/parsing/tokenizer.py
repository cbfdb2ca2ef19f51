"""
Tokenization and sentence splitting.
"""

import re
import string
from typing import List

PUNCTUATION = set(string.punctuation)

# A sentence ends after '.', '!' or '?' followed by whitespace; abbreviations
# are not special-cased.
SENTENCE_BOUNDARY = re.compile(r"(?<=[.!?])\s+")


def tokenize(text: str) -> List[str]:
    """
    Lowercase, split on whitespace, and peel leading/trailing ASCII punctuation
    into separate one-character tokens.

    "Joplin, Missouri" -> ["joplin", ",", "missouri"]
    """
    tokens = []
    for word in text.lower().split():
        head = []
        while word and word[0] in PUNCTUATION:
            head.append(word[0])
            word = word[1:]
        tail = []
        while word and word[-1] in PUNCTUATION:
            tail.append(word[-1])
            word = word[:-1]
        tokens.extend(head)
        if word:
            tokens.append(word)
        tokens.extend(reversed(tail))
    return tokens


def split_sentences(text: str) -> List[str]:
    """Split a single-string document into sentences ("A. B." -> ["A.", "B."])."""
    return [s.strip() for s in SENTENCE_BOUNDARY.split(text.strip()) if s.strip()]


def normalize_answer(text: str) -> str:
    """Lowercased, single-spaced token form used for exact-match scoring."""
    return " ".join(tokenize(text))
