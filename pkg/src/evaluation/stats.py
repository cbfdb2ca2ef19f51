"""
Dataset statistics: how often the answer string occurs in the document, how
often, and whether the first occurrence is in the first sentence.
"""

from typing import List, Optional, Sequence

import numpy as np
import pandas as pd

from src.parsing.document import PreparedExample, RawExample, contains_subsequence
from src.parsing.tokenizer import tokenize

STATS_COLUMNS = [
    "dataset", "examples", "answer_present_pct", "avg_matches", "first_sentence_pct",
    "avg_query_tokens", "avg_document_tokens", "avg_sentences", "missing_after_crop_pct",
]


def matching_sentences(raw: RawExample) -> List[int]:
    """Indices of the (uncropped) sentences containing the answer tokens."""
    answer = tokenize(raw.answer)
    return [i for i, sentence in enumerate(raw.document) if contains_subsequence(tokenize(sentence), answer)]


def _pct(part: int, whole: int) -> float:
    return 100.0 * part / whole if whole else float("nan")


def dataset_stats(raws: Sequence[RawExample], prepared: Optional[Sequence[PreparedExample]] = None,
                  name: str = "dataset") -> pd.DataFrame:
    """
    One-row table of answer-match statistics.

    Match statistics are measured on the full documents; with `prepared`
    (same order) the share of present answers lost to cropping is added.
    """
    matches = [matching_sentences(raw) for raw in raws]
    present = [m for m in matches if m]
    row = {
        "dataset": name,
        "examples": len(raws),
        "answer_present_pct": _pct(len(present), len(raws)),
        "avg_matches": float(np.mean([len(m) for m in present])) if present else float("nan"),
        "first_sentence_pct": _pct(sum(m[0] == 0 for m in present), len(present)),
        "avg_query_tokens": float(np.mean([len(tokenize(r.query)) for r in raws])) if raws else float("nan"),
        "avg_document_tokens": float(np.mean([sum(len(tokenize(s)) for s in r.document) for r in raws]))
        if raws else float("nan"),
        "avg_sentences": float(np.mean([len(r.document) for r in raws])) if raws else float("nan"),
        "missing_after_crop_pct": float("nan"),
    }
    if prepared is not None:
        if len(prepared) != len(raws):
            raise ValueError(f"{len(prepared)} prepared examples for {len(raws)} raw examples")
        lost = sum(1 for m, ex in zip(matches, prepared) if m and not ex.answer_matches)
        row["missing_after_crop_pct"] = _pct(lost, len(present))
    return pd.DataFrame([row], columns=STATS_COLUMNS)
