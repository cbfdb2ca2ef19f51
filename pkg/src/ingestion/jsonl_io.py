"""
Line-delimited JSON datasets.

Each line is an object with fields:
    query     string
    document  array of sentence strings, or one string split on '.', '!', '?'
    answer    string
"""

import json
from pathlib import Path
from typing import Iterable, Iterator, List

from src.errors import DataError
from src.parsing.document import RawExample
from src.parsing.tokenizer import split_sentences

REQUIRED_FIELDS = ("query", "document", "answer")


def parse_record(record: dict, line: int) -> RawExample:
    if not isinstance(record, dict):
        raise DataError("expected a JSON object", line=line)
    for name in REQUIRED_FIELDS:
        if name not in record:
            raise DataError(f"missing field '{name}'", line=line, field=name)

    document = record["document"]
    if isinstance(document, str):
        document = split_sentences(document)
    elif not (isinstance(document, list) and all(isinstance(s, str) for s in document)):
        raise DataError("field 'document' must be a string or an array of strings", line=line, field="document")

    for name in ("query", "answer"):
        if not isinstance(record[name], str):
            raise DataError(f"field '{name}' must be a string", line=line, field=name)

    try:
        return RawExample(query=record["query"], document=list(document), answer=record["answer"])
    except DataError as e:
        raise DataError(str(e), line=line, field=e.field)


def read_jsonl(path: str) -> Iterator[RawExample]:
    """Stream RawExamples; blank lines are skipped."""
    with open(path, "r", encoding="utf-8") as f:
        for number, text in enumerate(f, 1):
            if not text.strip():
                continue
            try:
                record = json.loads(text)
            except json.JSONDecodeError as e:
                raise DataError(f"malformed JSON ({e.msg})", line=number)
            yield parse_record(record, number)


def load_jsonl(path: str) -> List[RawExample]:
    return list(read_jsonl(path))


def write_jsonl(examples: Iterable[RawExample], path: str) -> str:
    out = Path(path)
    out.parent.mkdir(parents=True, exist_ok=True)
    with open(out, "w", encoding="utf-8") as f:
        for ex in examples:
            f.write(json.dumps(ex.to_dict(), ensure_ascii=False, sort_keys=True) + "\n")
    return str(out)
