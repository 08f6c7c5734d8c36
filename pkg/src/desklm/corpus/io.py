"""Corpus file I/O: one JSON object per line, UTF-8.

Fields: "text" required; "source" optional (defaults to "unknown"); "id"
optional on read and always recomputed from the text, preserving the
invariant id == fingerprint(normalized text).
"""

import json

from ..errors import InputError
from .dedup import Article, fingerprint


def read_corpus(path):
    articles = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                record = json.loads(line)
            except json.JSONDecodeError as e:
                raise InputError(f"{path}: line {lineno}: invalid JSON: {e}") from e
            if not isinstance(record, dict) or "text" not in record:
                raise InputError(f"{path}: line {lineno}: missing required field 'text'")
            articles.append(
                Article(
                    id=fingerprint(record["text"]),
                    text=record["text"],
                    source=record.get("source", "unknown"),
                )
            )
    return articles


def write_corpus(path, articles):
    with open(path, "w", encoding="utf-8") as fh:
        for article in articles:
            record = {"id": article.id, "text": article.text, "source": article.source}
            fh.write(json.dumps(record, ensure_ascii=False) + "\n")
