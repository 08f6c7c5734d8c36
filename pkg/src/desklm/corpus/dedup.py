"""Exact-duplicate removal keyed on a 64-bit fingerprint of normalized text."""

import hashlib
from dataclasses import dataclass


@dataclass(frozen=True)
class Article:
    """One corpus document.  id is the stable 64-bit fingerprint of its text."""

    id: int
    text: str
    source: str = "unknown"


def fingerprint(text):
    """Stable 64-bit fingerprint over whitespace-normalized text.

    Runs of whitespace are collapsed before hashing, so texts differing only
    in whitespace runs collide by design and dedup treats them as duplicates.
    """
    normalized = " ".join(text.split())
    digest = hashlib.blake2b(normalized.encode("utf-8"), digest_size=8).digest()
    return int.from_bytes(digest, "little")


def make_article(text, source="unknown"):
    return Article(id=fingerprint(text), text=text, source=source)


def dedup(articles):
    """Yield first occurrences only; survivor order preserved.

    Fingerprints are recomputed from each article's text rather than trusted
    from the id field, so whitespace-variant duplicates are dropped even when
    the caller built Articles by hand.
    """
    seen = set()
    for article in articles:
        fp = fingerprint(article.text)
        if fp in seen:
            continue
        seen.add(fp)
        yield article
