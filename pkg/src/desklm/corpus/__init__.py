"""Corpus pipeline: cleaning, script conversion, deduplication, global sampling."""

from .clean import clean_text, load_emoji_ranges
from .convert import ConversionTable, default_table, t2s_convert
from .dedup import Article, dedup, fingerprint, make_article
from .io import read_corpus, write_corpus
from .sample import Window, chunk_article, default_tokenize, global_sample

__all__ = [
    "Article",
    "ConversionTable",
    "Window",
    "chunk_article",
    "clean_text",
    "dedup",
    "default_table",
    "default_tokenize",
    "fingerprint",
    "global_sample",
    "load_emoji_ranges",
    "make_article",
    "read_corpus",
    "t2s_convert",
    "write_corpus",
]
