"""Quality filtering and exact deduplication at article and sentence level.

Deduplication is exact-match over normalized text.  Articles with the same
normalized clean text collapse to the earliest-ingested survivor; sentence
dedup runs a single global first-occurrence scan across and within
documents.  Near-duplicate detection is an extension point only
(``near_dup.enabled`` in the pipeline config) and is not implemented.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
import logging
import re
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path

from .corpus import DocStatus, Document, content_id, normalize, split_sentences

log = logging.getLogger(__name__)

ARTICLE = "ARTICLE"

DEFAULT_MIN_SENTENCE_LEN = 30


class MatchMode(Enum):
    SUBSTRING = "substring"
    WHOLE_TOKEN = "whole_token"


@dataclass(frozen=True)
class Lexicon:
    """Sensitive-term list; terms are stored normalized and non-empty."""

    terms: frozenset[str]
    match_mode: MatchMode = MatchMode.SUBSTRING

    def __post_init__(self) -> None:
        if any(not t for t in self.terms):
            raise ValueError("lexicon contains an empty term")

    @classmethod
    def from_terms(cls, terms, match_mode: MatchMode = MatchMode.SUBSTRING) -> "Lexicon":
        cleaned = frozenset(normalize(t) for t in terms if normalize(t))
        return cls(terms=cleaned, match_mode=match_mode)

    @classmethod
    def from_file(cls, path: str | Path, match_mode: MatchMode = MatchMode.SUBSTRING) -> "Lexicon":
        """Load one term per line; ``#`` starts a comment."""
        terms = []
        with open(path, encoding="utf-8") as f:
            for line in f:
                term = line.split("#", 1)[0].strip()
                if term:
                    terms.append(term)
        return cls.from_terms(terms, match_mode)

    def first_match(self, normalized_text: str) -> str | None:
        """Earliest-sorting term that matches, or None."""
        for term in sorted(self.terms):
            if self.match_mode is MatchMode.SUBSTRING:
                if term in normalized_text:
                    return term
            else:
                # Whole-token boundaries only make sense for scripts that
                # delimit words; a CJK neighbour must not block a match.
                if re.search(rf"(?<![0-9a-z_]){re.escape(term)}(?![0-9a-z_])", normalized_text):
                    return term
        return None


@dataclass
class RemovalEntry:
    doc_id: str
    unit: int | str  # sentence index, or ARTICLE for whole-document removals
    duplicate_of: str

    def to_json(self) -> dict:
        return {"doc_id": self.doc_id, "unit": self.unit, "duplicate_of": self.duplicate_of}


@dataclass
class DedupReport:
    articles_in: int = 0
    articles_removed: int = 0
    sentences_removed: int = 0
    removal_log: list[RemovalEntry] = field(default_factory=list)

    def to_json(self) -> dict:
        return {
            "articles_in": self.articles_in,
            "articles_removed": self.articles_removed,
            "sentences_removed": self.sentences_removed,
            "removal_log": [e.to_json() for e in self.removal_log],
        }

    def write(self, path: str | Path) -> None:
        Path(path).write_text(
            json.dumps(self.to_json(), ensure_ascii=False, indent=2) + "\n", encoding="utf-8"
        )


def filter_sensitive(doc: Document, lexicon: Lexicon) -> Document:
    """Reject a document whose normalized text matches a lexicon term.

    Only the status changes; clean_text is never mutated.  An empty lexicon
    passes everything.
    """
    if doc.status is not DocStatus.EXTRACTED:
        raise ValueError(f"filter_sensitive requires an extracted document, got {doc.status.value}")
    term = lexicon.first_match(normalize(doc.clean_text or ""))
    if term is not None:
        return dataclasses.replace(
            doc, status=DocStatus.REJECTED, reject_reason=f"sensitive:{term}"
        )
    return dataclasses.replace(doc, status=DocStatus.FILTERED)


_DEDUPABLE = (DocStatus.FILTERED, DocStatus.DEDUPED)


def _check_dedupable(docs: list[Document], op: str) -> None:
    for doc in docs:
        if doc.status not in _DEDUPABLE:
            raise ValueError(f"{op} requires filtered or deduped documents, got {doc.status.value}")


def dedup_articles(docs: list[Document]) -> tuple[list[Document], DedupReport]:
    """Drop documents whose normalized text duplicates an earlier one.

    The earliest ingest_order copy survives; survivors keep their original
    relative order.
    """
    _check_dedupable(docs, "dedup_articles")
    report = DedupReport(articles_in=len(docs))
    first_seen: dict[str, Document] = {}
    removed: dict[int, str] = {}
    for doc in sorted(docs, key=lambda d: d.ingest_order):
        key = hashlib.sha256(normalize(doc.clean_text or "").encode("utf-8")).hexdigest()
        if key in first_seen:
            removed[doc.ingest_order] = first_seen[key].id
        else:
            first_seen[key] = doc
    survivors = []
    for doc in docs:
        if doc.ingest_order in removed:
            report.articles_removed += 1
            report.removal_log.append(RemovalEntry(doc.id, ARTICLE, removed[doc.ingest_order]))
        else:
            survivors.append(doc)
    return survivors, report


def dedup_sentences(
    docs: list[Document], min_len: int = DEFAULT_MIN_SENTENCE_LEN
) -> tuple[list[Document], DedupReport]:
    """Remove repeated sentences across and within documents.

    Scans documents in ingest order and sentences in index order; a sentence
    whose normalized form (length >= min_len) was seen before is deleted,
    first occurrence wins.  Shorter sentences are never removed.  Documents
    are re-joined from surviving sentences and marked deduped; a document
    left with no sentences is dropped entirely and logged as an ARTICLE
    removal.  The removal log references documents by their ids on entry to
    the pass (content ids of survivors are recomputed on the way out).
    """
    _check_dedupable(docs, "dedup_sentences")
    report = DedupReport(articles_in=len(docs))
    seen: dict[str, str] = {}  # normalized sentence -> owning doc id
    rebuilt: dict[int, Document | None] = {}
    for doc in sorted(docs, key=lambda d: d.ingest_order):
        sentences = split_sentences(doc)
        surviving = []
        local_removals = []
        for sent in sentences:
            key = sent.normalized
            if len(key) >= min_len and key in seen:
                local_removals.append(RemovalEntry(doc.id, sent.index, seen[key]))
            else:
                surviving.append(sent)
                if len(key) >= min_len:
                    seen[key] = doc.id
        report.sentences_removed += len(local_removals)
        report.removal_log.extend(local_removals)
        if not surviving:
            report.articles_removed += 1
            report.removal_log.append(
                RemovalEntry(doc.id, ARTICLE, local_removals[0].duplicate_of)
            )
            rebuilt[doc.ingest_order] = None
            continue
        clean = " ".join(s.text for s in surviving)
        rebuilt[doc.ingest_order] = dataclasses.replace(
            doc,
            id=content_id(doc.source_kind, clean),
            clean_text=clean,
            status=DocStatus.DEDUPED,
        )
    survivors = []
    for doc in docs:
        new_doc = rebuilt[doc.ingest_order]
        if new_doc is not None:
            survivors.append(new_doc)
    return survivors, report
