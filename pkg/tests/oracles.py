"""Independent brute-force reference implementations.

These deliberately use naive quadratic scans and their own normalization,
hashing, and scoring code so pipeline outputs can be checked against a
second opinion rather than against themselves.
"""

from __future__ import annotations

import hashlib
import math
import re
import unicodedata
from collections import Counter

TERMINALS = ".!?。！？；"

_WORD = re.compile(r"[一-鿿]|[a-z0-9]+")


def simple_normalize(text: str) -> str:
    text = unicodedata.normalize("NFC", text).lower()
    return " ".join(text.split())


def simple_id(kind_value: str, text: str) -> str:
    material = kind_value + "\n" + simple_normalize(text)
    return hashlib.sha256(material.encode("utf-8")).hexdigest()


def simple_split(text: str) -> list[str]:
    pieces = []
    current = ""
    for i, ch in enumerate(text):
        current += ch
        following = text[i + 1] if i + 1 < len(text) else ""
        if ch in TERMINALS and following not in TERMINALS:
            if current.strip():
                pieces.append(current.strip())
            current = ""
    if current.strip():
        pieces.append(current.strip())
    return pieces


def oracle_article_pass(docs):
    """Quadratic duplicate scan; earliest ingest wins.

    Returns (survivors, removals) where removals is a list of
    (doc_id, "ARTICLE", survivor_id) in input order.
    """
    ordered = sorted(docs, key=lambda d: d.ingest_order)
    removed = {}
    for i, doc in enumerate(ordered):
        for prior in ordered[:i]:
            if prior.ingest_order in removed:
                continue
            if simple_normalize(prior.clean_text) == simple_normalize(doc.clean_text):
                removed[doc.ingest_order] = prior.id
                break
    survivors = [d for d in docs if d.ingest_order not in removed]
    removals = [
        (d.id, "ARTICLE", removed[d.ingest_order]) for d in docs if d.ingest_order in removed
    ]
    return survivors, removals


def oracle_sentence_pass(docs, min_len=30):
    """Global first-occurrence sentence dedup by linear list scan.

    Returns (survivor_texts, removals) where survivor_texts maps
    ingest_order -> rejoined text (None for fully emptied documents) and
    removals lists (doc_id, unit, owner_id) in scan order.
    """
    seen: list[tuple[str, str]] = []
    survivor_texts = {}
    removals = []
    for doc in sorted(docs, key=lambda d: d.ingest_order):
        kept = []
        local = []
        for idx, piece in enumerate(simple_split(doc.clean_text)):
            norm = simple_normalize(piece)
            owner = None
            if len(norm) >= min_len:
                for known, owner_id in seen:
                    if known == norm:
                        owner = owner_id
                        break
            if owner is not None:
                local.append((doc.id, idx, owner))
            else:
                kept.append(piece)
                if len(norm) >= min_len:
                    seen.append((norm, doc.id))
        removals.extend(local)
        if kept:
            survivor_texts[doc.ingest_order] = " ".join(kept)
        else:
            survivor_texts[doc.ingest_order] = None
            removals.append((doc.id, "ARTICLE", local[0][2]))
    return survivor_texts, removals


def oracle_tokens(text: str) -> list[str]:
    return _WORD.findall(simple_normalize(text))


def oracle_retrieve(chunks, query: str, k: int) -> list[tuple[str, float]]:
    """Score = sum over unique query terms of (1+ln tf) * ln(1 + N/df)."""
    counts = {chunk.id: Counter(oracle_tokens(chunk.text)) for chunk in chunks}
    n = len(chunks)
    results = []
    for chunk_id, chunk_counts in counts.items():
        score = 0.0
        for term in sorted(set(oracle_tokens(query))):
            tf = chunk_counts.get(term, 0)
            if tf == 0:
                continue
            df = sum(1 for other in counts.values() if term in other)
            score += (1.0 + math.log(tf)) * math.log(1.0 + n / df)
        if score > 0.0:
            results.append((chunk_id, score))
    results.sort(key=lambda pair: (-pair[1], pair[0]))
    return results[:k]
