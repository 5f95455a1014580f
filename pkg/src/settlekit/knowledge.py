"""Domain knowledge graph and lexical retrieval over standards texts.

The graph stores (subject, predicate, object) triples with optional
functional predicates (at most one object per subject).  Claim checking is
open-world: a claim is Supported when stored, Contradicted only when a
functional predicate already binds the subject to a different object, and
Unknown otherwise.

Retrieval ranks sentence-aligned chunks by a log-scaled tf-idf score::

    score(c, q) = sum over unique query tokens t of  w(t, c) * idf(t)
    w(t, c)     = 1 + ln(count(t, c))   when count > 0, else 0
    idf(t)      = ln(1 + N / df(t))     df = chunks containing t, N = chunks

Tokens are single CJK characters or maximal [a-z0-9]+ runs of the
normalized text.  Ties break by ascending chunk id; zero-score chunks are
never returned.
"""

from __future__ import annotations

import dataclasses
import json
import logging
import math
import re
from collections import Counter
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import TYPE_CHECKING, Callable, Iterable

from .corpus import Document, normalize, split_sentences

if TYPE_CHECKING:
    from .synth import QaRecord

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class Triple:
    subject: str
    predicate: str
    object: str

    def __post_init__(self) -> None:
        for name in ("subject", "predicate", "object"):
            value = normalize(getattr(self, name))
            if not value:
                raise ValueError(f"triple {name} empty after normalization")
            object.__setattr__(self, name, value)

    def to_json(self) -> dict:
        return {"subject": self.subject, "predicate": self.predicate, "object": self.object}

    @classmethod
    def from_json(cls, row: dict) -> "Triple":
        return cls(row["subject"], row["predicate"], row["object"])


class VerdictStatus(Enum):
    SUPPORTED = "supported"
    CONTRADICTED = "contradicted"
    UNKNOWN = "unknown"


@dataclass(frozen=True)
class Verdict:
    claim: Triple
    status: VerdictStatus
    witness: Triple | None = None

    def to_json(self) -> dict:
        return {
            "claim": self.claim.to_json(),
            "status": self.status.value,
            "witness": self.witness.to_json() if self.witness else None,
        }

    @classmethod
    def from_json(cls, row: dict) -> "Verdict":
        return cls(
            claim=Triple.from_json(row["claim"]),
            status=VerdictStatus(row["status"]),
            witness=Triple.from_json(row["witness"]) if row.get("witness") else None,
        )


class FunctionalConstraintError(ValueError):
    """Insertion would give a functional (subject, predicate) a second object."""

    def __init__(self, triple: Triple, existing: Triple) -> None:
        self.triple = triple
        self.existing = existing
        super().__init__(
            f"functional predicate '{triple.predicate}' already maps "
            f"'{existing.subject}' to '{existing.object}'; cannot add '{triple.object}'"
        )


class KnowledgeGraph:
    """Triple set with functional-predicate constraints; frozen after build."""

    def __init__(self, functional_predicates: Iterable[str] = ()) -> None:
        self.triples: set[Triple] = set()
        self.functional_predicates: set[str] = {normalize(p) for p in functional_predicates}
        self._by_sp: dict[tuple[str, str], set[str]] = {}

    def __len__(self) -> int:
        return len(self.triples)

    def __contains__(self, triple: Triple) -> bool:
        return triple in self.triples

    def add(self, triple: Triple) -> "KnowledgeGraph":
        """Insert a triple; re-adding is a no-op (set semantics)."""
        key = (triple.subject, triple.predicate)
        if triple.predicate in self.functional_predicates:
            existing_objects = self._by_sp.get(key, set())
            if existing_objects and triple.object not in existing_objects:
                existing = Triple(triple.subject, triple.predicate, next(iter(existing_objects)))
                raise FunctionalConstraintError(triple, existing)
        self.triples.add(triple)
        self._by_sp.setdefault(key, set()).add(triple.object)
        return self

    def objects_for(self, subject: str, predicate: str) -> set[str]:
        return set(self._by_sp.get((normalize(subject), normalize(predicate)), set()))

    def validate_claim(self, claim: Triple) -> Verdict:
        """Pure, total check of one claim against the graph."""
        if claim in self.triples:
            return Verdict(claim, VerdictStatus.SUPPORTED)
        if claim.predicate in self.functional_predicates:
            existing_objects = self._by_sp.get((claim.subject, claim.predicate), set())
            if existing_objects:
                witness = Triple(claim.subject, claim.predicate, sorted(existing_objects)[0])
                return Verdict(claim, VerdictStatus.CONTRADICTED, witness)
        return Verdict(claim, VerdictStatus.UNKNOWN)

    @classmethod
    def from_file(cls, path: str | Path) -> "KnowledgeGraph":
        """Load tab-separated subject/predicate/object lines.

        ``#`` starts a comment; ``!functional <predicate>`` declares a
        functional predicate and must appear before triples that use it.
        """
        kg = cls()
        with open(path, encoding="utf-8") as f:
            for lineno, line in enumerate(f, 1):
                line = line.split("#", 1)[0].strip()
                if not line:
                    continue
                if line.startswith("!functional"):
                    fields = line.split(None, 1)
                    if len(fields) < 2 or not fields[1].strip():
                        raise ValueError(f"{path}:{lineno}: '!functional' without a predicate")
                    kg.functional_predicates.add(normalize(fields[1]))
                    continue
                parts = line.split("\t")
                if len(parts) != 3:
                    raise ValueError(f"{path}:{lineno}: expected 3 tab-separated fields")
                kg.add(Triple(*parts))
        return kg

    def save(self, path: str | Path) -> None:
        lines = [f"!functional {p}" for p in sorted(self.functional_predicates)]
        lines += [
            f"{t.subject}\t{t.predicate}\t{t.object}"
            for t in sorted(self.triples, key=lambda t: (t.subject, t.predicate, t.object))
        ]
        Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def add_triple(kg: KnowledgeGraph, triple: Triple) -> KnowledgeGraph:
    return kg.add(triple)


def validate_claim(kg: KnowledgeGraph, claim: Triple) -> Verdict:
    return kg.validate_claim(claim)


# --- claim extraction -------------------------------------------------------

_CLAUSE_SPLIT = re.compile(r"[.?!;:,。？！；：，]")
_IS_A = re.compile(r"^(.{1,80}?)\s+is\s+an?\s+(.{1,80})$")
_SHUYU = re.compile(r"^(.{1,80}?)属于(.{1,80})$")


def extract_claims(text: str) -> list[Triple]:
    """Rule-based default extractor over "X is a Y" / "X属于Y" phrasings.

    Both map to the ``is_a`` predicate.  Deliberately conservative; richer
    extraction plugs in via the extractor hook of ``validate_record``.
    """
    claims = []
    for clause in _CLAUSE_SPLIT.split(normalize(text)):
        clause = clause.strip()
        if not clause:
            continue
        m = _IS_A.match(clause) or _SHUYU.match(clause)
        if not m:
            continue
        subject, obj = m.group(1).strip(), m.group(2).strip()
        if subject and obj:
            claims.append(Triple(subject, "is_a", obj))
    return claims


def validate_record(
    kg: KnowledgeGraph,
    record: "QaRecord",
    extractor: Callable[[str], list[Triple]] = extract_claims,
) -> "QaRecord":
    """Fill a record's verdicts with one entry per claim found in its answers."""
    verdicts = []
    for turn in record.turns:
        for claim in extractor(turn.answer):
            verdicts.append(kg.validate_claim(claim))
    return dataclasses.replace(record, kg_verdicts=verdicts)


# --- knowledge-base chunking and retrieval ----------------------------------

_TOKEN_RE = re.compile(r"[一-鿿]|[a-z0-9]+")


def tokenize(text: str) -> list[str]:
    """Single CJK characters plus maximal latin/digit runs, normalized."""
    return _TOKEN_RE.findall(normalize(text))


@dataclass(frozen=True)
class KbChunk:
    id: str
    source_doc: str
    text: str
    term_counts: dict[str, int] = field(hash=False)

    def to_json(self) -> dict:
        return {
            "id": self.id,
            "source_doc": self.source_doc,
            "text": self.text,
            "term_counts": self.term_counts,
        }

    @classmethod
    def from_json(cls, row: dict) -> "KbChunk":
        return cls(row["id"], row["source_doc"], row["text"], dict(row["term_counts"]))


DEFAULT_CHUNK_LEN = 400


def build_kb_index(docs: list[Document], chunk_len: int = DEFAULT_CHUNK_LEN) -> list[KbChunk]:
    """Greedy sentence packing into chunks of <= chunk_len normalized chars.

    Sentences are never split: one longer than chunk_len becomes its own
    over-length chunk.  Chunk ids sort in document order, so concatenating
    a document's chunks in id order reproduces its clean text up to
    whitespace.
    """
    chunks: list[KbChunk] = []
    for doc in docs:
        sentences = split_sentences(doc)
        groups: list[list[str]] = []
        current: list[str] = []
        current_len = 0
        for sent in sentences:
            length = len(sent.normalized)
            joined = current_len + (1 if current else 0) + length
            if current and joined > chunk_len:
                groups.append(current)
                current, current_len = [], 0
                joined = length
            current.append(sent.text)
            current_len = joined
        if current:
            groups.append(current)
        for i, group in enumerate(groups):
            text = " ".join(group)
            chunks.append(
                KbChunk(
                    id=f"{doc.id}#{i:04d}",
                    source_doc=doc.id,
                    text=text,
                    term_counts=dict(Counter(tokenize(text))),
                )
            )
    return chunks


def retrieve(index: list[KbChunk], query: str, k: int = 5) -> list[tuple[str, float]]:
    """Top-k chunks for a query under the documented tf-idf score."""
    if k < 1:
        raise ValueError("k must be >= 1")
    if not query.strip():
        raise ValueError("empty query")
    terms = set(tokenize(query))
    n_chunks = len(index)
    df = {t: sum(1 for c in index if t in c.term_counts) for t in terms}
    scored = []
    for chunk in index:
        score = 0.0
        for t in terms:
            count = chunk.term_counts.get(t, 0)
            if count and df[t]:
                score += (1.0 + math.log(count)) * math.log(1.0 + n_chunks / df[t])
        if score > 0.0:
            scored.append((chunk.id, score))
    scored.sort(key=lambda pair: (-pair[1], pair[0]))
    return scored[:k]


def save_kb_index(chunks: list[KbChunk], path: str | Path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as f:
        for chunk in chunks:
            f.write(json.dumps(chunk.to_json(), ensure_ascii=False))
            f.write("\n")


def load_kb_index(path: str | Path) -> list[KbChunk]:
    chunks = []
    with open(path, encoding="utf-8") as f:
        for line in f:
            line = line.strip()
            if line:
                chunks.append(KbChunk.from_json(json.loads(line)))
    return chunks
