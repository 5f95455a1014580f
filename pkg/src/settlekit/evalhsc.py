"""Six-dimension evaluation harness with comparative model reports.

Evaluation items are grouped by dimension and subclass against a canonical
schema (300 questions over 24 subclasses).  Responses are scored 0-10 per
dimension, either by an LLM judge through a chat client or imported from
CSV.  Reports aggregate per-dimension means, their sum, and a composite
mean, and can carry an externally reported total, which is stored verbatim
and never derived from the scores.
"""

from __future__ import annotations

import csv
import json
import logging
import re
import statistics
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from enum import Enum
from pathlib import Path
from typing import Iterable, Mapping, Sequence

from .chat import ChatClient, derive_seed
from .synth import PromptTemplate, render_prompt

log = logging.getLogger(__name__)

HIGH_QUALITY_THRESHOLD = 8.0


class Dimension(Enum):
    """The six scored axes, in fixed order of increasing difficulty."""

    RELEVANCE = "relevance"
    COMPREHENSIVENESS = "comprehensiveness"
    UTILITY = "utility"
    EXPERTISE = "expertise"
    ORIGINALITY = "originality"
    DEPTH = "depth"

    @property
    def label(self) -> str:
        return self.value.capitalize()

    @classmethod
    def parse(cls, name: str) -> "Dimension":
        """Accept canonical names and their prose synonyms, case-insensitive."""
        key = name.strip().lower()
        key = _SYNONYMS.get(key, key)
        try:
            return cls(key)
        except ValueError:
            raise ValueError(f"unknown dimension '{name}'") from None


_SYNONYMS = {
    "completeness": "comprehensiveness",
    "practicality": "utility",
    "professionalism": "expertise",
}


@dataclass(frozen=True)
class EvalCategory:
    dimension: Dimension
    subclass_count: int
    question_count: int


CANONICAL_SCHEMA = (
    EvalCategory(Dimension.RELEVANCE, 4, 50),
    EvalCategory(Dimension.COMPREHENSIVENESS, 5, 63),
    EvalCategory(Dimension.UTILITY, 4, 50),
    EvalCategory(Dimension.EXPERTISE, 6, 74),
    EvalCategory(Dimension.ORIGINALITY, 3, 38),
    EvalCategory(Dimension.DEPTH, 2, 25),
)


@dataclass(frozen=True)
class EvalItem:
    id: str
    dimension: Dimension
    subclass: str
    question: str

    def to_json(self) -> dict:
        return {
            "id": self.id,
            "dimension": self.dimension.value,
            "subclass": self.subclass,
            "question": self.question,
        }

    @classmethod
    def from_json(cls, row: dict) -> "EvalItem":
        return cls(row["id"], Dimension.parse(row["dimension"]), row["subclass"], row["question"])


def save_evalset(items: Iterable[EvalItem], path: str | Path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as f:
        for item in items:
            f.write(json.dumps(item.to_json(), ensure_ascii=False))
            f.write("\n")


def load_evalset(path: str | Path) -> list[EvalItem]:
    items = []
    with open(path, encoding="utf-8") as f:
        for line in f:
            line = line.strip()
            if line:
                items.append(EvalItem.from_json(json.loads(line)))
    return items


def validate_evalset(
    items: Sequence[EvalItem], schema: Sequence[EvalCategory] = CANONICAL_SCHEMA
) -> list[str]:
    """Check per-dimension question and subclass counts; empty list = pass.

    Subclass counts are only compared once the question count for that
    dimension matches, so each dimension contributes at most one message.
    """
    errors = []
    schema_dims = {cat.dimension for cat in schema}
    for cat in schema:
        members = [item for item in items if item.dimension is cat.dimension]
        if len(members) != cat.question_count:
            errors.append(f"{cat.dimension.label}: expected {cat.question_count}, got {len(members)}")
            continue
        subclasses = {item.subclass for item in members}
        if len(subclasses) != cat.subclass_count:
            errors.append(
                f"{cat.dimension.label}: expected {cat.subclass_count} subclasses, "
                f"got {len(subclasses)}"
            )
    stray = sorted({item.dimension.label for item in items if item.dimension not in schema_dims})
    for label in stray:
        errors.append(f"{label}: not in schema")
    return errors


@dataclass(frozen=True)
class ScoreCard:
    model_name: str
    item_id: str
    scores: Mapping[Dimension, float]

    def __post_init__(self) -> None:
        object.__setattr__(self, "scores", dict(self.scores))
        present = set(self.scores)
        expected = set(Dimension)
        if present != expected:
            missing = sorted(d.label for d in expected - present)
            raise ValueError(f"scorecard missing dimensions: {', '.join(missing)}")
        for dim, score in self.scores.items():
            if not 0.0 <= score <= 10.0:
                raise ValueError(f"{dim.label} score {score} outside [0, 10]")


def composite(card: ScoreCard) -> float:
    """Arithmetic mean of the six dimension scores."""
    return statistics.fmean(card.scores[d] for d in Dimension)


@dataclass(frozen=True)
class ModelReport:
    model_name: str
    per_dimension_mean: Mapping[Dimension, float]
    dimension_sum: float
    composite_mean: float
    high_quality: bool
    reported_total: float | None = None

    @property
    def reported_total_mismatch(self) -> bool:
        """True when the imported total disagrees with the computed sum."""
        if self.reported_total is None:
            return False
        return abs(self.reported_total - self.dimension_sum) > 1e-6

    def to_json(self) -> dict:
        return {
            "model": self.model_name,
            "per_dimension_mean": {d.value: self.per_dimension_mean[d] for d in Dimension},
            "dimension_sum": self.dimension_sum,
            "composite_mean": self.composite_mean,
            "high_quality": self.high_quality,
            "reported_total": self.reported_total,
            "reported_total_mismatch": self.reported_total_mismatch,
        }


def build_report(
    model: str, cards: Sequence[ScoreCard], reported_total: float | None = None
) -> ModelReport:
    """Aggregate one model's scorecards; the reported total is stored as-is."""
    if not cards:
        raise ValueError(f"no scorecards for model '{model}'")
    strays = sorted({c.model_name for c in cards if c.model_name != model})
    if strays:
        raise ValueError(f"cards for model '{model}' mixed with: {', '.join(strays)}")
    means = {d: statistics.fmean(c.scores[d] for c in cards) for d in Dimension}
    total = sum(means.values())
    mean = total / len(Dimension)
    report = ModelReport(
        model_name=model,
        per_dimension_mean=means,
        dimension_sum=total,
        composite_mean=mean,
        high_quality=mean > HIGH_QUALITY_THRESHOLD,
        reported_total=reported_total,
    )
    if report.reported_total_mismatch:
        log.info(
            "model %s: reported total %.2f differs from computed dimension sum %.2f",
            model,
            reported_total,
            total,
        )
    return report


class RankKey(Enum):
    DIMENSION_SUM = "dimension_sum"
    COMPOSITE_MEAN = "composite_mean"
    REPORTED_TOTAL = "reported_total"


def rank_models(reports: Sequence[ModelReport], key: RankKey) -> list[ModelReport]:
    """Descending by the chosen key; ties broken by model name ascending."""
    if not reports:
        raise ValueError("nothing to rank")
    if key is RankKey.REPORTED_TOTAL:
        missing = sorted(r.model_name for r in reports if r.reported_total is None)
        if missing:
            raise ValueError(f"no reported total for: {', '.join(missing)}")
    value = lambda r: getattr(r, key.value)
    return sorted(reports, key=lambda r: (-value(r), r.model_name))


def dimension_winners(reports: Sequence[ModelReport]) -> dict[Dimension, str]:
    """Per-dimension argmax over the per-dimension means; ties by name."""
    if not reports:
        raise ValueError("no reports")
    winners = {}
    for dim in Dimension:
        best = max(
            sorted(reports, key=lambda r: r.model_name),
            key=lambda r: r.per_dimension_mean[dim],
        )
        winners[dim] = best.model_name
    return winners


class JudgeParseError(Exception):
    """Judge output had no usable score block; carries the raw text."""

    def __init__(self, message: str, raw: str) -> None:
        super().__init__(message)
        self.raw = raw


def _dimension_pattern(dim: Dimension) -> re.Pattern:
    names = [dim.value] + [syn for syn, canon in _SYNONYMS.items() if canon == dim.value]
    alt = "|".join(re.escape(n) for n in names)
    return re.compile(rf"(?:{alt})\s*[:：]\s*(-?\d+(?:\.\d+)?)", re.IGNORECASE)


_SCORE_PATTERNS = {dim: _dimension_pattern(dim) for dim in Dimension}


def parse_judge_scores(text: str) -> dict[Dimension, float]:
    """Extract six labeled scores, clamping out-of-range values into [0, 10]."""
    scores = {}
    missing = []
    for dim, pattern in _SCORE_PATTERNS.items():
        match = pattern.search(text)
        if match is None:
            missing.append(dim.label)
            continue
        value = float(match.group(1))
        clamped = min(10.0, max(0.0, value))
        if clamped != value:
            log.warning("%s score %s clamped to %s", dim.label, value, clamped)
        scores[dim] = clamped
    if missing:
        raise JudgeParseError(f"missing scores for: {', '.join(missing)}", raw=text)
    return scores


def judge_scores(
    item: EvalItem,
    response: str,
    client: ChatClient,
    rubric: PromptTemplate,
    *,
    model_name: str = "candidate",
    base_seed: int = 0,
    temperature: float = 0.0,
    retries: int = 2,
) -> ScoreCard:
    """Score one response with an LLM judge driven by the rubric template."""
    prompt = render_prompt(rubric, {"question": item.question, "response": response})
    last_error = None
    for attempt in range(retries + 1):
        raw = client.send(
            system="",
            messages=[("user", prompt)],
            temperature=temperature,
            seed=derive_seed(base_seed, model_name, item.id, attempt),
        )
        try:
            return ScoreCard(model_name, item.id, parse_judge_scores(raw))
        except JudgeParseError as exc:
            last_error = exc
            log.warning("judge output unparseable for item %s (attempt %d)", item.id, attempt + 1)
    raise last_error


def judge_batch(
    pairs: Sequence[tuple[EvalItem, str]],
    client: ChatClient,
    rubric: PromptTemplate,
    *,
    model_name: str = "candidate",
    base_seed: int = 0,
    temperature: float = 0.0,
) -> list[ScoreCard]:
    """Judge many (item, response) pairs concurrently, output in input order."""
    workers = max(1, min(getattr(client, "max_in_flight", 1), len(pairs) or 1))
    job = lambda pair: judge_scores(
        pair[0],
        pair[1],
        client,
        rubric,
        model_name=model_name,
        base_seed=base_seed,
        temperature=temperature,
    )
    if workers == 1:
        return [job(pair) for pair in pairs]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(job, pairs))


CSV_HEADER = ("model", "item") + tuple(d.value for d in Dimension)


def write_scores_csv(cards: Iterable[ScoreCard], path: str | Path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(CSV_HEADER)
        for card in cards:
            writer.writerow(
                [card.model_name, card.item_id] + [card.scores[d] for d in Dimension]
            )


def read_scores_csv(path: str | Path) -> list[ScoreCard]:
    with open(path, encoding="utf-8", newline="") as f:
        reader = csv.reader(f)
        header = next(reader, None)
        if header is None or tuple(h.strip() for h in header) != CSV_HEADER:
            raise ValueError(
                f"bad scores header {header}; expected {','.join(CSV_HEADER)}"
            )
        cards = []
        for row in reader:
            if not row:
                continue
            model, item, *values = row
            scores = {d: float(v) for d, v in zip(Dimension, values)}
            cards.append(ScoreCard(model, item, scores))
    return cards


def reports_by_model(
    cards: Sequence[ScoreCard], reported_totals: Mapping[str, float] | None = None
) -> list[ModelReport]:
    """Group cards by model name and build one report per model."""
    totals = reported_totals or {}
    models = sorted({c.model_name for c in cards})
    return [
        build_report(m, [c for c in cards if c.model_name == m], totals.get(m)) for m in models
    ]


def report_table(reports: Sequence[ModelReport]) -> str:
    """Aligned plain-text scoreboard, one model per row."""
    header = ["Model"] + [d.label for d in Dimension] + ["Sum", "Composite", "Reported"]
    rows = []
    for r in reports:
        cells = [r.model_name]
        cells += [f"{r.per_dimension_mean[d]:.2f}" for d in Dimension]
        cells += [f"{r.dimension_sum:.2f}", f"{r.composite_mean:.2f}"]
        cells.append(f"{r.reported_total:.2f}" if r.reported_total is not None else "-")
        rows.append(cells)
    widths = [max(len(row[i]) for row in [header] + rows) for i in range(len(header))]
    lines = []
    for row in [header] + rows:
        cells = [row[0].ljust(widths[0])] + [c.rjust(w) for c, w in zip(row[1:], widths[1:])]
        lines.append("  ".join(cells).rstrip())
    return "\n".join(lines) + "\n"


def write_report_json(reports: Sequence[ModelReport], path: str | Path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    payload = [r.to_json() for r in reports]
    path.write_text(json.dumps(payload, ensure_ascii=False, indent=2) + "\n", encoding="utf-8")


def write_report_csv(reports: Sequence[ModelReport], path: str | Path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(
            ["model"]
            + [d.value for d in Dimension]
            + ["dimension_sum", "composite_mean", "reported_total"]
        )
        for r in reports:
            writer.writerow(
                [r.model_name]
                + [f"{r.per_dimension_mean[d]:.6f}" for d in Dimension]
                + [f"{r.dimension_sum:.6f}", f"{r.composite_mean:.6f}"]
                + [f"{r.reported_total:.2f}" if r.reported_total is not None else ""]
            )
