"""Pipeline configuration: one JSON document driving every CLI stage.

Unknown keys anywhere in the document are rejected up front, all at once,
so a typo cannot silently fall back to a default.  Command-line flags
override config values; secrets never live in the file (only the name of
the environment variable holding the API key does).
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Mapping

from .chat import ChatClient, EndpointConfig, HttpChatClient, MockChatClient
from .cleanse import MatchMode
from .evalhsc import CANONICAL_SCHEMA, Dimension, EvalCategory, RankKey
from .synth import Scenario
from .trainprep import TrainingConfig

DEFAULT_TARGET_TOTAL = 28000

_KNOWN_KEYS = {
    "paths": {
        "corpus_store": None,
        "lexicon": None,
        "templates_dir": None,
        "kg_file": None,
        "kb_source_dir": None,
        "output_dir": None,
    },
    "cleanse": {
        "min_sentence_len": None,
        "match_mode": None,
        "near_dup": {"enabled": None},
    },
    "synth": {
        "mock": None,
        "endpoint": {
            "base_url": None,
            "model": None,
            "api_key_env": None,
            "timeout_s": None,
            "max_in_flight": None,
            "max_retries": None,
        },
        "seed": None,
        "temperature": None,
        "max_turns": None,
        "target_counts": "open",
        "target_total": None,
        "drop_patterns": None,
    },
    "trainprep": {
        "training": {
            "precision": None,
            "epochs": None,
            "batch_size": None,
            "learning_rate": None,
            "warmup_ratio": None,
            "lr_scheduler_type": None,
            "truncation_length": None,
        },
        "drop_contradicted": None,
    },
    "eval": {
        "schema": None,
        "rubric": None,
        "ranking_key": None,
        "items": None,
        "scores": None,
        "reported_totals": None,
    },
    "workers": None,
}


def _unknown_keys(data: Mapping[str, Any], known: Mapping[str, Any], prefix: str = "") -> list[str]:
    offenders = []
    for key, value in data.items():
        if key not in known:
            offenders.append(prefix + key)
            continue
        sub = known[key]
        if isinstance(sub, dict) and isinstance(value, dict):
            offenders.extend(_unknown_keys(value, sub, prefix + key + "."))
    return offenders


@dataclass(frozen=True)
class PathsConfig:
    corpus_store: Path = Path("out/corpus_store.jsonl")
    lexicon: Path | None = None
    templates_dir: Path | None = None
    kg_file: Path | None = None
    kb_source_dir: Path | None = None
    output_dir: Path = Path("out")


@dataclass(frozen=True)
class CleanseConfig:
    min_sentence_len: int = 30
    match_mode: MatchMode = MatchMode.SUBSTRING


@dataclass(frozen=True)
class SynthConfig:
    mock: bool = True
    endpoint: EndpointConfig | None = None
    seed: int = 0
    temperature: float = 0.7
    max_turns: int = 4
    target_counts: Mapping[str, int] = field(default_factory=dict)
    target_total: int = DEFAULT_TARGET_TOTAL
    drop_patterns: tuple[str, ...] = ()


@dataclass(frozen=True)
class TrainprepConfig:
    training: TrainingConfig = field(default_factory=TrainingConfig)
    drop_contradicted: bool = True


@dataclass(frozen=True)
class EvalConfig:
    schema: tuple[EvalCategory, ...] = CANONICAL_SCHEMA
    rubric: str = "judge_rubric"
    ranking_key: RankKey = RankKey.COMPOSITE_MEAN
    items: Path | None = None
    scores: Path | None = None
    reported_totals: Path | None = None


@dataclass(frozen=True)
class PipelineConfig:
    paths: PathsConfig = field(default_factory=PathsConfig)
    cleanse: CleanseConfig = field(default_factory=CleanseConfig)
    synth: SynthConfig = field(default_factory=SynthConfig)
    trainprep: TrainprepConfig = field(default_factory=TrainprepConfig)
    eval: EvalConfig = field(default_factory=EvalConfig)
    workers: int = 4

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> "PipelineConfig":
        offenders = _unknown_keys(data, _KNOWN_KEYS)
        if offenders:
            raise ValueError(f"unknown config keys: {', '.join(sorted(offenders))}")

        paths_raw = data.get("paths", {})
        paths = PathsConfig(
            **{
                key: (Path(value) if value is not None else None)
                for key, value in paths_raw.items()
            }
        )
        if paths.corpus_store is None or paths.output_dir is None:
            raise ValueError("paths.corpus_store and paths.output_dir must not be null")

        cleanse_raw = dict(data.get("cleanse", {}))
        near_dup = cleanse_raw.pop("near_dup", {})
        if near_dup.get("enabled"):
            raise ValueError(
                "cleanse.near_dup.enabled: near-duplicate detection is a declared "
                "extension point and not implemented; set it to false"
            )
        if "match_mode" in cleanse_raw:
            cleanse_raw["match_mode"] = MatchMode(cleanse_raw["match_mode"])
        cleanse = CleanseConfig(**cleanse_raw)
        if cleanse.min_sentence_len < 1:
            raise ValueError("cleanse.min_sentence_len must be >= 1")

        synth_raw = dict(data.get("synth", {}))
        endpoint_raw = synth_raw.pop("endpoint", None)
        endpoint = EndpointConfig(**endpoint_raw) if endpoint_raw else None
        target_counts = dict(synth_raw.pop("target_counts", {}))
        for key in target_counts:
            Scenario.parse(key)
        if "drop_patterns" in synth_raw:
            synth_raw["drop_patterns"] = tuple(synth_raw["drop_patterns"])
        synth = SynthConfig(endpoint=endpoint, target_counts=target_counts, **synth_raw)
        if synth.max_turns < 2:
            raise ValueError("synth.max_turns must be >= 2")
        if any(n < 1 for n in target_counts.values()):
            raise ValueError("synth.target_counts values must be >= 1")

        trainprep_raw = dict(data.get("trainprep", {}))
        training = TrainingConfig(**trainprep_raw.pop("training", {}))
        trainprep = TrainprepConfig(training=training, **trainprep_raw)

        eval_raw = dict(data.get("eval", {}))
        schema_raw = eval_raw.pop("schema", None)
        if schema_raw is not None:
            schema = tuple(
                EvalCategory(
                    Dimension.parse(row["dimension"]),
                    int(row["subclass_count"]),
                    int(row["question_count"]),
                )
                for row in schema_raw
            )
        else:
            schema = CANONICAL_SCHEMA
        if "ranking_key" in eval_raw:
            eval_raw["ranking_key"] = parse_rank_key(eval_raw["ranking_key"])
        for key in ("items", "scores", "reported_totals"):
            if eval_raw.get(key) is not None:
                eval_raw[key] = Path(eval_raw[key])
        eval_cfg = EvalConfig(schema=schema, **eval_raw)

        workers = data.get("workers", 4)
        if workers < 1:
            raise ValueError("workers must be >= 1")

        return cls(
            paths=paths,
            cleanse=cleanse,
            synth=synth,
            trainprep=trainprep,
            eval=eval_cfg,
            workers=workers,
        )

    @classmethod
    def from_file(cls, path: str | Path) -> "PipelineConfig":
        try:
            data = json.loads(Path(path).read_text(encoding="utf-8"))
        except json.JSONDecodeError as exc:
            raise ValueError(f"config {path} is not valid JSON: {exc}") from None
        if not isinstance(data, dict):
            raise ValueError(f"config {path} must be a JSON object")
        return cls.from_dict(data)


def parse_rank_key(raw: str) -> RankKey:
    try:
        return RankKey(raw.strip().lower().replace("-", "_"))
    except ValueError:
        known = ", ".join(k.value.replace("_", "-") for k in RankKey)
        raise ValueError(f"unknown ranking key '{raw}'; expected one of: {known}") from None


def make_client(cfg: PipelineConfig) -> ChatClient:
    """Build the configured chat client; mock wins when both are allowed."""
    if cfg.synth.mock:
        return MockChatClient(seed=cfg.synth.seed, max_in_flight=cfg.workers)
    if cfg.synth.endpoint is None:
        raise ValueError("no client configured: set synth.mock or synth.endpoint")
    return HttpChatClient(cfg.synth.endpoint)
