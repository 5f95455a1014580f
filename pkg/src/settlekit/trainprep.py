"""Training-data export: pretraining corpus, SFT conversations, run config.

Outputs are line-delimited JSON with fixed key order and no timestamps, so
identical inputs always produce byte-identical files.  Text is truncated by
normalized character count; the manifest records that unit so a downstream
trainer can re-truncate by tokens if it needs to.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

from .corpus import Document
from .synth import QaRecord

TRUNCATION_UNIT = "character"


@dataclass(frozen=True)
class TrainingConfig:
    precision: str = "fp16"
    epochs: int = 3
    batch_size: int = 64
    learning_rate: float = 1e-4
    warmup_ratio: float = 0.1
    lr_scheduler_type: str = "cosine"
    truncation_length: int = 1024

    def __post_init__(self) -> None:
        if self.epochs <= 0:
            raise ValueError(f"epochs must be > 0, got {self.epochs}")
        if self.batch_size <= 0:
            raise ValueError(f"batch_size must be > 0, got {self.batch_size}")
        if self.learning_rate <= 0:
            raise ValueError(f"learning_rate must be > 0, got {self.learning_rate}")
        if not 0.0 <= self.warmup_ratio <= 1.0:
            raise ValueError(f"warmup_ratio must be in [0, 1], got {self.warmup_ratio}")
        if self.truncation_length <= 0:
            raise ValueError(f"truncation_length must be > 0, got {self.truncation_length}")

    def to_json(self) -> dict:
        return {
            "precision": self.precision,
            "epochs": self.epochs,
            "batch_size": self.batch_size,
            "learning_rate": self.learning_rate,
            "warmup_ratio": self.warmup_ratio,
            "lr_scheduler_type": self.lr_scheduler_type,
            "truncation_length": self.truncation_length,
        }

    @classmethod
    def from_json(cls, row: dict) -> "TrainingConfig":
        return cls(**row)


def config_text(cfg: TrainingConfig) -> str:
    """The canonical serialized form; the manifest digest hashes these bytes."""
    return json.dumps(cfg.to_json(), ensure_ascii=False, indent=2) + "\n"


def config_digest(cfg: TrainingConfig) -> str:
    return hashlib.sha256(config_text(cfg).encode("utf-8")).hexdigest()


def emit_training_config(cfg: TrainingConfig, path: str | Path) -> Path:
    """Write the seven-field run config as JSON; keys keep declaration order."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(config_text(cfg), encoding="utf-8")
    return path


def load_training_config(path: str | Path) -> TrainingConfig:
    return TrainingConfig.from_json(json.loads(Path(path).read_text(encoding="utf-8")))


@dataclass(frozen=True)
class ExportManifest:
    pretrain_records: int = 0
    sft_records: int = 0
    dropped_contradicted: int = 0
    truncated_records: int = 0
    config_digest: str = ""
    truncation_unit: str = TRUNCATION_UNIT

    def __post_init__(self) -> None:
        for name in ("pretrain_records", "sft_records", "dropped_contradicted", "truncated_records"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be non-negative")

    def to_json(self) -> dict:
        return {
            "pretrain_records": self.pretrain_records,
            "sft_records": self.sft_records,
            "dropped_contradicted": self.dropped_contradicted,
            "truncated_records": self.truncated_records,
            "config_digest": self.config_digest,
            "truncation_unit": self.truncation_unit,
        }


def _write_manifest(manifest: ExportManifest, export_path: Path) -> None:
    sidecar = export_path.with_name(export_path.stem + ".manifest.json")
    sidecar.write_text(
        json.dumps(manifest.to_json(), ensure_ascii=False, indent=2) + "\n", encoding="utf-8"
    )


def export_pretrain(
    corpus: Sequence[Document], cfg: TrainingConfig, path: str | Path
) -> tuple[Path, ExportManifest]:
    """Write one {"text": clean_text} object per document, length-capped."""
    if not corpus:
        raise ValueError("cannot export an empty corpus")
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    limit = cfg.truncation_length
    truncated = 0
    with open(path, "w", encoding="utf-8") as f:
        for doc in corpus:
            text = doc.clean_text
            if len(text) > limit:
                text = text[:limit]
                truncated += 1
            f.write(json.dumps({"text": text}, ensure_ascii=False))
            f.write("\n")
    manifest = ExportManifest(
        pretrain_records=len(corpus),
        truncated_records=truncated,
        config_digest=config_digest(cfg),
    )
    _write_manifest(manifest, path)
    return path, manifest


def _conversations(record: QaRecord, limit: int) -> tuple[list[dict], bool]:
    convo = []
    truncated = False
    for turn in record.turns:
        for role, content in (("user", turn.question), ("assistant", turn.answer)):
            if len(content) > limit:
                content = content[:limit]
                truncated = True
            convo.append({"role": role, "content": content})
    return convo, truncated


def export_sft(
    records: Sequence[QaRecord],
    cfg: TrainingConfig,
    path: str | Path,
    *,
    drop_contradicted: bool = True,
) -> tuple[Path, ExportManifest]:
    """Write QA records as chat conversations, one JSON object per line.

    Contradicted records (per their knowledge-graph verdicts) are dropped
    when the flag is set, otherwise kept and marked "contradicted": true.
    """
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    limit = cfg.truncation_length
    dropped = 0
    truncated = 0
    lines = []
    for record in records:
        if record.contradicted and drop_contradicted:
            dropped += 1
            continue
        convo, was_truncated = _conversations(record, limit)
        if was_truncated:
            truncated += 1
        row = {
            "conversations": convo,
            "scenario": record.scenario.key,
            "grounding": list(record.grounding),
        }
        if record.contradicted:
            row["contradicted"] = True
        lines.append(json.dumps(row, ensure_ascii=False))
    if not lines:
        raise ValueError("no records survive the export policy")
    with open(path, "w", encoding="utf-8") as f:
        f.write("\n".join(lines))
        f.write("\n")
    manifest = ExportManifest(
        sft_records=len(lines),
        dropped_contradicted=dropped,
        truncated_records=truncated,
        config_digest=config_digest(cfg),
    )
    _write_manifest(manifest, path)
    return path, manifest
