"""Scenario-driven QA and dialogue synthesis.

Question prompts come from ``{slot}`` templates; answers come from a chat
client (offline mock or HTTP endpoint).  Single-turn batches, autonomous
multi-role discussions grounded on knowledge-base chunks, and five-section
design-proposal drafts all flow through here.  With the mock client and a
fixed seed, whole runs are byte-reproducible.
"""

from __future__ import annotations

import hashlib
import json
import logging
import re
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Iterable, Mapping, Sequence

from .chat import STOP_MARKER, ChatClient, ChatClientError, derive_seed, strip_stop_marker
from .knowledge import KbChunk, Verdict, VerdictStatus

log = logging.getLogger(__name__)

MAX_TURN_CAP = 16


def _scene_enum(name, pairs):
    """Build a scene enum whose members know their Chinese and English labels."""
    from enum import Enum

    members = {key.upper(): key for key, _, _ in pairs}
    enum_cls = Enum(name, members)
    zh = {key: zh_label for key, zh_label, _ in pairs}
    en = {key: en_label for key, _, en_label in pairs}
    enum_cls.zh = property(lambda self: zh[self.value])
    enum_cls.en = property(lambda self: en[self.value])
    enum_cls.value_of = classmethod(lambda cls, raw: _parse_scene(cls, raw))
    return enum_cls


def _parse_scene(cls, raw: str):
    try:
        return cls(raw.strip().lower())
    except ValueError:
        known = ", ".join(m.value for m in cls)
        raise ValueError(f"unknown {cls.__name__} '{raw}'; expected one of: {known}") from None


PrimaryScene = _scene_enum(
    "PrimaryScene",
    [
        ("reference_cases", "参考案例", "reference cases"),
        ("design_framework_supplement", "设计框架补充", "design framework supplement"),
        ("design_philosophy", "设计理念", "design philosophy"),
    ],
)

SecondaryScene = _scene_enum(
    "SecondaryScene",
    [
        ("waterfront_space", "滨水空间", "waterfront space"),
        ("post_industrial_site", "后工业场地", "post-industrial site"),
        ("campus_design", "校园设计", "campus design"),
        ("architectural_design", "建筑设计", "architectural design"),
        ("ecological_design", "生态设计", "ecological design"),
        ("landscape_design", "景观设计", "landscape design"),
        ("sustainable_design", "可持续设计", "sustainable design"),
        ("child_friendly", "儿童友好", "child-friendly"),
        ("resilient_city", "韧性城市", "resilient city"),
        ("living_circle", "生活圈", "living circle"),
        ("sponge_city", "海绵城市", "sponge city"),
        ("smart_city", "智慧城市", "smart city"),
        ("planning_and_design", "规划设计", "planning and design"),
    ],
)


@dataclass(frozen=True)
class Scenario:
    primary_scene: "PrimaryScene"
    secondary_scene: "SecondaryScene"

    @classmethod
    def parse(cls, raw: str) -> "Scenario":
        """Parse "primary/secondary" scene keys; unknown names rejected."""
        primary, sep, secondary = raw.partition("/")
        if not sep:
            raise ValueError(f"scenario '{raw}' must be '<primary>/<secondary>'")
        return cls(PrimaryScene.value_of(primary), SecondaryScene.value_of(secondary))

    @property
    def key(self) -> str:
        return f"{self.primary_scene.value}/{self.secondary_scene.value}"

    def to_json(self) -> dict:
        return {
            "primary_scene": self.primary_scene.value,
            "secondary_scene": self.secondary_scene.value,
        }

    @classmethod
    def from_json(cls, row: dict) -> "Scenario":
        return cls(
            PrimaryScene.value_of(row["primary_scene"]),
            SecondaryScene.value_of(row["secondary_scene"]),
        )


@dataclass(frozen=True)
class Role:
    name: str
    persona_prompt: str

    def __post_init__(self) -> None:
        if not self.persona_prompt.strip():
            raise ValueError(f"role '{self.name}' has an empty persona prompt")


DEFAULT_ROLES = (
    Role("居民", "你是一位关心社区环境的普通居民，从日常生活角度提出需求和疑问。"),
    Role("城市规划师", "你是一位经验丰富的城市规划师，从规划政策与空间结构角度分析问题。"),
    Role("建筑设计师", "你是一位建筑设计师，关注建筑形态、功能组织与场地关系。"),
)


_SLOT_RE = re.compile(r"\{([a-z_][a-z0-9_]*)\}")


@dataclass(frozen=True)
class PromptTemplate:
    id: str
    body: str
    required_slots: frozenset[str]

    def __post_init__(self) -> None:
        found = set(_SLOT_RE.findall(self.body))
        declared = set(self.required_slots)
        if found != declared:
            missing = declared - found
            undeclared = found - declared
            parts = []
            if undeclared:
                parts.append(f"undeclared slots in body: {sorted(undeclared)}")
            if missing:
                parts.append(f"declared slots not in body: {sorted(missing)}")
            raise ValueError(f"template '{self.id}': " + "; ".join(parts))


def render_prompt(template: PromptTemplate, slots: Mapping[str, str]) -> str:
    """Substitute every placeholder; extra slots are ignored with a warning."""
    missing = sorted(template.required_slots - set(slots))
    if missing:
        raise ValueError(f"missing slot{'s' if len(missing) > 1 else ''}: {', '.join(missing)}")
    extra = sorted(set(slots) - template.required_slots)
    if extra:
        log.warning("template '%s': ignoring extra slots %s", template.id, extra)
    return _SLOT_RE.sub(lambda m: str(slots[m.group(1)]), template.body)


def load_template(directory: Path, name: str) -> PromptTemplate:
    """Load ``name.txt`` plus its ``name.json`` sidecar manifest."""
    body = (directory / f"{name}.txt").read_text(encoding="utf-8").strip()
    manifest = json.loads((directory / f"{name}.json").read_text(encoding="utf-8"))
    return PromptTemplate(
        id=manifest["id"], body=body, required_slots=frozenset(manifest["required_slots"])
    )


def load_templates(directory: str | Path | None = None) -> dict[str, PromptTemplate]:
    """Load all templates from a directory; defaults to the built-in set."""
    if directory is None:
        root = resources.files(__package__) / "templates"
    else:
        root = Path(directory)
    templates = {}
    for entry in sorted(root.iterdir(), key=lambda e: e.name):
        if entry.name.endswith(".txt"):
            name = entry.name[: -len(".txt")]
            template = load_template(Path(str(root)), name)
            templates[template.id] = template
    return templates


@dataclass(frozen=True)
class Turn:
    role: str
    question: str
    answer: str

    def to_json(self) -> dict:
        return {"role": self.role, "question": self.question, "answer": self.answer}


@dataclass(frozen=True)
class GeneratorMeta:
    template_id: str
    model: str
    seed: int
    temperature: float

    def to_json(self) -> dict:
        return {
            "template_id": self.template_id,
            "model": self.model,
            "seed": self.seed,
            "temperature": self.temperature,
        }


@dataclass(frozen=True)
class QaRecord:
    id: str
    scenario: Scenario
    turns: tuple[Turn, ...]
    grounding: tuple[str, ...] = ()
    kg_verdicts: tuple[Verdict, ...] = ()
    generator_meta: GeneratorMeta | None = None

    def __post_init__(self) -> None:
        if not self.turns:
            raise ValueError("record must have at least one turn")
        object.__setattr__(self, "turns", tuple(self.turns))
        object.__setattr__(self, "grounding", tuple(self.grounding))
        object.__setattr__(self, "kg_verdicts", tuple(self.kg_verdicts))

    @property
    def contradicted(self) -> bool:
        return any(v.status is VerdictStatus.CONTRADICTED for v in self.kg_verdicts)

    def to_json(self) -> dict:
        return {
            "id": self.id,
            "scenario": self.scenario.to_json(),
            "turns": [t.to_json() for t in self.turns],
            "grounding": list(self.grounding),
            "kg_verdicts": [v.to_json() for v in self.kg_verdicts],
            "generator_meta": self.generator_meta.to_json() if self.generator_meta else None,
        }

    @classmethod
    def from_json(cls, row: dict) -> "QaRecord":
        meta = row.get("generator_meta")
        return cls(
            id=row["id"],
            scenario=Scenario.from_json(row["scenario"]),
            turns=tuple(Turn(t["role"], t["question"], t["answer"]) for t in row["turns"]),
            grounding=tuple(row.get("grounding") or ()),
            kg_verdicts=tuple(Verdict.from_json(v) for v in row.get("kg_verdicts") or ()),
            generator_meta=GeneratorMeta(**meta) if meta else None,
        )


@dataclass(frozen=True)
class ProposalSectionSet:
    project_background: str
    design_objectives: str
    site_characteristics_and_challenges: str
    design_strategies: str
    conclusions: str

    def __post_init__(self) -> None:
        missing = [name for name, value in self.to_json().items() if not value.strip()]
        if missing:
            raise ValueError(f"missing: {', '.join(missing)}")

    def to_json(self) -> dict:
        return {
            "project_background": self.project_background,
            "design_objectives": self.design_objectives,
            "site_characteristics_and_challenges": self.site_characteristics_and_challenges,
            "design_strategies": self.design_strategies,
            "conclusions": self.conclusions,
        }


PROPOSAL_SECTIONS = (
    ("project_background", "项目背景"),
    ("design_objectives", "设计目标"),
    ("site_characteristics_and_challenges", "场地特征与挑战"),
    ("design_strategies", "设计策略"),
    ("conclusions", "结论"),
)


@dataclass
class SynthStats:
    requested: int = 0
    emitted: int = 0
    dropped_empty: int = 0
    dropped_filtered: int = 0
    errors: list[str] = field(default_factory=list)

    def to_json(self) -> dict:
        return {
            "requested": self.requested,
            "emitted": self.emitted,
            "dropped_empty": self.dropped_empty,
            "dropped_filtered": self.dropped_filtered,
            "errors": list(self.errors),
        }


def _record_id(*parts) -> str:
    material = json.dumps(list(parts), ensure_ascii=False)
    return "qa-" + hashlib.sha256(material.encode("utf-8")).hexdigest()[:16]


def _template_slots(
    template: PromptTemplate,
    scenario: Scenario,
    role: Role | None = None,
    extra: Mapping[str, str] | None = None,
) -> dict[str, str]:
    available: dict[str, str] = {
        "scene": scenario.secondary_scene.zh,
        "scene_en": scenario.secondary_scene.en,
        "primary_scene": scenario.primary_scene.zh,
    }
    if role is not None:
        available["role"] = role.name
    if extra:
        available.update(extra)
    return {k: v for k, v in available.items() if k in template.required_slots}


def generate_single_turn(
    scenario: Scenario,
    role: Role,
    template: PromptTemplate,
    client: ChatClient,
    n: int,
    *,
    base_seed: int = 0,
    temperature: float = 0.7,
    model: str = "mock",
    extra_slots: Mapping[str, str] | None = None,
) -> tuple[list[QaRecord], SynthStats]:
    """Generate n one-turn records; client failures yield a partial batch.

    Records with an empty answer are dropped and counted, never emitted.
    Generations run concurrently up to the client's in-flight cap; output
    order and content are independent of the worker count.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    question = render_prompt(template, _template_slots(template, scenario, role, extra_slots))
    stats = SynthStats(requested=n)

    def one(i: int):
        seed = derive_seed(base_seed, scenario.key, template.id, i)
        try:
            answer = client.send(
                system=role.persona_prompt,
                messages=[("user", question)],
                temperature=temperature,
                seed=seed,
            )
        except ChatClientError as exc:
            return ("error", f"record {i}: {exc}")
        if not answer.strip():
            return ("empty", None)
        record = QaRecord(
            id=_record_id(scenario.key, template.id, model, base_seed, i),
            scenario=scenario,
            turns=(Turn(role.name, question, answer),),
            generator_meta=GeneratorMeta(template.id, model, seed, temperature),
        )
        return ("ok", record)

    workers = max(1, min(client.max_in_flight, n))
    if workers == 1:
        outcomes = [one(i) for i in range(n)]
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            outcomes = list(pool.map(one, range(n)))

    records = []
    for kind, payload in outcomes:
        if kind == "ok":
            records.append(payload)
        elif kind == "empty":
            stats.dropped_empty += 1
        else:
            stats.errors.append(payload)
            log.error("single-turn generation failed: %s", payload)
    stats.emitted = len(records)
    return records, stats


_ASK_SUFFIX = "\n请基于以上讨论提出下一个问题，只输出问题本身。"


def _answer_system(grounding: Sequence[KbChunk]) -> str:
    parts = ["你是人居环境建设领域的专家助手，请结合讨论背景给出具体、专业的回答。"]
    if grounding:
        parts.append("参考资料（请围绕以下内容展开）：")
        for chunk in grounding:
            parts.append(chunk.text)
    parts.append(f"当你认为讨论可以结束时，请在回答末尾输出 {STOP_MARKER}")
    return "\n".join(parts)


def generate_multi_turn(
    scenario: Scenario,
    roles: Sequence[Role],
    template: PromptTemplate,
    client: ChatClient,
    max_turns: int,
    grounding: Sequence[KbChunk] = (),
    *,
    base_seed: int = 0,
    temperature: float = 0.7,
    model: str = "mock",
    turn_cap: int = MAX_TURN_CAP,
    extra_slots: Mapping[str, str] | None = None,
) -> QaRecord:
    """One autonomous multi-role discussion of up to max_turns QA turns.

    Roles ask in cyclic order (turn i belongs to roles[i % len(roles)]);
    grounding chunk texts are injected verbatim into the answering system
    prompt and their ids recorded.  The discussion ends early when a
    participant emits the stop marker.
    """
    if len(roles) < 2:
        raise ValueError("multi-turn generation needs at least 2 roles")
    if not 2 <= max_turns <= turn_cap:
        raise ValueError(f"max_turns must be in [2, {turn_cap}]")

    answer_system = _answer_system(grounding)
    history: list[tuple[str, str]] = []
    turns: list[Turn] = []
    for i in range(max_turns):
        role = roles[i % len(roles)]
        if i == 0:
            question = render_prompt(template, _template_slots(template, scenario, role, extra_slots))
        else:
            try:
                raw = client.send(
                    system=role.persona_prompt + _ASK_SUFFIX,
                    messages=history,
                    temperature=temperature,
                    seed=derive_seed(base_seed, scenario.key, "q", i),
                )
            except ChatClientError as exc:
                log.error("question generation failed at turn %d: %s", i, exc)
                break
            question, stopped = strip_stop_marker(raw)
            if stopped or not question.strip():
                break
        try:
            raw = client.send(
                system=answer_system,
                messages=history + [("user", question)],
                temperature=temperature,
                seed=derive_seed(base_seed, scenario.key, "a", i),
            )
        except ChatClientError as exc:
            log.error("answer generation failed at turn %d: %s", i, exc)
            break
        answer, stopped = strip_stop_marker(raw)
        if not answer.strip():
            break
        turns.append(Turn(role.name, question, answer))
        history += [("user", question), ("assistant", answer)]
        if stopped:
            break

    if not turns:
        raise ChatClientError("multi-turn generation produced no turns")
    return QaRecord(
        id=_record_id(scenario.key, template.id, model, base_seed, "multi"),
        scenario=scenario,
        turns=tuple(turns),
        grounding=tuple(chunk.id for chunk in grounding),
        generator_meta=GeneratorMeta(template.id, model, base_seed, temperature),
    )


def generate_proposal_sections(
    scenario: Scenario,
    client: ChatClient,
    template: PromptTemplate,
    *,
    base_seed: int = 0,
    temperature: float = 0.7,
) -> ProposalSectionSet:
    """Draft the five design-proposal sections for a scenario."""
    values: dict[str, str] = {}
    for name, zh_label in PROPOSAL_SECTIONS:
        prompt = render_prompt(
            template, _template_slots(template, scenario, extra={"section": zh_label})
        )
        values[name] = client.send(
            system="你是一位资深设计方案撰写人。",
            messages=[("user", prompt)],
            temperature=temperature,
            seed=derive_seed(base_seed, scenario.key, "proposal", name),
        )
    return ProposalSectionSet(**values)


def apply_drop_patterns(
    records: Iterable[QaRecord], patterns: Sequence[str]
) -> tuple[list[QaRecord], int]:
    """Post-generation cleaning hook: drop records matching any regex."""
    compiled = [re.compile(p) for p in patterns]
    kept, dropped = [], 0
    for record in records:
        texts = [t.question for t in record.turns] + [t.answer for t in record.turns]
        if any(rx.search(text) for rx in compiled for text in texts):
            dropped += 1
        else:
            kept.append(record)
    return kept, dropped


def save_records(records: Iterable[QaRecord], path: str | Path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as f:
        for record in records:
            f.write(json.dumps(record.to_json(), ensure_ascii=False))
            f.write("\n")


def load_records(path: str | Path) -> list[QaRecord]:
    records = []
    with open(path, encoding="utf-8") as f:
        for line in f:
            line = line.strip()
            if line:
                records.append(QaRecord.from_json(json.loads(line)))
    return records
