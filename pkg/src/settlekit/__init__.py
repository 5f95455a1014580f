"""Data toolkit for a domain chat model in human settlements construction.

Covers the full data path: corpus ingestion and cleaning, exact
deduplication at article and sentence level, scenario-driven QA and
discussion synthesis against a pluggable chat endpoint, knowledge-graph
claim validation, tf-idf grounding retrieval, training-data export, and a
six-dimension evaluation harness with comparative reports.
"""

from .chat import (
    ChatClient,
    ChatClientError,
    EndpointConfig,
    HttpChatClient,
    MockChatClient,
    STOP_MARKER,
    derive_seed,
)
from .cleanse import (
    DedupReport,
    Lexicon,
    MatchMode,
    dedup_articles,
    dedup_sentences,
    filter_sensitive,
)
from .corpus import (
    Corpus,
    DocStatus,
    Document,
    SourceKind,
    extract_text,
    load_store,
    normalize,
    save_store,
    split_sentences,
)
from .evalhsc import (
    CANONICAL_SCHEMA,
    Dimension,
    EvalCategory,
    EvalItem,
    ModelReport,
    RankKey,
    ScoreCard,
    build_report,
    composite,
    judge_scores,
    rank_models,
    validate_evalset,
)
from .knowledge import (
    KbChunk,
    KnowledgeGraph,
    Triple,
    Verdict,
    VerdictStatus,
    build_kb_index,
    extract_claims,
    retrieve,
    validate_record,
)
from .synth import (
    DEFAULT_ROLES,
    PrimaryScene,
    PromptTemplate,
    QaRecord,
    Role,
    Scenario,
    SecondaryScene,
    Turn,
    generate_multi_turn,
    generate_proposal_sections,
    generate_single_turn,
    load_templates,
    render_prompt,
)
from .trainprep import (
    ExportManifest,
    TrainingConfig,
    emit_training_config,
    export_pretrain,
    export_sft,
)

__version__ = "0.1.0"

__all__ = [
    "CANONICAL_SCHEMA",
    "ChatClient",
    "ChatClientError",
    "Corpus",
    "DEFAULT_ROLES",
    "DedupReport",
    "Dimension",
    "DocStatus",
    "Document",
    "EndpointConfig",
    "EvalCategory",
    "EvalItem",
    "ExportManifest",
    "HttpChatClient",
    "KbChunk",
    "KnowledgeGraph",
    "Lexicon",
    "MatchMode",
    "MockChatClient",
    "ModelReport",
    "PrimaryScene",
    "PromptTemplate",
    "QaRecord",
    "RankKey",
    "Role",
    "STOP_MARKER",
    "Scenario",
    "ScoreCard",
    "SecondaryScene",
    "SourceKind",
    "TrainingConfig",
    "Triple",
    "Turn",
    "Verdict",
    "VerdictStatus",
    "build_kb_index",
    "build_report",
    "composite",
    "dedup_articles",
    "dedup_sentences",
    "derive_seed",
    "emit_training_config",
    "export_pretrain",
    "export_sft",
    "extract_claims",
    "extract_text",
    "filter_sensitive",
    "generate_multi_turn",
    "generate_proposal_sections",
    "generate_single_turn",
    "judge_scores",
    "load_store",
    "load_templates",
    "normalize",
    "rank_models",
    "render_prompt",
    "retrieve",
    "save_store",
    "split_sentences",
    "validate_evalset",
    "validate_record",
]
