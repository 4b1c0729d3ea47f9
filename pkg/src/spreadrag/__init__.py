"""Knowledge-graph question answering with activation-based retrieval.

Indexes a text corpus into an entity/relation graph with embedded
descriptions and documents, retrieves by spreading activation from
query-matched seed entities, and answers questions through six
interchangeable pipelines (three over a flat chunk index, three over
the graph).
"""

from .chunk_store import ChunkStore
from .config import RunConfig, load_config
from .errors import (
    AmbiguousEntity,
    ConfigError,
    Conflict,
    DimensionError,
    ExtractionError,
    GatewayError,
    GatewayTimeout,
    InvalidRelation,
    MockMiss,
    NotFound,
    ParseError,
    ParseFailure,
    PipelineError,
    SpreadragError,
)
from .evalkit import (
    EvalRecord,
    EvalReport,
    QAItem,
    best_scores,
    exact_match,
    f1_score,
    format_report_table,
    load_dataset,
    normalize_answer,
    run_eval,
    sample_items,
)
from .gateway import (
    ChatRequest,
    CompletionRule,
    Gateway,
    HttpGateway,
    MockGateway,
    cosine,
    fingerprint,
    normalize,
)
from .graph_store import (
    DescribesLink,
    DescriptionNode,
    DocumentNode,
    EntityNode,
    EntityType,
    GraphStore,
    RelatedToLink,
    Subgraph,
    normalize_name,
)
from .ingest import (
    Chunk,
    ExtractedEntity,
    ExtractedTriple,
    IndexReport,
    chunk_text,
    extract_entities,
    extract_relations,
    index_chunks,
    index_corpus,
    load_corpus,
    parse_model_payload,
)
from .pipelines import (
    Answer,
    ActivationRetriever,
    ChunkRetriever,
    CotStep,
    PIPELINES,
    SubAnswer,
    answer_cot,
    answer_decomposition,
    answer_naive,
    answer_question,
    answer_sa,
    build_retriever,
    decompose,
    render_context,
)
from .retrieval import (
    ActivationState,
    Context,
    ContextDocument,
    ContextRelation,
    PRESETS,
    RetrievalConfig,
    assemble_context,
    export_activation_dot,
    fetch_subgraph,
    rescale_weight,
    spread_activation,
)

__version__ = "0.1.0"

__all__ = [
    "ActivationRetriever",
    "ActivationState",
    "AmbiguousEntity",
    "Answer",
    "ChatRequest",
    "Chunk",
    "ChunkRetriever",
    "ChunkStore",
    "CompletionRule",
    "ConfigError",
    "Conflict",
    "Context",
    "ContextDocument",
    "ContextRelation",
    "CotStep",
    "DescribesLink",
    "DescriptionNode",
    "DimensionError",
    "DocumentNode",
    "EntityNode",
    "EntityType",
    "EvalRecord",
    "EvalReport",
    "ExtractedEntity",
    "ExtractedTriple",
    "ExtractionError",
    "Gateway",
    "GatewayError",
    "GatewayTimeout",
    "GraphStore",
    "HttpGateway",
    "IndexReport",
    "InvalidRelation",
    "MockGateway",
    "MockMiss",
    "NotFound",
    "PIPELINES",
    "PRESETS",
    "ParseError",
    "ParseFailure",
    "PipelineError",
    "QAItem",
    "RelatedToLink",
    "RetrievalConfig",
    "RunConfig",
    "SpreadragError",
    "SubAnswer",
    "Subgraph",
    "answer_cot",
    "answer_decomposition",
    "answer_naive",
    "answer_question",
    "answer_sa",
    "assemble_context",
    "best_scores",
    "build_retriever",
    "chunk_text",
    "cosine",
    "decompose",
    "exact_match",
    "export_activation_dot",
    "extract_entities",
    "extract_relations",
    "f1_score",
    "fetch_subgraph",
    "fingerprint",
    "format_report_table",
    "index_chunks",
    "index_corpus",
    "load_config",
    "load_corpus",
    "load_dataset",
    "normalize",
    "normalize_answer",
    "normalize_name",
    "parse_model_payload",
    "render_context",
    "rescale_weight",
    "run_eval",
    "sample_items",
    "spread_activation",
]
