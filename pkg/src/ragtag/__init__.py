"""Retrieval-augmented scene-tag prompting pipeline.

The pipeline turns structured scene annotations into canonical tag sets,
attaches retrieved knowledge snippets to each tag, packs the result into a
byte-budgeted prompt, and serves queries either online or from a precomputed
tag cache. Training utilities (a toy multitask objective with verified
gradients) and evaluation/benchmark harnesses round out the package.

``KERNEL_BACKEND`` names the compiled-or-fallback kernel implementation
selected at import time ("native" or "python"); set ``RAGTAG_BACKEND`` to
force one.
"""

from ragtag._kernels import BACKEND as KERNEL_BACKEND
from ragtag.bench import (
    BenchReport,
    LatencySample,
    run_latency_bench,
    synthetic_workload,
)
from ragtag.config import DEFAULT_CONFIG, PipelineConfig, load_config
from ragtag.inference import (
    GenerationParams,
    LLMClient,
    RemoteClient,
    Response,
    StubClient,
    TagCache,
    build_cache,
    infer,
    infer_online,
    load_cache,
    save_cache,
)
from ragtag.losses import (
    LossReport,
    LossWeights,
    ToyModel,
    TrainingExample,
    grad_check,
    train_toy,
)
from ragtag.metrics import EvalRecord, bleu4, exact_match_accuracy, recall_at_k
from ragtag.prompting import Prompt, Query, build_prompt
from ragtag.retrieval import (
    EnrichedTagSet,
    HashEmbedder,
    KnowledgeEntry,
    KnowledgeStore,
    build_store,
    embed,
    enrich,
    load_corpus,
    load_store,
    parse_corpus_lines,
    retrieve,
    save_store,
    store_fingerprint,
)
from ragtag.scene import (
    SceneGraph,
    TagSet,
    build_tag_set,
    canonicalize,
    parse_corpus,
    parse_scene_graph,
    serialize_tags,
    validate_completeness,
)

__version__ = "0.1.0"

__all__ = [
    "BenchReport",
    "DEFAULT_CONFIG",
    "EnrichedTagSet",
    "EvalRecord",
    "GenerationParams",
    "HashEmbedder",
    "KERNEL_BACKEND",
    "KnowledgeEntry",
    "KnowledgeStore",
    "LLMClient",
    "LatencySample",
    "LossReport",
    "LossWeights",
    "PipelineConfig",
    "Prompt",
    "Query",
    "RemoteClient",
    "Response",
    "SceneGraph",
    "StubClient",
    "TagCache",
    "TagSet",
    "ToyModel",
    "TrainingExample",
    "__version__",
    "bleu4",
    "build_cache",
    "build_prompt",
    "build_store",
    "build_tag_set",
    "canonicalize",
    "embed",
    "enrich",
    "exact_match_accuracy",
    "grad_check",
    "infer",
    "infer_online",
    "load_cache",
    "load_config",
    "load_corpus",
    "load_store",
    "parse_corpus",
    "parse_corpus_lines",
    "parse_scene_graph",
    "recall_at_k",
    "retrieve",
    "run_latency_bench",
    "save_cache",
    "save_store",
    "serialize_tags",
    "store_fingerprint",
    "synthetic_workload",
    "train_toy",
    "validate_completeness",
]
