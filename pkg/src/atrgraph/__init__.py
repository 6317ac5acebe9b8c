"""Typed workflow graphs built from operational traces, traversed by a nested
plan/execute loop and reinforced by the outcomes of past traversals."""

from .atr import (
    AtrParams,
    QualityWeights,
    decay,
    deposit,
    edge_gini,
    edge_probabilities,
    gini,
    node_gini,
    sample_edges,
    score,
    synthesize_edges,
)
from .clustering import cluster, decluster, enabled_signature, incremental_merge
from .corpus import CorpusConfig, Trace, TraceEntry, build_graph, extract_workflow, load_corpus, parse_corpus
from .embedding import HashingEmbedder, tokenize
from .export import to_dot, weight_stats
from .graph import (
    ConfigurationError,
    Edge,
    EdgeKind,
    GraphError,
    Node,
    NodeKind,
    NotFoundError,
    SchemaError,
    Subgraph,
    ValidationError,
    WorkflowGraph,
    validate,
)
from .harness import GroundTruth, Incident, SimulatedExecutor, generate_corpus, run_ablation, run_evolution
from .index import Query, VectorIndex
from .masking import DEFAULT_RULES, MaskingRule, canonicalize
from .trajectory import Observation, Step, Trajectory
from .traversal import (
    EchoExecutor,
    EpisodeContext,
    ProtocolError,
    ReferenceLoader,
    ReferencePlanner,
    ScriptedExecutor,
    TraversalParams,
    graph_loader,
    run_episode,
)

__version__ = "0.1.0"
