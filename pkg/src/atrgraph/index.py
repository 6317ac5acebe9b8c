"""Exact top-k similarity search over enabled graph nodes."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .embedding import DEFAULT_EMBEDDER, EmbeddingProvider, embed_many
from .graph import ConfigurationError, NodeId, NodeKind, ValidationError, WorkflowGraph
from .masking import DEFAULT_RULES, MaskingRule, canonicalize


@dataclass(frozen=True)
class Query:
    text: str
    kind: NodeKind
    k: int
    exclude: frozenset[NodeId] = field(default_factory=frozenset)

    def __post_init__(self) -> None:
        if self.k < 1:
            raise ValidationError("k must be >= 1")


class VectorIndex:
    """Immutable snapshot of node embeddings.

    Rebuilding returns a new index, so readers holding an old snapshot are
    never disturbed.
    """

    def __init__(
        self,
        ids: np.ndarray,
        kinds: np.ndarray,
        matrix: np.ndarray,
        embedder: EmbeddingProvider,
        rules: tuple[MaskingRule, ...] = DEFAULT_RULES,
    ):
        self.ids = ids
        self.kinds = kinds
        self.matrix = matrix
        self.embedder = embedder
        self.rules = rules
        for arr in (self.ids, self.kinds, self.matrix):
            arr.setflags(write=False)

    @classmethod
    def rebuild(cls, graph: WorkflowGraph, embedder: EmbeddingProvider = DEFAULT_EMBEDDER) -> "VectorIndex":
        if graph.embedding_provider not in (None, embedder.provider_id):
            raise ConfigurationError(
                f"graph was embedded with {graph.embedding_provider!r}, "
                f"index requested {embedder.provider_id!r}"
            )
        nodes = list(graph.iter_nodes(enabled=True))
        ids = np.array([n.id for n in nodes], dtype=np.int64)
        kinds = np.array([n.kind.value for n in nodes], dtype=object)
        matrix = embed_many(embedder, (n.canonical_text for n in nodes))
        return cls(ids, kinds, matrix, embedder, graph.rules)

    def __len__(self) -> int:
        return len(self.ids)

    def top_k(self, query: Query) -> list[tuple[NodeId, float]]:
        """Highest-cosine nodes of ``query.kind``, ties broken by ascending id."""
        kind = NodeKind(query.kind)
        if len(self.ids) == 0:
            return []
        mask = self.kinds == kind.value
        if query.exclude:
            mask &= ~np.isin(self.ids, np.fromiter(query.exclude, dtype=np.int64))
        idx = np.flatnonzero(mask)
        if idx.size == 0:
            return []
        text = canonicalize(query.text, self.rules)
        try:
            q = self.embedder.embed(text)
        except ValueError:
            return []
        sims = self.matrix[idx] @ q
        # similarities equal up to float noise count as ties, broken by id
        order = np.lexsort((self.ids[idx], -np.round(sims, 12)))[: query.k]
        return [(int(self.ids[idx[i]]), float(sims[i])) for i in order]
