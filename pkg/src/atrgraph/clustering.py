"""Embedding-based deduplication of graph nodes.

``cluster`` groups near-duplicate nodes of one kind with average-linkage
agglomerative clustering on cosine distance, creates a representative for
each multi-member group and disables the members.  ``decluster`` reverts
that, and ``incremental_merge`` is decluster -> union -> re-cluster.
"""

from __future__ import annotations

import logging
from collections import defaultdict
from dataclasses import dataclass, field
from typing import Callable, Iterable, Sequence

import numpy as np
from scipy.cluster.hierarchy import fcluster, linkage
from scipy.spatial.distance import squareform

from .embedding import DEFAULT_EMBEDDER, EmbeddingProvider, embed_many
from .graph import (
    ConfigurationError,
    EdgeKind,
    NodeId,
    NodeKind,
    ValidationError,
    WorkflowGraph,
)
from .masking import canonicalize

logger = logging.getLogger(__name__)

DEFAULT_TAU = 0.01
SEPARATOR = " | "
# distances below this are treated as exact duplicates (float noise in 1 - cos)
_ZERO_DISTANCE = 1e-12

RepresentativeGenerator = Callable[[Sequence[str]], str]
# Optional post-processing of the embedding clusters (e.g. an LLM pass)
ClusterRefiner = Callable[[list[list[NodeId]], WorkflowGraph], list[list[NodeId]]]


@dataclass
class Cluster:
    members: list[NodeId]
    representative: NodeId
    threshold: float
    kind: NodeKind


@dataclass
class MergeReport:
    added_nodes: int = 0
    matched_nodes: int = 0
    clusters: list[Cluster] = field(default_factory=list)
    rejected: list[tuple[str | None, list[str]]] = field(default_factory=list)


def representative_text(texts: Sequence[str]) -> str:
    """Join the longest, median-length and shortest texts with `` | ``.

    Ties in length are broken by position, so the result is deterministic
    for a fixed member order.  Identical exemplar texts are kept once.
    """
    if not texts:
        raise ValueError("no member texts")
    order = sorted(range(len(texts)), key=lambda i: (len(texts[i]), i))
    picks = [order[-1], order[(len(order) - 1) // 2], order[0]]
    out: list[str] = []
    for i in picks:
        if texts[i] not in out:
            out.append(texts[i])
    return SEPARATOR.join(out)


def check_provider(graph: WorkflowGraph, embedder: EmbeddingProvider) -> None:
    if graph.embedding_provider is None:
        graph.embedding_provider = embedder.provider_id
    elif graph.embedding_provider != embedder.provider_id:
        raise ConfigurationError(
            f"graph embeddings come from {graph.embedding_provider!r}, "
            f"not {embedder.provider_id!r}"
        )


def cosine_distance_matrix(X: np.ndarray) -> np.ndarray:
    D = 1.0 - X @ X.T
    np.clip(D, 0.0, 2.0, out=D)
    D[D < _ZERO_DISTANCE] = 0.0
    D = (D + D.T) / 2.0
    np.fill_diagonal(D, 0.0)
    return D


def agglomerate(X: np.ndarray, tau: float) -> list[list[int]]:
    """Average-linkage groups of row indices whose merge distance stays <= tau."""
    n = len(X)
    if n == 0:
        return []
    if n == 1:
        return [[0]]
    Z = linkage(squareform(cosine_distance_matrix(X), checks=False), method="average")
    labels = fcluster(Z, t=tau, criterion="distance")
    groups: dict[int, list[int]] = defaultdict(list)
    for i, lab in enumerate(labels):
        groups[int(lab)].append(i)
    return sorted(groups.values(), key=lambda g: g[0])


def cluster(
    graph: WorkflowGraph,
    kind: NodeKind | str,
    tau: float = DEFAULT_TAU,
    embedder: EmbeddingProvider = DEFAULT_EMBEDDER,
    generator: RepresentativeGenerator = representative_text,
    refine: ClusterRefiner | None = None,
) -> list[Cluster]:
    """Merge near-duplicate enabled nodes of ``kind`` into representatives.

    Returns the clusters formed; ``graph`` is modified in place.  Each
    representative inherits the union of its members' edges (keyed by other
    endpoint and kind, weight = max over the merged edges) and the union of
    their provenance.
    """
    kind = NodeKind(kind)
    if not 0.0 <= tau <= 1.0:
        raise ValidationError(f"tau must lie in [0, 1], got {tau}")
    check_provider(graph, embedder)

    candidates = [n for n in graph.iter_nodes(kind=kind, enabled=True) if not n.is_representative]
    if len(candidates) < 2:
        return []
    X = embed_many(embedder, (n.canonical_text for n in candidates))
    groups = [[candidates[i].id for i in g] for g in agglomerate(X, tau)]
    if refine is not None:
        groups = [sorted(g) for g in refine(groups, graph)]
    groups = [g for g in groups if len(g) >= 2]
    if not groups:
        return []

    clusters: list[Cluster] = []
    for members in groups:
        nodes = [graph.nodes[m] for m in members]
        text = generator([n.canonical_text for n in nodes])
        provenance = sorted({p for n in nodes for p in n.provenance})
        rep_id = graph.add_node(kind, text, provenance)
        rep = graph.nodes[rep_id]
        rep.weight = max(n.weight for n in nodes)
        rep.cluster_members = list(members)
        for n in nodes:
            n.enabled = False
        clusters.append(Cluster(members=list(members), representative=rep_id, threshold=tau, kind=kind))

    _inherit_edges(graph, clusters)
    return clusters


def _inherit_edges(graph: WorkflowGraph, clusters: list[Cluster]) -> None:
    owner = graph.representative_of()
    new_members = {m for c in clusters for m in c.members}

    def lift(nid: NodeId) -> NodeId:
        return owner.get(nid, nid)

    merged: dict[tuple[NodeId, NodeId, EdgeKind], list] = defaultdict(list)
    for c in clusters:
        for m in c.members:
            for eid in graph.incident_edges(m):
                e = graph.edges[eid]
                src, dst = lift(e.src), lift(e.dst)
                if src == dst or not (graph.nodes[src].enabled and graph.nodes[dst].enabled):
                    continue
                merged[(src, dst, e.kind)].append(e)

    stale = [
        e.id
        for m in sorted(new_members)
        for e in (graph.edges[i] for i in graph.incident_edges(m))
        if graph.nodes[e.other(m)].is_representative
    ]
    for (src, dst, kind), edges in sorted(merged.items(), key=lambda kv: (kv[0][0], kv[0][1], kv[0][2].value)):
        weight = max(e.weight for e in edges)
        provenance = sorted({p for e in edges for p in e.provenance})
        synthesized = all(e.synthesized for e in edges)
        existing = graph.find_edge(src, dst, kind)
        if existing is not None:
            ex = graph.edges[existing]
            ex.weight = max(ex.weight, weight)
            ex.provenance = sorted(set(ex.provenance) | set(provenance))
            continue
        eid = graph.add_edge(src, dst, kind, synthesized=synthesized, provenance=provenance, weight=weight)
        if synthesized:
            anchored = [e for e in edges if e.anchors is not None] or edges
            best = max(anchored, key=lambda e: (e.weight, -e.id))
            graph.edges[eid].anchors = best.anchors if best.anchors is not None else (best.src, best.dst)
    # copies that pointed from a now-disabled member at an older representative
    for eid in stale:
        if eid in graph.edges:
            graph.remove_edge(eid)


def decluster(graph: WorkflowGraph) -> int:
    """Delete every representative and re-enable its members.

    Reinforcement accumulated on a representative (its weight above the
    strongest member's) is pushed down onto the members, so a later
    re-cluster recovers it.  Synthesized edges that exist only on
    representatives are re-attached between their recorded anchor nodes, or
    dropped with a warning when no anchor was recorded.  Returns the number
    of representatives removed.
    """
    reps = [n for n in graph.iter_nodes() if n.is_representative]
    if not reps:
        return 0
    owner = graph.representative_of()
    rep_ids = {n.id for n in reps}

    underlying: dict[tuple, list] = defaultdict(list)
    for e in graph.iter_edges():
        if e.src in rep_ids or e.dst in rep_ids:
            continue
        underlying[(owner.get(e.src, e.src), owner.get(e.dst, e.dst), e.kind)].append(e)

    reattach = []
    seen: set[int] = set()
    for rep in reps:
        for eid in graph.incident_edges(rep.id):
            if eid in seen:
                continue
            seen.add(eid)
            e = graph.edges[eid]
            if not (graph.nodes[e.src].enabled and graph.nodes[e.dst].enabled):
                continue
            under = underlying.get((e.src, e.dst, e.kind))
            if under:
                surplus = e.weight - max(u.weight for u in under)
                if surplus > 0:
                    for u in under:
                        u.weight += surplus
            elif e.synthesized:
                reattach.append(e)
            else:
                logger.warning("dropping edge %d with no member counterpart", e.id)

    for rep in reps:
        members = [graph.nodes[m] for m in rep.cluster_members]
        surplus = rep.weight - max(m.weight for m in members)
        for m in members:
            if surplus > 0:
                m.weight += surplus
            m.enabled = True

    for e in reattach:
        anchors = e.anchors or (None, None)
        src, dst = anchors
        ok = (
            src is not None
            and dst is not None
            and src != dst
            and src in graph.nodes
            and dst in graph.nodes
            and src not in rep_ids
            and dst not in rep_ids
        )
        if not ok:
            logger.warning("dropping synthesized edge %d: no participating member recorded", e.id)
            continue
        existing = graph.find_edge(src, dst, e.kind)
        if existing is not None:
            graph.edges[existing].weight = max(graph.edges[existing].weight, e.weight)
            continue
        graph.add_edge(src, dst, e.kind, synthesized=True, provenance=e.provenance, weight=e.weight)

    for rep in reps:
        graph.remove_node(rep.id)
    return len(reps)


def _fragment_parts(fragment) -> tuple[WorkflowGraph, str | None]:
    if isinstance(fragment, WorkflowGraph):
        return fragment, None
    return fragment.graph, getattr(fragment, "trace_id", None)


def incremental_merge(
    graph: WorkflowGraph,
    fragments: Iterable,
    tau: float = DEFAULT_TAU,
    embedder: EmbeddingProvider = DEFAULT_EMBEDDER,
    generator: RepresentativeGenerator = representative_text,
) -> MergeReport:
    """Decluster ``graph``, union the fragments into it, then re-cluster every kind.

    Fragment nodes are identified with existing nodes by exact
    ``(kind, canonical_text)`` match; anything else becomes a new node.
    Fragments that fail validation are skipped and reported.
    """
    if not 0.0 <= tau <= 1.0:
        raise ValidationError(f"tau must lie in [0, 1], got {tau}")
    report = MergeReport()
    decluster(graph)

    by_text: dict[tuple[NodeKind, str], NodeId] = {}
    for n in graph.iter_nodes():
        by_text.setdefault((n.kind, n.canonical_text), n.id)

    for fragment in fragments:
        frag, trace_id = _fragment_parts(fragment)
        violations = frag.validate()
        if violations:
            logger.warning("rejecting fragment %s: %s", trace_id, "; ".join(violations))
            report.rejected.append((trace_id, violations))
            continue
        mapping: dict[NodeId, NodeId] = {}
        for n in frag.iter_nodes():
            key = (n.kind, canonicalize(n.text, graph.rules))
            nid = by_text.get(key)
            if nid is None:
                nid = graph.add_node(n.kind, n.text, n.provenance)
                by_text[key] = nid
                report.added_nodes += 1
            else:
                target = graph.nodes[nid]
                target.provenance = sorted(set(target.provenance) | set(n.provenance))
                report.matched_nodes += 1
            mapping[n.id] = nid
        for e in frag.iter_edges():
            src, dst = mapping[e.src], mapping[e.dst]
            if src == dst:
                continue
            graph.add_edge(src, dst, e.kind, synthesized=e.synthesized, provenance=e.provenance)

    for kind in NodeKind:
        report.clusters.extend(cluster(graph, kind, tau, embedder, generator))
    return report


def enabled_signature(graph: WorkflowGraph) -> list[tuple[str, str]]:
    """Sorted (kind, canonical_text) multiset of enabled nodes."""
    return sorted((n.kind.value, n.canonical_text) for n in graph.iter_nodes(enabled=True))
