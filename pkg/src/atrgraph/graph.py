"""Typed workflow-graph store.

Nodes are Domains, Problems and Actions; edges are CAUSES, RESOLVES, LEADS_TO
and BELONGS_TO.  Every node and edge carries a non-negative reinforcement
weight.  Node and edge ids are monotone integer surrogates and are never
reused, which also gives a deterministic iteration order.
"""

from __future__ import annotations

import copy
import json
import math
import os
import tempfile
from dataclasses import dataclass, field
from enum import Enum
from typing import Callable, Iterable, Iterator, Sequence

from .masking import DEFAULT_RULES, MaskingRule, canonicalize

SCHEMA_VERSION = 1
PHI0 = 1.0

NodeId = int
EdgeId = int


class GraphError(Exception):
    """Base class for graph-store errors."""


class ValidationError(GraphError, ValueError):
    """Invalid input to a graph operation."""


class SchemaError(GraphError):
    """Edge endpoint types violate the schema."""


class NotFoundError(GraphError, KeyError):
    """A referenced node or edge does not exist."""

    def __str__(self) -> str:  # KeyError quotes its message otherwise
        return str(self.args[0]) if self.args else ""


class ConfigurationError(GraphError):
    """Incompatible configuration (schema version, embedding provider, ...)."""


class NodeKind(str, Enum):
    DOMAIN = "Domain"
    PROBLEM = "Problem"
    ACTION = "Action"


class EdgeKind(str, Enum):
    CAUSES = "Causes"
    RESOLVES = "Resolves"
    LEADS_TO = "LeadsTo"
    BELONGS_TO = "BelongsTo"


# (allowed source kinds, allowed destination kinds)
EDGE_RULES: dict[EdgeKind, tuple[frozenset, frozenset]] = {
    EdgeKind.CAUSES: (frozenset({NodeKind.PROBLEM}), frozenset({NodeKind.PROBLEM})),
    EdgeKind.RESOLVES: (frozenset({NodeKind.ACTION}), frozenset({NodeKind.PROBLEM})),
    EdgeKind.LEADS_TO: (frozenset({NodeKind.ACTION}), frozenset({NodeKind.ACTION})),
    EdgeKind.BELONGS_TO: (
        frozenset({NodeKind.PROBLEM, NodeKind.ACTION}),
        frozenset({NodeKind.DOMAIN}),
    ),
}


def edge_allowed(kind: EdgeKind, src_kind: NodeKind, dst_kind: NodeKind) -> bool:
    srcs, dsts = EDGE_RULES[kind]
    return src_kind in srcs and dst_kind in dsts


@dataclass
class Node:
    id: NodeId
    kind: NodeKind
    text: str
    canonical_text: str
    enabled: bool = True
    weight: float = PHI0
    provenance: list[str] = field(default_factory=list)
    cluster_members: list[NodeId] = field(default_factory=list)

    @property
    def is_representative(self) -> bool:
        return bool(self.cluster_members)

    def to_dict(self) -> dict:
        return {
            "id": self.id,
            "kind": self.kind.value,
            "text": self.text,
            "canonical_text": self.canonical_text,
            "enabled": self.enabled,
            "weight": self.weight,
            "provenance": list(self.provenance),
            "cluster_members": list(self.cluster_members),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Node":
        return cls(
            id=int(d["id"]),
            kind=NodeKind(d["kind"]),
            text=d["text"],
            canonical_text=d["canonical_text"],
            enabled=bool(d["enabled"]),
            weight=float(d["weight"]),
            provenance=list(d.get("provenance", [])),
            cluster_members=[int(m) for m in d.get("cluster_members", [])],
        )


@dataclass
class Edge:
    id: EdgeId
    src: NodeId
    dst: NodeId
    kind: EdgeKind
    weight: float = PHI0
    synthesized: bool = False
    provenance: list[str] = field(default_factory=list)
    # For synthesized edges touching a representative: the concrete member
    # (or the node itself) at each end that took part in the trajectory.
    anchors: tuple[NodeId | None, NodeId | None] | None = None

    def other(self, node_id: NodeId) -> NodeId:
        return self.dst if node_id == self.src else self.src

    def to_dict(self) -> dict:
        d = {
            "id": self.id,
            "src": self.src,
            "dst": self.dst,
            "kind": self.kind.value,
            "weight": self.weight,
            "synthesized": self.synthesized,
            "provenance": list(self.provenance),
        }
        if self.anchors is not None:
            d["anchors"] = list(self.anchors)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "Edge":
        anchors = d.get("anchors")
        return cls(
            id=int(d["id"]),
            src=int(d["src"]),
            dst=int(d["dst"]),
            kind=EdgeKind(d["kind"]),
            weight=float(d["weight"]),
            synthesized=bool(d.get("synthesized", False)),
            provenance=list(d.get("provenance", [])),
            anchors=None if anchors is None else (anchors[0], anchors[1]),
        )


@dataclass
class Subgraph:
    """Bounded neighborhood returned by retrieval.

    ``parent_edge`` maps every non-root node to the edge through which the
    expansion first reached it, so callers can recover a root-to-node walk.
    """

    roots: list[NodeId]
    nodes: list[NodeId]
    edges: list[EdgeId]
    weights: dict[NodeId, float]
    parent_edge: dict[NodeId, EdgeId] = field(default_factory=dict)

    def __contains__(self, node_id: NodeId) -> bool:
        return node_id in self.weights

    def __len__(self) -> int:
        return len(self.nodes)

    def path_to(self, graph: "WorkflowGraph", node_id: NodeId) -> list[tuple[NodeId, EdgeId | None]]:
        """Walk from the discovering root to ``node_id`` as (node, edge-in) pairs."""
        path: list[tuple[NodeId, EdgeId | None]] = []
        cur = node_id
        while cur in self.parent_edge:
            eid = self.parent_edge[cur]
            path.append((cur, eid))
            cur = graph.edges[eid].other(cur)
        path.append((cur, None))
        path.reverse()
        return path

    def to_text(self, graph: "WorkflowGraph") -> str:
        """Plain-text context for an agent: one line per node (with its weight), then one per edge.

        Node lines read ``P12 <canonical text> (w=1.5)`` with the kind's
        initial letter before the id; edge lines read ``7 Resolves 12``.
        """
        lines = []
        for nid in self.nodes:
            n = graph.nodes[nid]
            lines.append(f"{n.kind.value[0]}{nid} {n.canonical_text} (w={n.weight:.3g})")
        for eid in self.edges:
            e = graph.edges[eid]
            lines.append(f"{e.src} {e.kind.value} {e.dst}")
        return "\n".join(lines)


EdgeSampler = Callable[[list[Edge]], list[Edge]]


def take_all(candidates: list[Edge]) -> list[Edge]:
    return list(candidates)


class WorkflowGraph:
    """Typed multigraph of domains, problems and actions.

    Mutating operations need exclusive access; read-only queries may run
    concurrently.
    """

    def __init__(self, phi0: float = PHI0, rules: Sequence[MaskingRule] = DEFAULT_RULES):
        if phi0 < 0:
            raise ValidationError("phi0 must be non-negative")
        self.phi0 = float(phi0)
        self.rules: tuple[MaskingRule, ...] = tuple(rules)
        self.nodes: dict[NodeId, Node] = {}
        self.edges: dict[EdgeId, Edge] = {}
        self.out_edges: dict[NodeId, set[EdgeId]] = {}
        self.in_edges: dict[NodeId, set[EdgeId]] = {}
        self._edge_key: dict[tuple[NodeId, NodeId, EdgeKind], EdgeId] = {}
        self.next_node_id = 0
        self.next_edge_id = 0
        self.embedding_provider: str | None = None

    # -- construction ---------------------------------------------------

    def add_node(self, kind: NodeKind | str, text: str, provenance: Iterable[str] = ()) -> NodeId:
        kind = NodeKind(kind)
        if not text or not text.strip():
            raise ValidationError("node text must be non-empty")
        nid = self.next_node_id
        self.next_node_id += 1
        self.nodes[nid] = Node(
            id=nid,
            kind=kind,
            text=text,
            canonical_text=canonicalize(text, self.rules),
            weight=self.phi0,
            provenance=sorted(set(provenance)),
        )
        self.out_edges[nid] = set()
        self.in_edges[nid] = set()
        return nid

    def add_edge(
        self,
        src: NodeId,
        dst: NodeId,
        kind: EdgeKind | str,
        synthesized: bool = False,
        provenance: Iterable[str] = (),
        weight: float | None = None,
    ) -> EdgeId:
        """Insert an edge, or merge provenance into the existing (src, dst, kind) edge."""
        kind = EdgeKind(kind)
        for nid in (src, dst):
            if nid not in self.nodes:
                raise NotFoundError(f"node {nid} does not exist")
        if src == dst:
            raise SchemaError(f"self-loop on node {src} is not allowed")
        s, d = self.nodes[src], self.nodes[dst]
        if not edge_allowed(kind, s.kind, d.kind):
            raise SchemaError(f"{kind.value} edge not allowed from {s.kind.value} to {d.kind.value}")
        key = (src, dst, kind)
        existing = self._edge_key.get(key)
        if existing is not None:
            e = self.edges[existing]
            e.provenance = sorted(set(e.provenance) | set(provenance))
            return existing
        if weight is not None and weight < 0:
            raise ValidationError("edge weight must be non-negative")
        eid = self.next_edge_id
        self.next_edge_id += 1
        self.edges[eid] = Edge(
            id=eid,
            src=src,
            dst=dst,
            kind=kind,
            weight=self.phi0 if weight is None else float(weight),
            synthesized=synthesized,
            provenance=sorted(set(provenance)),
        )
        self._edge_key[key] = eid
        self.out_edges[src].add(eid)
        self.in_edges[dst].add(eid)
        return eid

    def remove_edge(self, eid: EdgeId) -> None:
        if eid not in self.edges:
            raise NotFoundError(f"edge {eid} does not exist")
        e = self.edges.pop(eid)
        self._edge_key.pop((e.src, e.dst, e.kind), None)
        self.out_edges.get(e.src, set()).discard(eid)
        self.in_edges.get(e.dst, set()).discard(eid)

    def remove_node(self, nid: NodeId) -> None:
        """Hard-delete a node and its incident edges.

        Cluster members and representatives with disabled members are
        refused; de-cluster first.
        """
        if nid not in self.nodes:
            raise NotFoundError(f"node {nid} does not exist")
        n = self.nodes[nid]
        if n.is_representative and any(not self.nodes[m].enabled for m in n.cluster_members if m in self.nodes):
            raise ValidationError(f"node {nid} represents disabled members; decluster first")
        if nid in self.representative_of():
            raise ValidationError(f"node {nid} is a cluster member; decluster first")
        for eid in sorted(self.out_edges[nid] | self.in_edges[nid]):
            self.remove_edge(eid)
        del self.nodes[nid]
        del self.out_edges[nid]
        del self.in_edges[nid]

    # -- queries --------------------------------------------------------

    def node(self, nid: NodeId) -> Node:
        try:
            return self.nodes[nid]
        except KeyError:
            raise NotFoundError(f"node {nid} does not exist") from None

    def find_edge(self, src: NodeId, dst: NodeId, kind: EdgeKind | str) -> EdgeId | None:
        return self._edge_key.get((src, dst, EdgeKind(kind)))

    def edges_between(self, a: NodeId, b: NodeId) -> list[EdgeId]:
        ids = (self.out_edges.get(a, set()) & self.in_edges.get(b, set())) | (
            self.out_edges.get(b, set()) & self.in_edges.get(a, set())
        )
        return sorted(ids)

    def incident_edges(self, nid: NodeId) -> list[EdgeId]:
        return sorted(self.out_edges[nid] | self.in_edges[nid])

    def iter_nodes(self, kind: NodeKind | None = None, enabled: bool | None = None) -> Iterator[Node]:
        for nid in sorted(self.nodes):
            n = self.nodes[nid]
            if kind is not None and n.kind != kind:
                continue
            if enabled is not None and n.enabled != enabled:
                continue
            yield n

    def iter_edges(self) -> Iterator[Edge]:
        for eid in sorted(self.edges):
            yield self.edges[eid]

    def active_edges(self) -> list[Edge]:
        """Edges whose endpoints are both enabled."""
        return [
            e for e in self.iter_edges() if self.nodes[e.src].enabled and self.nodes[e.dst].enabled
        ]

    def representative_of(self) -> dict[NodeId, NodeId]:
        """Map each cluster member to its representative."""
        owner: dict[NodeId, NodeId] = {}
        for n in self.iter_nodes():
            for m in n.cluster_members:
                owner[m] = n.id
        return owner

    def neighborhood(
        self,
        roots: Iterable[NodeId],
        m: int,
        sampler: EdgeSampler = take_all,
        direction: str = "out",
        stop_kinds: Iterable[NodeKind] = (),
    ) -> Subgraph:
        """Expand ``roots`` up to ``m`` hops and return the induced subgraph.

        At every frontier node the candidate edges (to enabled, not yet
        included nodes) are handed to ``sampler``, which picks the ones to
        follow.  ``direction="both"`` also follows incoming edges; nodes of a
        kind in ``stop_kinds`` are included but never expanded.
        """
        if m < 0:
            raise ValidationError("hop count must be >= 0")
        if direction not in ("out", "both"):
            raise ValidationError(f"unknown direction {direction!r}")
        stop = frozenset(stop_kinds)
        roots = sorted(set(roots))
        for r in roots:
            n = self.node(r)
            if not n.enabled:
                raise ValidationError(f"root {r} is disabled")

        included: set[NodeId] = set(roots)
        parent_edge: dict[NodeId, EdgeId] = {}
        frontier = list(roots)
        for _ in range(m):
            nxt: list[NodeId] = []
            for u in frontier:
                if self.nodes[u].kind in stop:
                    continue
                ids = self.out_edges[u] if direction == "out" else self.out_edges[u] | self.in_edges[u]
                candidates = []
                for eid in sorted(ids):
                    e = self.edges[eid]
                    v = e.other(u)
                    if v not in included and self.nodes[v].enabled:
                        candidates.append(e)
                if not candidates:
                    continue
                for e in sampler(candidates):
                    v = e.other(u)
                    if v in included:
                        continue
                    included.add(v)
                    parent_edge[v] = e.id
                    nxt.append(v)
            frontier = nxt
            if not frontier:
                break

        node_ids = sorted(included)
        edge_ids = sorted(
            eid
            for nid in node_ids
            for eid in self.out_edges[nid]
            if self.edges[eid].dst in included
        )
        return Subgraph(
            roots=roots,
            nodes=node_ids,
            edges=edge_ids,
            weights={nid: self.nodes[nid].weight for nid in node_ids},
            parent_edge=parent_edge,
        )

    # -- diagnostics ----------------------------------------------------

    def validate(self) -> list[str]:
        return validate(self)

    # -- persistence ----------------------------------------------------

    def copy(self) -> "WorkflowGraph":
        return copy.deepcopy(self)

    def reset_weights(self, value: float | None = None) -> None:
        w = self.phi0 if value is None else value
        for n in self.nodes.values():
            n.weight = w
        for e in self.edges.values():
            e.weight = w

    def to_dict(self) -> dict:
        return {
            "meta": {
                "schema_version": SCHEMA_VERSION,
                "phi0": self.phi0,
                "next_node_id": self.next_node_id,
                "next_edge_id": self.next_edge_id,
                "embedding_provider": self.embedding_provider,
                "masking_rules": [[r.pattern, r.replacement] for r in self.rules],
            },
            "nodes": [n.to_dict() for n in self.iter_nodes()],
            "edges": [e.to_dict() for e in self.iter_edges()],
        }

    @classmethod
    def from_dict(cls, data: dict) -> "WorkflowGraph":
        meta = data["meta"]
        version = meta.get("schema_version")
        if version != SCHEMA_VERSION:
            raise ConfigurationError(
                f"graph schema version {version!r} is not supported (expected {SCHEMA_VERSION})"
            )
        rules = [MaskingRule(p, r) for p, r in meta.get("masking_rules", [])] or DEFAULT_RULES
        g = cls(phi0=meta["phi0"], rules=rules)
        g.embedding_provider = meta.get("embedding_provider")
        for nd in data["nodes"]:
            n = Node.from_dict(nd)
            g.nodes[n.id] = n
            g.out_edges[n.id] = set()
            g.in_edges[n.id] = set()
        for ed in data["edges"]:
            e = Edge.from_dict(ed)
            g.edges[e.id] = e
            g._edge_key[(e.src, e.dst, e.kind)] = e.id
            g.out_edges.setdefault(e.src, set()).add(e.id)
            g.in_edges.setdefault(e.dst, set()).add(e.id)
        g.next_node_id = int(meta["next_node_id"])
        g.next_edge_id = int(meta["next_edge_id"])
        return g

    def dumps(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=1) + "\n"

    @classmethod
    def loads(cls, text: str) -> "WorkflowGraph":
        return cls.from_dict(json.loads(text))

    def save(self, path: str | os.PathLike) -> None:
        atomic_write(path, self.dumps())

    @classmethod
    def load(cls, path: str | os.PathLike) -> "WorkflowGraph":
        with open(path, encoding="utf-8") as fh:
            return cls.loads(fh.read())

    def summary(self) -> dict:
        by_kind = {k.value: 0 for k in NodeKind}
        enabled_by_kind = {k.value: 0 for k in NodeKind}
        for n in self.nodes.values():
            by_kind[n.kind.value] += 1
            if n.enabled:
                enabled_by_kind[n.kind.value] += 1
        edges_by_kind = {k.value: 0 for k in EdgeKind}
        for e in self.edges.values():
            edges_by_kind[e.kind.value] += 1
        return {
            "nodes": len(self.nodes),
            "enabled_nodes": sum(enabled_by_kind.values()),
            "disabled_nodes": len(self.nodes) - sum(enabled_by_kind.values()),
            "representatives": sum(1 for n in self.nodes.values() if n.is_representative),
            "nodes_by_kind": by_kind,
            "enabled_by_kind": enabled_by_kind,
            "edges": len(self.edges),
            "active_edges": len(self.active_edges()),
            "edges_by_kind": edges_by_kind,
            "synthesized_edges": sum(1 for e in self.edges.values() if e.synthesized),
        }


def validate(graph: WorkflowGraph) -> list[str]:
    """Return every invariant violation found in ``graph`` (empty when well-formed)."""
    problems: list[str] = []
    nodes = graph.nodes
    seen_keys: dict[tuple, EdgeId] = {}
    for e in graph.iter_edges():
        if e.src not in nodes or e.dst not in nodes:
            problems.append(f"dangling edge {e.id}: {e.src}->{e.dst}")
            continue
        if e.src == e.dst:
            problems.append(f"self-loop edge {e.id} on node {e.src}")
        if not edge_allowed(e.kind, nodes[e.src].kind, nodes[e.dst].kind):
            problems.append(
                f"type mismatch on edge {e.id}: {e.kind.value} "
                f"{nodes[e.src].kind.value}->{nodes[e.dst].kind.value}"
            )
        key = (e.src, e.dst, e.kind)
        if key in seen_keys:
            problems.append(f"duplicate edge {e.id} (same as {seen_keys[key]})")
        seen_keys[key] = e.id
        if not (e.weight >= 0 and math.isfinite(e.weight)):
            problems.append(f"invalid weight on edge {e.id}: {e.weight}")
        if e.id not in graph.out_edges.get(e.src, ()) or e.id not in graph.in_edges.get(e.dst, ()):
            problems.append(f"adjacency missing edge {e.id}")
        if graph._edge_key.get(key) != e.id:
            problems.append(f"edge index inconsistent for edge {e.id}")

    for table, name in ((graph.out_edges, "outgoing"), (graph.in_edges, "incoming")):
        for nid, ids in table.items():
            if nid not in nodes:
                problems.append(f"{name} adjacency for unknown node {nid}")
            for eid in ids:
                e = graph.edges.get(eid)
                if e is None or (e.src if name == "outgoing" else e.dst) != nid:
                    problems.append(f"{name} adjacency of node {nid} lists stale edge {eid}")

    owner: dict[NodeId, NodeId] = {}
    for n in graph.iter_nodes():
        if not (n.weight >= 0 and math.isfinite(n.weight)):
            problems.append(f"invalid weight on node {n.id}: {n.weight}")
        if n.id >= graph.next_node_id:
            problems.append(f"node id {n.id} beyond id counter")
        if not n.is_representative:
            continue
        if not n.enabled:
            problems.append(f"cluster inconsistency: representative {n.id} is disabled")
        if len(n.cluster_members) < 2:
            problems.append(f"cluster inconsistency: representative {n.id} has < 2 members")
        for m in n.cluster_members:
            if m in owner:
                problems.append(f"cluster inconsistency: node {m} is in clusters {owner[m]} and {n.id}")
            owner[m] = n.id
            member = nodes.get(m)
            if member is None:
                problems.append(f"cluster inconsistency: representative {n.id} lists missing node {m}")
                continue
            if member.enabled:
                problems.append(f"cluster inconsistency: member {m} of {n.id} is enabled")
            if member.kind != n.kind:
                problems.append(f"cluster inconsistency: member {m} kind differs from {n.id}")
            if member.is_representative:
                problems.append(f"cluster inconsistency: member {m} is itself a representative")
    for n in graph.iter_nodes(enabled=False):
        if n.id not in owner:
            problems.append(f"cluster inconsistency: disabled node {n.id} has no representative")
    return problems


def _umask() -> int:
    mask = os.umask(0)
    os.umask(mask)
    return mask


def atomic_write(path: str | os.PathLike, text: str) -> None:
    """Write ``text`` to ``path`` via a temp file and rename."""
    path = os.fspath(path)
    directory = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-", suffix=os.path.basename(path))
    try:
        with os.fdopen(fd, "w", encoding="utf-8") as fh:
            fh.write(text)
        os.chmod(tmp, 0o666 & ~_umask())
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
