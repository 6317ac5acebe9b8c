"""Random graph builders and operation sequences shared by the tests."""

from __future__ import annotations

import numpy as np

from atrgraph.graph import EDGE_RULES, EdgeKind, GraphError, NodeKind, WorkflowGraph

WORDS = [
    "gateway", "replica", "timeout", "restart", "login", "quota", "cache", "flush",
    "disk", "latency", "failover", "rotate", "certificate", "queue", "drain", "index",
]


def random_text(rng: np.random.Generator, n_words: int = 3) -> str:
    return " ".join(WORDS[i] for i in rng.integers(0, len(WORDS), n_words))


def valid_endpoint_kinds(kind: EdgeKind) -> tuple[set[NodeKind], set[NodeKind]]:
    srcs, dsts = EDGE_RULES[kind]
    return set(srcs), set(dsts)


def random_operation(g: WorkflowGraph, rng: np.random.Generator) -> None:
    """Apply one random graph-core operation; invalid requests must raise and leave ``g`` untouched."""
    op = rng.choice(["node", "node", "edge", "edge", "edge", "rm_edge", "rm_node", "weight"])
    ids = sorted(g.nodes)
    try:
        if op == "node" or not ids:
            kind = list(NodeKind)[int(rng.integers(3))]
            g.add_node(kind, random_text(rng), [f"T{int(rng.integers(100))}"])
        elif op == "edge":
            # half the time use ids that may not exist or endpoints of the wrong kind
            src = int(rng.choice(ids)) if rng.random() < 0.9 else int(rng.integers(0, len(ids) + 5))
            dst = int(rng.choice(ids))
            kind = list(EdgeKind)[int(rng.integers(4))]
            g.add_edge(src, dst, kind, provenance=[f"T{int(rng.integers(100))}"])
        elif op == "rm_edge" and g.edges:
            g.remove_edge(int(rng.choice(sorted(g.edges))))
        elif op == "rm_node":
            g.remove_node(int(rng.choice(ids)))
        elif op == "weight" and g.edges:
            g.edges[int(rng.choice(sorted(g.edges)))].weight += float(rng.random())
    except GraphError:
        pass


def random_typed_graph(rng: np.random.Generator, n_nodes: int = 30, n_edges: int = 60, vocab: int = 8) -> WorkflowGraph:
    """Schema-valid graph whose node texts repeat, so clustering has duplicates to merge."""
    g = WorkflowGraph()
    texts = {k: [random_text(rng, int(rng.integers(2, 5))) for _ in range(vocab)] for k in NodeKind}
    ids = {k: [] for k in NodeKind}
    for k in (NodeKind.DOMAIN,):
        ids[k].append(g.add_node(k, texts[k][0]))
    for _ in range(n_nodes):
        k = NodeKind.PROBLEM if rng.random() < 0.5 else NodeKind.ACTION
        text = texts[k][int(rng.integers(vocab))]
        if rng.random() < 0.3:
            text += f" at 10.0.{int(rng.integers(256))}.{int(rng.integers(256))}"
        ids[k].append(g.add_node(k, text, [f"T{int(rng.integers(20))}"]))
    for _ in range(n_edges):
        kind = list(EdgeKind)[int(rng.integers(4))]
        srcs, dsts = valid_endpoint_kinds(kind)
        src_pool = [i for k in srcs for i in ids[k]]
        dst_pool = [i for k in dsts for i in ids[k]]
        if not src_pool or not dst_pool:
            continue
        s, d = int(rng.choice(src_pool)), int(rng.choice(dst_pool))
        if s != d:
            g.add_edge(s, d, kind, provenance=[f"T{int(rng.integers(20))}"], weight=float(1 + rng.integers(0, 3)))
    return g


def edge_set(g: WorkflowGraph) -> set[tuple]:
    return {(e.id, e.src, e.dst, e.kind, e.weight, e.synthesized) for e in g.edges.values()}


def enabled_ids(g: WorkflowGraph) -> set[int]:
    return {n.id for n in g.iter_nodes(enabled=True)}
