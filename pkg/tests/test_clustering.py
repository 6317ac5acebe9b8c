import logging

import numpy as np
import pytest

from atrgraph.clustering import (
    agglomerate,
    cluster,
    cosine_distance_matrix,
    decluster,
    enabled_signature,
    incremental_merge,
    representative_text,
)
from atrgraph.embedding import DEFAULT_EMBEDDER
from atrgraph.graph import ConfigurationError, EdgeKind, NodeKind, ValidationError, WorkflowGraph, validate
from support import edge_set, enabled_ids, random_typed_graph


def _pair_graph():
    g = WorkflowGraph()
    d = g.add_node(NodeKind.DOMAIN, "sqldb")
    p = g.add_node(NodeKind.PROBLEM, "gateway timeout", ["T0"])
    a1 = g.add_node(NodeKind.ACTION, "restart gateway on 10.0.0.1", ["T1"])
    a2 = g.add_node(NodeKind.ACTION, "restart gateway on 10.9.9.9", ["T2"])
    g.add_edge(a1, p, EdgeKind.RESOLVES, provenance=["T1"], weight=2.0)
    g.add_edge(a2, p, EdgeKind.RESOLVES, provenance=["T2"], weight=5.0)
    g.add_edge(a1, d, EdgeKind.BELONGS_TO)
    return g, d, p, a1, a2


def test_representative_text_order():
    texts = ["bb", "a", "dddd", "ccc"]
    assert representative_text(texts) == "dddd | bb | a"
    assert representative_text(["same", "same"]) == "same"
    with pytest.raises(ValueError):
        representative_text([])


def test_identical_canonical_text_merges_at_tau_zero():
    g, d, p, a1, a2 = _pair_graph()
    clusters = cluster(g, NodeKind.ACTION, tau=0.0)
    assert len(clusters) == 1
    rep = g.nodes[clusters[0].representative]
    assert rep.cluster_members == [a1, a2]
    assert not g.nodes[a1].enabled and not g.nodes[a2].enabled
    assert rep.text == "restart gateway on <IP>"
    assert rep.provenance == ["T1", "T2"]
    assert validate(g) == []


def test_representative_inherits_union_with_max_weight():
    g, d, p, a1, a2 = _pair_graph()
    rep = cluster(g, NodeKind.ACTION, tau=0.0)[0].representative
    resolves = g.find_edge(rep, p, EdgeKind.RESOLVES)
    assert g.edges[resolves].weight == 5.0
    assert g.edges[resolves].provenance == ["T1", "T2"]
    # a2 had no BelongsTo edge; the union still gives the representative one
    assert g.find_edge(rep, d, EdgeKind.BELONGS_TO) is not None
    active = {(e.src, e.dst, e.kind) for e in g.active_edges()}
    assert active == {(rep, p, EdgeKind.RESOLVES), (rep, d, EdgeKind.BELONGS_TO)}


def test_far_apart_nodes_unchanged():
    g = WorkflowGraph()
    g.add_node(NodeKind.PROBLEM, "alpha beta")
    g.add_node(NodeKind.PROBLEM, "gamma delta")
    before = g.dumps()
    assert cluster(g, NodeKind.PROBLEM, tau=0.2) == []
    assert g.dumps().replace('"embedding_provider": "token-hash-blake2b-256"', '"embedding_provider": null') == before


def test_kinds_never_mix():
    g = WorkflowGraph()
    g.add_node(NodeKind.PROBLEM, "restart gateway")
    g.add_node(NodeKind.ACTION, "restart gateway")
    for kind in NodeKind:
        assert cluster(g, kind, tau=1.0) == []


@pytest.mark.parametrize("tau", [-0.1, 1.5])
def test_tau_range(tau):
    with pytest.raises(ValidationError):
        cluster(WorkflowGraph(), NodeKind.ACTION, tau=tau)


def test_provider_mismatch():
    g, *_ = _pair_graph()
    g.embedding_provider = "something-else"
    with pytest.raises(ConfigurationError):
        cluster(g, NodeKind.ACTION)


def test_agglomerate_average_linkage_threshold():
    # three points: 0 and 1 close, 2 far away
    X = np.array([[1.0, 0.0], [0.995, 0.0998749], [0.0, 1.0]])
    X /= np.linalg.norm(X, axis=1, keepdims=True)
    assert agglomerate(X, 0.01) == [[0, 1], [2]]
    assert agglomerate(X, 0.001) == [[0], [1], [2]]
    assert agglomerate(X, 1.0) == [[0, 1, 2]]
    D = cosine_distance_matrix(X)
    assert np.allclose(D, D.T) and np.all(np.diag(D) == 0)


def test_round_trip_restores_graph():
    rng = np.random.default_rng(11)
    for _ in range(10):
        g = random_typed_graph(rng)
        nodes, edges = enabled_ids(g), edge_set(g)
        for kind in NodeKind:
            cluster(g, kind, tau=0.3)
        assert validate(g) == []
        decluster(g)
        assert enabled_ids(g) == nodes
        assert edge_set(g) == edges
        assert validate(g) == []


def test_decluster_without_clusters_is_noop(small_graph):
    before = small_graph.dumps()
    assert decluster(small_graph) == 0
    assert small_graph.dumps() == before


def test_decluster_pushes_surplus_down():
    g, d, p, a1, a2 = _pair_graph()
    rep = cluster(g, NodeKind.ACTION, tau=0.0)[0].representative
    g.nodes[rep].weight += 3.0
    e = g.find_edge(rep, p, EdgeKind.RESOLVES)
    g.edges[e].weight += 1.5
    decluster(g)
    assert g.nodes[a1].weight == 4.0 and g.nodes[a2].weight == 4.0
    assert g.edges[g.find_edge(a2, p, EdgeKind.RESOLVES)].weight == 6.5
    # re-clustering recovers the reinforced representative weight
    rep2 = cluster(g, NodeKind.ACTION, tau=0.0)[0].representative
    assert g.nodes[rep2].weight == 4.0
    assert g.edges[g.find_edge(rep2, p, EdgeKind.RESOLVES)].weight == 6.5


def _synth_graph():
    g = WorkflowGraph()
    a1 = g.add_node(NodeKind.ACTION, "check quota on 10.0.0.1")
    a2 = g.add_node(NodeKind.ACTION, "check quota on 10.0.0.2")
    b = g.add_node(NodeKind.ACTION, "scale cluster")
    rep = cluster(g, NodeKind.ACTION, tau=0.0)[0].representative
    return g, a1, a2, b, rep


def test_decluster_reattaches_synthesized_edge_to_anchor():
    g, a1, a2, b, rep = _synth_graph()
    eid = g.add_edge(rep, b, EdgeKind.LEADS_TO, synthesized=True, weight=2.5)
    g.edges[eid].anchors = (a2, b)
    decluster(g)
    e = g.find_edge(a2, b, EdgeKind.LEADS_TO)
    assert e is not None and g.edges[e].synthesized and g.edges[e].weight == 2.5
    assert g.find_edge(a1, b, EdgeKind.LEADS_TO) is None
    assert validate(g) == []


def test_decluster_drops_unanchored_synthesized_edge(caplog):
    g, a1, a2, b, rep = _synth_graph()
    eid = g.add_edge(rep, b, EdgeKind.LEADS_TO, synthesized=True)
    g.edges[eid].anchors = (None, b)
    with caplog.at_level(logging.WARNING):
        decluster(g)
    assert "dropping synthesized edge" in caplog.text
    assert not any(e.kind == EdgeKind.LEADS_TO for e in g.edges.values())


def test_synthesized_edge_survives_merge_cycle():
    g, a1, a2, b, rep = _synth_graph()
    eid = g.add_edge(rep, b, EdgeKind.LEADS_TO, synthesized=True, weight=2.0)
    g.edges[eid].anchors = (a1, b)
    incremental_merge(g, [], tau=0.0)
    reps = [n for n in g.iter_nodes(enabled=True) if n.is_representative]
    assert len(reps) == 1
    e = g.find_edge(reps[0].id, b, EdgeKind.LEADS_TO)
    assert e is not None and g.edges[e].synthesized and g.edges[e].weight == 2.0


def test_tau_monotone_node_count():
    rng = np.random.default_rng(5)
    base = random_typed_graph(rng, n_nodes=60, n_edges=120)
    counts = []
    for tau in (0.0, 0.05, 0.2, 0.4, 0.7, 1.0):
        g = base.copy()
        for kind in NodeKind:
            cluster(g, kind, tau)
        counts.append(sum(1 for _ in g.iter_nodes(enabled=True)))
    assert counts == sorted(counts, reverse=True)


def _fragment(texts_and_kinds, edges):
    f = WorkflowGraph()
    ids = [f.add_node(k, t, ["F"]) for k, t in texts_and_kinds]
    for s, d, kind in edges:
        f.add_edge(ids[s], ids[d], kind, provenance=["F"])
    return f


def test_merge_zero_fragments_is_fixed_point():
    rng = np.random.default_rng(2)
    g = random_typed_graph(rng)
    incremental_merge(g, [], tau=0.2)
    sig = enabled_signature(g)
    incremental_merge(g, [], tau=0.2)
    assert enabled_signature(g) == sig
    assert validate(g) == []


def test_merge_duplicate_fragment_adds_nothing():
    frag = _fragment(
        [(NodeKind.PROBLEM, "disk full on 10.0.0.3"), (NodeKind.ACTION, "purge logs")],
        [(1, 0, EdgeKind.RESOLVES)],
    )
    g = WorkflowGraph()
    incremental_merge(g, [frag], tau=0.01)
    n = sum(1 for _ in g.iter_nodes(enabled=True))
    dup = _fragment(
        [(NodeKind.PROBLEM, "disk full on 10.7.7.7"), (NodeKind.ACTION, "purge logs")],
        [(1, 0, EdgeKind.RESOLVES)],
    )
    report = incremental_merge(g, [dup], tau=0.01)
    assert sum(1 for _ in g.iter_nodes(enabled=True)) == n
    assert report.added_nodes == 0 and report.matched_nodes == 2


def test_merge_disjoint_fragment_adds_its_nodes():
    g = WorkflowGraph()
    incremental_merge(g, [_fragment([(NodeKind.PROBLEM, "alpha beta")], [])], tau=0.01)
    frag = _fragment(
        [(NodeKind.PROBLEM, "gamma delta"), (NodeKind.ACTION, "epsilon zeta")],
        [(1, 0, EdgeKind.RESOLVES)],
    )
    incremental_merge(g, [frag], tau=0.01)
    assert sum(1 for _ in g.iter_nodes(enabled=True)) == 3


def test_merge_rejects_invalid_fragment_and_applies_rest():
    bad = _fragment([(NodeKind.PROBLEM, "x"), (NodeKind.ACTION, "y")], [(1, 0, EdgeKind.RESOLVES)])
    bad.edges[0].kind = EdgeKind.CAUSES  # corrupt: Action -> Problem Causes
    good = _fragment([(NodeKind.PROBLEM, "z")], [])
    g = WorkflowGraph()
    report = incremental_merge(g, [bad, good], tau=0.01)
    assert len(report.rejected) == 1 and report.rejected[0][1]
    assert [n.text for n in g.iter_nodes()] == ["z"]


def test_embeddings_are_of_canonical_text():
    a = DEFAULT_EMBEDDER.embed("restart gateway on <IP>")
    g, *_ = _pair_graph()
    rep = cluster(g, NodeKind.ACTION, tau=0.0)[0].representative
    assert np.allclose(DEFAULT_EMBEDDER.embed(g.nodes[rep].canonical_text), a)


def test_refiner_hook_can_split_clusters():
    g, d, p, a1, a2 = _pair_graph()
    clusters = cluster(g, NodeKind.ACTION, tau=0.0, refine=lambda groups, graph: [[m] for grp in groups for m in grp])
    assert clusters == [] and g.nodes[a1].enabled
