import json

import numpy as np

import pytest

from atrgraph.clustering import enabled_signature
from atrgraph.embedding import DEFAULT_EMBEDDER
from atrgraph.corpus import (
    CorpusConfig,
    Trace,
    TraceEntry,
    TraceParseError,
    build_graph,
    dump_corpus,
    extract_workflow,
    load_corpus,
    parse_corpus,
    parse_trace,
)
from atrgraph.graph import EdgeKind, NodeKind
from atrgraph.harness import generate_corpus


def _trace(tid="T1", body=None, **extra):
    d = {"schema": 1, "trace_id": tid, "title": "t", "body": [{"kind": "problem", "text": "disk full"}] if body is None else body}
    d.update(extra)
    return json.dumps(d)


@pytest.mark.parametrize(
    "line",
    [
        "{not json",
        "[1, 2]",
        _trace(schema=2),
        json.dumps({"schema": 1, "body": [{"kind": "problem", "text": "x"}]}),
        _trace(body=[]),
        _trace(body=[{"kind": "rumor", "text": "x"}]),
        _trace(body=[{"kind": "problem", "text": "   "}]),
        _trace(body=[{"kind": "action", "text": "x", "refs": [0]}]),
        _trace(body=[{"kind": "problem", "text": "x"}, {"kind": "action", "text": "y", "refs": [1]}]),
    ],
)
def test_malformed_traces_rejected(line):
    with pytest.raises(TraceParseError):
        parse_trace(line)


def test_corpus_errors_carry_line_numbers():
    text = "\n".join([_trace("A"), "garbage", "", _trace("A"), _trace("B")])
    traces, errors = parse_corpus(text)
    assert [t.trace_id for t in traces] == ["A", "B"]
    assert [e.line for e in errors] == [2, 4]
    assert "duplicate" in str(errors[1])


def test_corpus_round_trip(desk, tmp_path):
    traces, _ = desk
    path = tmp_path / "c.jsonl"
    path.write_text(dump_corpus(traces[:20]))
    loaded, errors = load_corpus(path)
    assert not errors
    assert dump_corpus(loaded) == dump_corpus(traces[:20])


def test_extraction_rules():
    t = Trace(
        "T",
        "title",
        [
            TraceEntry("problem", "disk full on 10.0.0.7"),
            TraceEntry("noise", "heartbeat ok"),
            TraceEntry("problem", "replica lag"),
            TraceEntry("action", "purge disk logs", (0,)),
            TraceEntry("observation", "freed space"),
            TraceEntry("action", "resync replica"),
            TraceEntry("action", "purge disk logs"),
        ],
        domain="storage",
    )
    g = extract_workflow(t).graph
    assert g.validate() == []
    by_text = {n.canonical_text: n.id for n in g.iter_nodes()}
    assert set(by_text) == {"storage", "disk full on <IP>", "replica lag", "purge disk logs", "resync replica"}
    disk, lag = by_text["disk full on <IP>"], by_text["replica lag"]
    purge, resync = by_text["purge disk logs"], by_text["resync replica"]
    assert g.find_edge(disk, lag, EdgeKind.CAUSES) is not None
    assert g.find_edge(purge, disk, EdgeKind.RESOLVES) is not None
    assert g.find_edge(resync, lag, EdgeKind.RESOLVES) is not None
    assert g.find_edge(purge, resync, EdgeKind.LEADS_TO) is not None
    assert g.find_edge(resync, purge, EdgeKind.LEADS_TO) is not None
    assert all(n.provenance == ["T"] for n in g.iter_nodes())
    belongs = [e for e in g.iter_edges() if e.kind == EdgeKind.BELONGS_TO]
    assert len(belongs) == 4


def test_extraction_falls_back_to_config_domain():
    t = Trace("T", "", [TraceEntry("problem", "x")])
    g = extract_workflow(t, CorpusConfig(domain="fallback")).graph
    assert [n.text for n in g.iter_nodes() if n.kind == NodeKind.DOMAIN] == ["fallback"]


def test_noise_only_trace_yields_empty_fragment():
    ex = extract_workflow(Trace("T", "", [TraceEntry("noise", "ping")]))
    assert ex.empty and ex.warnings


def _leaves(g):
    return [n for n in g.iter_nodes() if n.kind != NodeKind.DOMAIN and not n.cluster_members]


def test_generator_recovered_without_paraphrase_or_noise():
    traces, gt = generate_corpus(seed=3, n_traces=120, noise_rate=0.0, paraphrase_rate=0.0)
    g, report = build_graph(traces, tau=0.0)
    assert g.validate() == []
    assert not report.rejected
    used = {k for k in gt.used_ids() if gt.nodes[k].kind != "Domain"}
    leaves = _leaves(g)
    assert len(leaves) == len(used)
    assert {gt.lookup(n) for n in leaves} == used
    # tau=0 only merges texts whose hashed embeddings coincide exactly
    for n in g.iter_nodes(enabled=True):
        if n.cluster_members:
            vecs = DEFAULT_EMBEDDER.embed_many([g.nodes[m].canonical_text for m in n.cluster_members])
            assert np.allclose(vecs, vecs[0])


def test_guid_paraphrases_collapse_exactly():
    traces, gt = generate_corpus(seed=1, n_traces=80, noise_rate=0.0, paraphrase_rate=1.0, paraphrase_kinds=("guid",))
    g, _ = build_graph(traces, tau=0.0)
    used = {k for k in gt.used_ids() if gt.nodes[k].kind != "Domain"}
    leaves = _leaves(g)
    assert len(leaves) == len(used)
    assert all(gt.lookup(n) is not None for n in leaves)


def test_incremental_build_matches_batch(desk):
    traces, _ = desk
    traces = traces[:80]
    batch, _ = build_graph(traces, tau=0.2)
    inc, _ = build_graph(traces[:50], tau=0.2)
    build_graph(traces[50:], tau=0.2, graph=inc)
    assert enabled_signature(inc) == enabled_signature(batch)
    assert inc.validate() == []


def test_duplicate_corpus_adds_nothing(desk_graph, desk):
    traces, _ = desk
    before = enabled_signature(desk_graph)
    edges = sorted((e.src, e.dst, e.kind.value) for e in desk_graph.active_edges())
    g = desk_graph.copy()
    report = build_graph(traces, tau=0.01, graph=g)[1]
    assert report.added_nodes == 0
    assert enabled_signature(g) == before
    assert len(list(g.active_edges())) == len(edges)


def test_empty_corpus_builds_empty_graph():
    g, report = build_graph([], tau=0.1)
    assert not g.nodes and not report.rejected
