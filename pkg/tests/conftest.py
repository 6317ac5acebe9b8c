import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from atrgraph.corpus import build_graph  # noqa: E402
from atrgraph.graph import EdgeKind, NodeKind, WorkflowGraph  # noqa: E402
from atrgraph.harness import generate_corpus  # noqa: E402

DATA = Path(__file__).resolve().parent.parent / "data"


@pytest.fixture(scope="session")
def data_dir() -> Path:
    return DATA


@pytest.fixture(scope="session")
def desk():
    """The seeded desk-scale corpus and its ground truth."""
    return generate_corpus(seed=0)


@pytest.fixture
def desk_graph(desk):
    corpus, _ = desk
    graph, _ = build_graph(corpus, tau=0.01)
    return graph


@pytest.fixture
def small_graph():
    """sqldb <- {P0 -> P1}, A0 resolves P0, A1 resolves P1, A0 -> A1."""
    g = WorkflowGraph()
    d = g.add_node(NodeKind.DOMAIN, "sqldb")
    p0 = g.add_node(NodeKind.PROBLEM, "gateway timeout on host 10.0.0.1", ["T1"])
    p1 = g.add_node(NodeKind.PROBLEM, "replica failover loop", ["T1"])
    a0 = g.add_node(NodeKind.ACTION, "restart gateway timeout handler", ["T1"])
    a1 = g.add_node(NodeKind.ACTION, "drain replica primary", ["T1"])
    g.add_edge(p0, p1, EdgeKind.CAUSES, provenance=["T1"])
    g.add_edge(a0, p0, EdgeKind.RESOLVES, provenance=["T1"])
    g.add_edge(a1, p1, EdgeKind.RESOLVES, provenance=["T1"])
    g.add_edge(a0, a1, EdgeKind.LEADS_TO, provenance=["T1"])
    for n in (p0, p1, a0, a1):
        g.add_edge(n, d, EdgeKind.BELONGS_TO, provenance=["T1"])
    return g



_CRITERIA: dict[int, dict] = {}


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    marker = item.get_closest_marker("acceptance")
    if marker is None or rep.when == "teardown":
        return
    number, name = marker.args
    entry = _CRITERIA.setdefault(number, {"name": name, "verdicts": [], "secs": 0.0})
    entry["secs"] += rep.duration
    if rep.when == "setup" and rep.passed:
        return
    if rep.passed:
        entry["verdicts"].append("PASS")
    elif hasattr(rep, "wasxfail"):
        entry["verdicts"].append("FAIL (known, see decisions ledger)")
    else:
        entry["verdicts"].append("FAIL")


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_CRITERIA):
        e = _CRITERIA[number]
        failed = [v for v in e["verdicts"] if v != "PASS"]
        verdict = failed[0] if failed else "PASS"
        terminalreporter.write_line(f"criterion {number:>2} {e['name']}: {verdict} ({e['secs']:.2f}s)")
