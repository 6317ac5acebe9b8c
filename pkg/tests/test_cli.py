import json
import re
import shutil

import pytest

from atrgraph.cli import EXIT_DATA, EXIT_OK, EXIT_USAGE, main
from atrgraph.corpus import dump_corpus
from atrgraph.harness import generate_corpus

SMALL = ["--problems", "20", "--actions", "40", "--traces", "60", "--incidents", "6"]


@pytest.fixture(autouse=True)
def _no_env_config(monkeypatch):
    monkeypatch.delenv("ATRGRAPH_CONFIG", raising=False)


@pytest.fixture
def workspace(tmp_path):
    assert main(["generate", "--seed", "4", "--out", str(tmp_path / "c.jsonl"), "--truth", str(tmp_path / "t.json"), *SMALL]) == 0
    assert main(["build", str(tmp_path / "c.jsonl"), "--out", str(tmp_path / "g.json")]) == 0
    return tmp_path


def run(capsys, *argv):
    code = main(list(argv))
    out, err = capsys.readouterr()
    return code, out, err


def test_build_is_byte_deterministic(workspace, capsys):
    a, b = workspace / "a.json", workspace / "b.json"
    for p in (a, b):
        assert run(capsys, "build", str(workspace / "c.jsonl"), "--out", str(p))[0] == EXIT_OK
    assert a.read_bytes() == b.read_bytes()


def test_larger_tau_never_grows_graph(workspace, capsys):
    sizes = {}
    for tau in ("0.01", "0.4"):
        code, out, _ = run(capsys, "build", str(workspace / "c.jsonl"), "--tau", tau, "--out", str(workspace / f"g{tau}.json"))
        assert code == EXIT_OK
        summary = json.loads(out)
        assert summary["tau"] == float(tau)
        sizes[tau] = summary["graph"]["enabled_nodes"]
    assert sizes["0.4"] <= sizes["0.01"]


def test_merge_empty_and_duplicate(workspace, capsys):
    g = workspace / "g.json"
    (workspace / "empty.jsonl").write_text("")
    code, out, _ = run(capsys, "merge", str(g), str(workspace / "empty.jsonl"))
    rep = json.loads(out)
    assert code == EXIT_OK and rep["added_nodes"] == 0
    assert rep["enabled_nodes_before"] == rep["enabled_nodes_after"]
    code, out, _ = run(capsys, "merge", str(g), str(workspace / "c.jsonl"))
    rep = json.loads(out)
    assert code == EXIT_OK and rep["added_nodes"] == 0
    assert rep["enabled_nodes_before"] == rep["enabled_nodes_after"]


def test_merge_new_traces_grows_graph(workspace, capsys):
    more, _ = generate_corpus(seed=9, n_problems=20, n_actions=40, n_traces=30)
    (workspace / "more.jsonl").write_text(dump_corpus(more))
    code, out, _ = run(capsys, "merge", str(workspace / "g.json"), str(workspace / "more.jsonl"))
    rep = json.loads(out)
    assert code == EXIT_OK and rep["added_nodes"] > 0


def test_schema_mismatch_is_data_error(workspace, capsys):
    g = workspace / "g.json"
    doc = json.loads(g.read_text())
    doc["meta"]["schema_version"] = 999
    g.write_text(json.dumps(doc))
    code, _, err = run(capsys, "merge", str(g), str(workspace / "c.jsonl"))
    assert code == EXIT_DATA and "schema" in err


def test_traverse_fixture(data_dir, tmp_path, capsys):
    traj = tmp_path / "traj.jsonl"
    code, out, _ = run(
        capsys,
        "traverse",
        str(data_dir / "fixture_graph.json"),
        "--task",
        "replica login failures after certificate rotation",
        "--executor",
        str(data_dir / "fixture_observations.json"),
        "--out",
        str(traj),
    )
    assert code == EXIT_OK
    assert "rotate replica login certificate" in out
    assert "mitigated: certificate rotated, replica logins succeed" in out
    lines = [json.loads(x) for x in traj.read_text().splitlines()]
    assert lines[0]["task"] == "replica login failures after certificate rotation"


def test_traverse_unknown_topic(data_dir, tmp_path, capsys):
    code, out, _ = run(
        capsys, "traverse", str(data_dir / "fixture_graph.json"), "--task", "quantum flux", "--out", str(tmp_path / "t.jsonl")
    )
    assert code == EXIT_OK and "No actionable path found" in out


def test_traverse_same_seed_same_output(workspace, capsys):
    outs = []
    for name in ("a", "b"):
        p = workspace / f"{name}.jsonl"
        code, report, _ = run(capsys, "traverse", str(workspace / "g.json"), "--task", "gateway timeout", "--seed", "3", "--out", str(p))
        assert code == EXIT_OK
        outs.append((report, p.read_bytes()))
    assert outs[0] == outs[1]


def test_evolve_gini_monotone(workspace, capsys):
    reports, plot = workspace / "r.jsonl", workspace / "r.csv"
    code, out, _ = run(
        capsys,
        "evolve", str(workspace / "g.json"), "--truth", str(workspace / "t.json"),
        "--epochs", "4", "--per-epoch", "6", "--alpha", "0", "--rho", "0",
        "--reports", str(reports), "--csv", str(plot),
    )
    assert code == EXIT_OK and "node_gini" in out
    rows = [json.loads(x) for x in reports.read_text().splitlines()]
    assert rows[0]["type"] == "header" and rows[0]["atr"]["rho"] == 0
    ginis = [r["node_gini"] for r in rows[1:]]
    assert len(ginis) == 4 and ginis == sorted(ginis)
    assert plot.read_text().startswith("epoch,node_gini,edge_gini,synthesized_cumulative\n")


def test_ablate_writes_report(workspace, capsys):
    out_path = workspace / "ab.json"
    code, out, _ = run(capsys, "ablate", str(workspace / "g.json"), "--truth", str(workspace / "t.json"), "--runs", "1", "--out", str(out_path))
    assert code == EXIT_OK and "with_reinforcement" in out
    rep = json.loads(out_path.read_text())
    assert rep["command"] == "ablate" and rep["runs_per_condition"] == 1


def test_stats_on_fresh_graph(workspace, capsys):
    code, out, _ = run(capsys, "stats", str(workspace / "g.json"))
    stats = json.loads(out)
    assert code == EXIT_OK
    assert stats["node_gini"] == 0.0 and stats["edge_gini"] == 0.0
    assert stats["node_weights"]["quantiles"]["max"] == 1.0


def _check_dot(text):
    body = [ln for ln in text.splitlines() if not ln.startswith("//")]
    assert body[0] == "digraph workflow {" and body[-1] == "}"
    node = re.compile(r'^  n\d+ \[label=".*", shape=\w+, width=[\d.]+, height=[\d.]+, tooltip="[^"]*"(, style=dashed)?\];$')
    edge = re.compile(r'^  n\d+ -> n\d+ \[label="\w+", penwidth=[\d.]+(, style=dashed)?\];$')
    for ln in body[2:-1]:
        assert node.match(ln) or edge.match(ln), ln
    return body


def test_export_dot(workspace, capsys):
    code, out, _ = run(capsys, "export-dot", str(workspace / "g.json"))
    assert code == EXIT_OK and out.startswith("// atrgraph export-dot seed=0\n")
    enabled = _check_dot(out)
    code, out, _ = run(capsys, "export-dot", str(workspace / "g.json"), "--all")
    assert len(_check_dot(out)) >= len(enabled)


def test_config_from_environment(workspace, data_dir, capsys, monkeypatch):
    cfg = workspace / "cfg.json"
    shutil.copy(data_dir / "fixture_graph.json", workspace / "fixture.json")
    cfg.write_text(json.dumps({"seed": 2, "paths": {"graph": "fixture.json", "trajectory": "traj.jsonl"}}))
    monkeypatch.setenv("ATRGRAPH_CONFIG", str(cfg))
    code, out, _ = run(capsys, "traverse", "--task", "replica login failures")
    assert code == EXIT_OK
    header = json.loads((workspace / "traj.jsonl").read_text().splitlines()[0])
    assert header["seed"] == 2
    code, out, _ = run(capsys, "stats", "--seed", "7")
    assert json.loads(out)["seed"] == 7


@pytest.mark.parametrize(
    "argv, expected",
    [
        (["stats", "/nonexistent/graph.json"], EXIT_DATA),
        (["stats"], EXIT_USAGE),
        (["build", "--tau", "2", "x.jsonl", "--out", "y.json"], EXIT_USAGE),
        (["traverse", "--task", "x", "--config", "/nonexistent.json"], EXIT_USAGE),
        (["generate", "--out", "c.jsonl"], EXIT_USAGE),
    ],
)
def test_exit_codes(argv, expected, capsys, tmp_path, monkeypatch):
    monkeypatch.chdir(tmp_path)
    assert main(argv) == expected


def test_argparse_errors_exit_with_usage_code(capsys):
    with pytest.raises(SystemExit) as info:
        main(["frobnicate"])
    assert info.value.code == EXIT_USAGE


def test_malformed_corpus_is_data_error(tmp_path, capsys):
    (tmp_path / "bad.jsonl").write_text("{nope\n")
    assert main(["build", str(tmp_path / "bad.jsonl"), "--out", str(tmp_path / "g.json")]) == EXIT_DATA
    assert not (tmp_path / "g.json").exists()


def test_unknown_config_key(tmp_path, capsys):
    (tmp_path / "cfg.json").write_text(json.dumps({"colour": "blue"}))
    assert main(["stats", "--config", str(tmp_path / "cfg.json")]) == EXIT_USAGE
