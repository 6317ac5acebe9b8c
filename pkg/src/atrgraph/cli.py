"""``atrgraph`` command-line interface.

Exit codes: 0 success, 1 usage or configuration error, 2 data error
(unreadable or invalid input files, schema mismatches, aborted episodes).

Settings come from a JSON config file (``--config`` or the ATRGRAPH_CONFIG
environment variable) and are overridden by flags.  Example config::

    {"seed": 7, "tau": 0.05,
     "traversal": {"k_p": 3, "k_a": 7, "m": 2, "J": 3, "max_outer": 10},
     "atr": {"delta_q": 0.8, "rho": 0.0, "alpha": 1.0},
     "masking_rules": [{"pattern": "REQ-\\\\d+", "replacement": "<REQ>"}],
     "paths": {"corpus": "traces.jsonl", "graph": "graph.json", "truth": "truth.json"},
     "executor": "observations.json",
     "evolution": {"epochs": 6, "per_epoch": 15},
     "ablation": {"runs": 4}}
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import re
import sys
from dataclasses import asdict, dataclass, field
from typing import Sequence

from .atr import AtrParams
from .clustering import DEFAULT_TAU, incremental_merge
from .corpus import CorpusConfig, build_graph, dump_corpus, extract_workflow, load_corpus
from .export import to_dot, weight_stats
from .graph import ConfigurationError, GraphError, WorkflowGraph, atomic_write
from .harness import (
    GroundTruth,
    epoch_reports_csv,
    epoch_reports_jsonl,
    format_ablation,
    format_epoch_table,
    generate_corpus,
    run_ablation,
    run_evolution,
)
from .index import VectorIndex
from .masking import DEFAULT_RULES, rules_from_config
from .traversal import EchoExecutor, ProtocolError, ScriptedExecutor, TraversalParams, run_episode

log = logging.getLogger("atrgraph")

EXIT_OK, EXIT_USAGE, EXIT_DATA = 0, 1, 2
CONFIG_ENV = "ATRGRAPH_CONFIG"
CONFIG_KEYS = {"seed", "tau", "traversal", "atr", "masking_rules", "paths", "executor", "evolution", "ablation", "domain"}


class UsageError(Exception):
    pass


class DataError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message: str) -> None:  # argparse would exit with 2
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


@dataclass
class Config:
    seed: int = 0
    tau: float = DEFAULT_TAU
    domain: str = "default"
    traversal: TraversalParams = field(default_factory=TraversalParams)
    atr: AtrParams = field(default_factory=AtrParams)
    rules: tuple = DEFAULT_RULES
    paths: dict = field(default_factory=dict)
    executor: str | None = None
    evolution: dict = field(default_factory=dict)
    ablation: dict = field(default_factory=dict)

    def header(self, command: str) -> dict:
        return {
            "command": command,
            "seed": self.seed,
            "tau": self.tau,
            "traversal": asdict(self.traversal),
            "atr": asdict(self.atr),
        }


def _read_json(path: str) -> dict:
    try:
        with open(path, encoding="utf-8") as fh:
            return json.load(fh)
    except OSError as exc:
        raise DataError(f"cannot read {path}: {exc.strerror}") from None
    except json.JSONDecodeError as exc:
        raise DataError(f"{path} is not valid JSON: {exc}") from None


def load_config(args: argparse.Namespace) -> Config:
    path = args.config or os.environ.get(CONFIG_ENV)
    raw: dict = {}
    if path:
        if not os.path.exists(path):
            raise UsageError(f"config file {path} does not exist")
        raw = _read_json(path)
        if not isinstance(raw, dict):
            raise UsageError("config must be a JSON object")
        unknown = set(raw) - CONFIG_KEYS
        if unknown:
            raise UsageError(f"unknown config keys: {', '.join(sorted(unknown))}")
    base = os.path.dirname(os.path.abspath(path)) if path else os.getcwd()

    def rel(p: str | None) -> str | None:
        return p if p is None or os.path.isabs(p) else os.path.join(base, p)

    try:
        seed = args.seed if args.seed is not None else int(raw.get("seed", 0))
        tau = args.tau if args.tau is not None else float(raw.get("tau", DEFAULT_TAU))
        if not 0.0 <= tau <= 1.0:
            raise UsageError(f"tau must lie in [0, 1], got {tau}")
        tcfg = dict(raw.get("traversal", {}))
        for flag, key in (("kp", "k_p"), ("ka", "k_a"), ("hops", "m")):
            if getattr(args, flag) is not None:
                tcfg[key] = getattr(args, flag)
        tcfg["seed"] = seed
        acfg = dict(raw.get("atr", {}))
        # one concentration exponent drives both sampling and the ATR settings
        alpha = args.alpha if args.alpha is not None else acfg.get("alpha", tcfg.get("alpha", 1.0))
        tcfg["alpha"] = acfg["alpha"] = alpha
        if args.rho is not None:
            acfg["rho"] = args.rho
        traversal = TraversalParams(**tcfg)
        atr = AtrParams(**acfg)
        rules = rules_from_config(raw["masking_rules"]) if raw.get("masking_rules") else DEFAULT_RULES
    except (TypeError, ValueError, KeyError, re.error) as exc:
        raise UsageError(f"invalid configuration: {exc}") from None
    return Config(
        seed=seed,
        tau=tau,
        domain=str(raw.get("domain", "default")),
        traversal=traversal,
        atr=atr,
        rules=rules,
        paths={k: rel(v) for k, v in raw.get("paths", {}).items()},
        executor=rel(raw.get("executor")),
        evolution=dict(raw.get("evolution", {})),
        ablation=dict(raw.get("ablation", {})),
    )


def _path(explicit: str | None, cfg: Config, key: str, what: str) -> str:
    p = explicit or cfg.paths.get(key)
    if not p:
        raise UsageError(f"no {what} given (pass it or set paths.{key} in the config)")
    return p


def _load_graph(path: str) -> WorkflowGraph:
    if not os.path.exists(path):
        raise DataError(f"graph file {path} does not exist")
    try:
        g = WorkflowGraph.load(path)
    except ConfigurationError as exc:
        raise DataError(f"refusing {path}: {exc}") from None
    except (OSError, ValueError, KeyError, TypeError) as exc:
        raise DataError(f"cannot load graph {path}: {exc}") from None
    problems = g.validate()
    if problems:
        raise DataError(f"graph {path} is invalid: " + "; ".join(problems[:5]))
    return g


def _load_traces(path: str):
    if not os.path.exists(path):
        raise DataError(f"corpus file {path} does not exist")
    traces, errors = load_corpus(path)
    for e in errors:
        log.error("%s: %s", path, e)
    if errors:
        raise DataError(f"{len(errors)} malformed trace(s) in {path}")
    return traces


def _emit(text: str, out: str | None) -> None:
    if out:
        atomic_write(out, text)
    else:
        sys.stdout.write(text)


def _json(obj) -> str:
    return json.dumps(obj, indent=1, sort_keys=True) + "\n"


# -- commands --------------------------------------------------------------


def cmd_build(args, cfg: Config) -> int:
    corpus_path = _path(args.corpus, cfg, "corpus", "corpus path")
    out = _path(args.out, cfg, "graph", "output graph path (--out)")
    traces = _load_traces(corpus_path)
    ccfg = CorpusConfig(domain=cfg.domain, tau=cfg.tau, rules=cfg.rules)
    graph, report = build_graph(traces, cfg.tau, ccfg)
    problems = graph.validate()
    if problems:
        raise DataError("built graph failed validation: " + "; ".join(problems[:5]))
    graph.save(out)
    summary = {
        **cfg.header("build"),
        "corpus": corpus_path,
        "traces": len(traces),
        "clusters": len(report.clusters),
        "rejected": [tid for tid, _ in report.rejected],
        "graph": graph.summary(),
    }
    sys.stdout.write(_json(summary))
    return EXIT_OK


def cmd_merge(args, cfg: Config) -> int:
    graph_path = _path(args.graph, cfg, "graph", "graph path")
    graph = _load_graph(graph_path)
    traces = _load_traces(args.corpus)
    ccfg = CorpusConfig(domain=cfg.domain, tau=cfg.tau, rules=graph.rules)
    before = graph.summary()["enabled_nodes"]
    report = incremental_merge(graph, [extract_workflow(t, ccfg) for t in traces], cfg.tau)
    problems = graph.validate()
    if problems:
        raise DataError("merged graph failed validation: " + "; ".join(problems[:5]))
    graph.save(args.out or graph_path)
    after = graph.summary()
    sys.stdout.write(
        _json(
            {
                **cfg.header("merge"),
                "traces": len(traces),
                "added_nodes": report.added_nodes,
                "matched_nodes": report.matched_nodes,
                "clusters": len(report.clusters),
                "enabled_nodes_before": before,
                "enabled_nodes_after": after["enabled_nodes"],
                "rejected": [tid for tid, _ in report.rejected],
                "graph": after,
            }
        )
    )
    return EXIT_OK


def cmd_traverse(args, cfg: Config) -> int:
    graph = _load_graph(_path(args.graph, cfg, "graph", "graph path"))
    script = args.executor or cfg.executor
    if script:
        if not os.path.exists(script):
            raise DataError(f"executor script {script} does not exist")
        try:
            executor = ScriptedExecutor.load(script)
        except (ValueError, KeyError, TypeError) as exc:
            raise DataError(f"bad executor script {script}: {exc}") from None
    else:
        executor = EchoExecutor()
    index = VectorIndex.rebuild(graph)
    try:
        report, traj = run_episode(args.task, graph, index, cfg.traversal, executor=executor)
    except ProtocolError as exc:
        sys.stderr.write(exc.dump() + "\n")
        return EXIT_DATA
    out = args.out or cfg.paths.get("trajectory") or "trajectory.jsonl"
    atomic_write(out, traj.to_jsonl())
    sys.stdout.write(report)
    log.info("trajectory written to %s", out)
    return EXIT_OK


def _truth(args, cfg: Config) -> GroundTruth:
    path = _path(args.truth, cfg, "truth", "ground-truth path (--truth)")
    if not os.path.exists(path):
        raise DataError(f"ground-truth file {path} does not exist")
    try:
        gt = GroundTruth.load(path)
    except (ValueError, KeyError, TypeError) as exc:
        raise DataError(f"bad ground-truth file {path}: {exc}") from None
    if not gt.incidents:
        raise DataError(f"ground-truth file {path} has no incidents")
    return gt


def cmd_evolve(args, cfg: Config) -> int:
    graph_path = _path(args.graph, cfg, "graph", "graph path")
    graph = _load_graph(graph_path)
    gt = _truth(args, cfg)
    epochs = args.epochs if args.epochs is not None else int(cfg.evolution.get("epochs", 6))
    per_epoch = args.per_epoch if args.per_epoch is not None else int(cfg.evolution.get("per_epoch", 15))
    if epochs < 1 or per_epoch < 1:
        raise UsageError("epochs and per-epoch must be >= 1")
    reports = run_evolution(graph, gt, gt.incidents, epochs, per_epoch, cfg.atr, cfg.traversal)
    graph.save(args.out or graph_path)
    if args.reports:
        atomic_write(args.reports, json.dumps({"type": "header", **cfg.header("evolve")}, sort_keys=True) + "\n" + epoch_reports_jsonl(reports))
    if args.csv:
        atomic_write(args.csv, epoch_reports_csv(reports))
    sys.stdout.write(f"# evolve seed={cfg.seed} alpha={cfg.atr.alpha} rho={cfg.atr.rho}\n")
    sys.stdout.write(format_epoch_table(reports) + "\n")
    return EXIT_OK


def cmd_ablate(args, cfg: Config) -> int:
    graph = _load_graph(_path(args.graph, cfg, "graph", "graph path"))
    gt = _truth(args, cfg)
    runs = args.runs if args.runs is not None else int(cfg.ablation.get("runs", 4))
    if runs < 1:
        raise UsageError("runs must be >= 1")
    report = run_ablation(graph, gt, gt.incidents, cfg.atr, cfg.traversal, runs)
    report = {**cfg.header("ablate"), **report}
    if args.out:
        atomic_write(args.out, _json(report))
    sys.stdout.write(f"# ablate seed={cfg.seed} alpha={cfg.atr.alpha} runs={runs}\n")
    sys.stdout.write(format_ablation(report) + "\n")
    return EXIT_OK


def cmd_stats(args, cfg: Config) -> int:
    graph = _load_graph(_path(args.graph, cfg, "graph", "graph path"))
    _emit(_json({"command": "stats", "seed": cfg.seed, **weight_stats(graph)}), args.out)
    return EXIT_OK


def cmd_export_dot(args, cfg: Config) -> int:
    graph = _load_graph(_path(args.graph, cfg, "graph", "graph path"))
    _emit(to_dot(graph, header=f"atrgraph export-dot seed={cfg.seed}", include_disabled=args.all), args.out)
    return EXIT_OK


def cmd_generate(args, cfg: Config) -> int:
    if not args.out or not args.truth:
        raise UsageError("generate needs --out (corpus) and --truth (ground truth)")
    try:
        traces, gt = generate_corpus(
            seed=cfg.seed,
            n_domains=args.domains,
            n_problems=args.problems,
            n_actions=args.actions,
            n_traces=args.traces,
            noise_rate=args.noise,
            paraphrase_rate=args.paraphrase,
            n_incidents=args.incidents,
        )
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    atomic_write(args.out, dump_corpus(traces))
    gt.save(args.truth)
    sys.stdout.write(_json({"command": "generate", "seed": cfg.seed, "traces": len(traces), "incidents": len(gt.incidents)}))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help=f"JSON config file (default: ${CONFIG_ENV})")
    common.add_argument("--seed", type=int)
    common.add_argument("--tau", type=float, help="clustering distance threshold")
    common.add_argument("--kp", type=int, help="roots retrieved per graph load")
    common.add_argument("--ka", type=int, help="actions per plan")
    common.add_argument("--alpha", type=float, help="concentration exponent for edge sampling")
    common.add_argument("--rho", type=float, help="decay rate per epoch")
    common.add_argument("--hops", type=int, help="expansion depth m")
    common.add_argument("--out", help="output path")
    common.add_argument("-v", "--verbose", action="store_true")

    p = _Parser(prog="atrgraph", description="Workflow graphs with adaptive traversal reinforcement.")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    s = sub.add_parser("build", parents=[common], help="build a graph from a trace corpus")
    s.add_argument("corpus", nargs="?")
    s.set_defaults(func=cmd_build)

    s = sub.add_parser("merge", parents=[common], help="merge new traces into an existing graph")
    s.add_argument("graph", nargs="?")
    s.add_argument("corpus")
    s.set_defaults(func=cmd_merge)

    s = sub.add_parser("traverse", parents=[common], help="run one episode for a task")
    s.add_argument("graph", nargs="?")
    s.add_argument("--task", required=True)
    s.add_argument("--executor", help="JSON map of action text to observation")
    s.set_defaults(func=cmd_traverse)

    s = sub.add_parser("evolve", parents=[common], help="reinforcement epochs against simulated incidents")
    s.add_argument("graph", nargs="?")
    s.add_argument("--truth")
    s.add_argument("--epochs", type=int)
    s.add_argument("--per-epoch", type=int)
    s.add_argument("--reports", help="write epoch reports as JSON lines")
    s.add_argument("--csv", help="write plot data as CSV")
    s.set_defaults(func=cmd_evolve)

    s = sub.add_parser("ablate", parents=[common], help="learned weights versus uniform weights")
    s.add_argument("graph", nargs="?")
    s.add_argument("--truth")
    s.add_argument("--runs", type=int)
    s.set_defaults(func=cmd_ablate)

    s = sub.add_parser("stats", parents=[common], help="counts, weight distribution and Gini")
    s.add_argument("graph", nargs="?")
    s.set_defaults(func=cmd_stats)

    s = sub.add_parser("export-dot", parents=[common], help="Graphviz rendering weighted by reinforcement")
    s.add_argument("graph", nargs="?")
    s.add_argument("--all", action="store_true", help="include disabled cluster members")
    s.set_defaults(func=cmd_export_dot)

    s = sub.add_parser("generate", parents=[common], help="write a synthetic corpus and its ground truth")
    s.add_argument("--truth")
    s.add_argument("--domains", type=int, default=3)
    s.add_argument("--problems", type=int, default=60)
    s.add_argument("--actions", type=int, default=120)
    s.add_argument("--traces", type=int, default=200)
    s.add_argument("--incidents", type=int, default=30)
    s.add_argument("--noise", type=float, default=0.3)
    s.add_argument("--paraphrase", type=float, default=0.3)
    s.set_defaults(func=cmd_generate)
    return p


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s: %(message)s")
    try:
        cfg = load_config(args)
        return args.func(args, cfg)
    except UsageError as exc:
        sys.stderr.write(f"atrgraph: {exc}\n")
        return EXIT_USAGE
    except (DataError, GraphError) as exc:
        sys.stderr.write(f"atrgraph: {exc}\n")
        return EXIT_DATA
    except OSError as exc:
        sys.stderr.write(f"atrgraph: {exc}\n")
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
