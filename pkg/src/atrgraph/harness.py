"""Synthetic corpora, simulated execution and graph-evolution experiments.

The generator draws a hidden workflow graph (problems chained by CAUSES, each
problem with a short mitigation sequence of actions) and samples incident
traces as walks through it.  Text variation comes from trace-specific tokens
(GUIDs, timestamps, IPs) that masking removes, and from single-word synonym
swaps that only clustering at a looser threshold can undo.
"""

from __future__ import annotations

import csv
import io
import json
import math
import os
from collections import defaultdict
from dataclasses import asdict, dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .atr import (
    AtrParams,
    QualityWeights,
    decay,
    deposit,
    edge_gini,
    edge_probabilities,
    edge_sampler,
    node_gini,
    score,
    synthesize_edges,
)
from .corpus import Trace, TraceEntry
from .embedding import DEFAULT_EMBEDDER, EmbeddingProvider, embed_many
from .graph import Node, NodeId, NodeKind, WorkflowGraph, atomic_write
from .index import VectorIndex
from .masking import DEFAULT_RULES, canonicalize
from .traversal import (
    EpisodeContext,
    ReferenceLoader,
    TraversalParams,
    graph_loader,
    groundedness,
    run_episode,
)
from .trajectory import Observation, Trajectory

MITIGATED = "mitigated"

DOMAINS = ["sqldb", "cosmos", "postgres", "mysql", "redis", "synapse", "fabric", "kusto"]
COMPONENTS = [
    "gateway", "replica", "storage", "dns", "auth", "cache", "scheduler", "backup",
    "network", "compute", "queue", "index", "billing", "certificate", "proxy",
    "controller", "disk", "memory", "tenant", "firewall", "listener", "balancer",
]
SYMPTOMS = {
    "timeout": ["timeout", "deadline"],
    "latency spike": ["latency", "percentile"],
    "connection failures": ["connection", "socket"],
    "failover loop": ["failover", "primary"],
    "quota exhaustion": ["quota", "limit"],
    "high cpu": ["cpu", "threads"],
    "deadlock": ["deadlock", "locks"],
    "replication lag": ["replication", "lag"],
    "login failures": ["login", "token"],
    "throttling": ["throttling", "rate"],
    "crash loop": ["crash", "dump"],
    "memory pressure": ["heap", "allocation"],
    "disk full": ["volume", "space"],
    "stale entries": ["stale", "ttl"],
    "certificate expiry": ["expiry", "rotation"],
}
VERBS = [
    "restart", "check", "drain", "scale", "rollback", "inspect", "rotate", "flush",
    "reset", "rebuild", "trace", "patch", "migrate", "isolate", "resize",
]
SYNONYMS = {
    "restart": "reboot", "check": "verify", "drain": "evacuate", "scale": "expand",
    "rollback": "revert", "inspect": "examine", "flush": "purge", "reset": "reinitialize",
    "timeout": "timeouts", "failures": "errors", "spike": "surge", "loop": "cycle",
    "exhaustion": "depletion", "pressure": "contention", "full": "saturated",
    "lag": "delay", "entries": "records", "expiry": "expiration", "high": "elevated",
}
NOISE = [
    "[bot] status changed to Active",
    "Auto-enrichment attached telemetry link {guid}",
    "SLA timer updated at {ts}",
    "Customer impact assessment pending",
    "Acknowledged by on-call engineer",
    "Severity re-evaluated, no change",
    "Linked to parent incident {guid}",
    "Shift handoff note added at {ts}",
]
# canonical placeholder values used when a slot is not paraphrased
SLOT_DEFAULTS = {
    "guid": "00000000-0000-0000-0000-000000000000",
    "ts": "2026-01-01T00:00:00Z",
    "ip": "10.0.0.1",
}
SLOT_TEMPLATES = {"guid": " for resource {guid}", "ts": " since {ts}", "ip": " on host {ip}"}
PARAPHRASE_KINDS = ("guid", "ts", "ip", "synonym")


@dataclass
class GenNode:
    id: str
    kind: str
    template: str
    domain: str

    def render(self, slots: dict[str, str]) -> str:
        return self.template.format(**slots)

    @property
    def base_text(self) -> str:
        return self.render(SLOT_DEFAULTS)


@dataclass
class Incident:
    incident_id: str
    task: str
    domain: str
    problems: list[str]
    actions: list[str]

    def problem_of(self, gt: "GroundTruth", action: str) -> int:
        for i, p in enumerate(self.problems):
            if action in gt.mitigations[p]:
                return i
        return len(self.problems) - 1


@dataclass
class GroundTruth:
    nodes: dict[str, GenNode]
    causes: list[tuple[str, str]]
    mitigations: dict[str, list[str]]
    incidents: list[Incident] = field(default_factory=list)
    surface: dict[str, str] = field(default_factory=dict)  # "Kind|canonical text" -> generator id

    def register(self, kind: str, text: str, gen_id: str) -> None:
        self.surface[f"{kind}|{canonicalize(text, DEFAULT_RULES)}"] = gen_id

    def lookup(self, node: Node) -> str | None:
        return self.surface.get(f"{node.kind.value}|{node.canonical_text}")

    def resolve(self, graph: WorkflowGraph, node: Node) -> list[tuple[str, NodeId]]:
        """Generator ids behind a graph node, with the concrete member each came from."""
        members = [graph.nodes[m] for m in node.cluster_members] if node.is_representative else [node]
        out = []
        for m in members:
            gid = self.lookup(m)
            if gid is not None:
                out.append((gid, m.id))
        return out

    def used_ids(self) -> set[str]:
        return set(self.surface.values())

    def to_dict(self) -> dict:
        return {
            "nodes": {k: asdict(v) for k, v in sorted(self.nodes.items())},
            "causes": [list(c) for c in self.causes],
            "mitigations": self.mitigations,
            "incidents": [asdict(i) for i in self.incidents],
            "surface": self.surface,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "GroundTruth":
        return cls(
            nodes={k: GenNode(**v) for k, v in d["nodes"].items()},
            causes=[tuple(c) for c in d["causes"]],
            mitigations={k: list(v) for k, v in d["mitigations"].items()},
            incidents=[Incident(**i) for i in d["incidents"]],
            surface=dict(d["surface"]),
        )

    def save(self, path: str | os.PathLike) -> None:
        atomic_write(path, json.dumps(self.to_dict(), sort_keys=True, indent=1) + "\n")

    @classmethod
    def load(cls, path: str | os.PathLike) -> "GroundTruth":
        with open(path, encoding="utf-8") as fh:
            return cls.from_dict(json.load(fh))


def _guid(rng: np.random.Generator) -> str:
    h = "".join(f"{b:02x}" for b in rng.integers(0, 256, 16))
    return f"{h[:8]}-{h[8:12]}-{h[12:16]}-{h[16:20]}-{h[20:]}"


def _timestamp(rng: np.random.Generator) -> str:
    d, hh, mm, ss = rng.integers(1, 29), rng.integers(0, 24), rng.integers(0, 60), rng.integers(0, 60)
    return f"2026-02-{d:02d}T{hh:02d}:{mm:02d}:{ss:02d}Z"


def _ip(rng: np.random.Generator) -> str:
    a, b, c = rng.integers(0, 256, 3)
    return f"10.{a}.{b}.{c}"


class _Renderer:
    def __init__(self, rng: np.random.Generator, rate: float, kinds: Sequence[str]):
        self.rng, self.rate, self.kinds = rng, rate, set(kinds)

    def slots(self) -> dict[str, str]:
        s = dict(SLOT_DEFAULTS)
        if self.rate <= 0:
            return s
        makers = {"guid": _guid, "ts": _timestamp, "ip": _ip}
        for key, make in makers.items():
            if key in self.kinds and self.rng.random() < self.rate:
                s[key] = make(self.rng)
        return s

    def text(self, node: GenNode) -> str:
        text = node.render(self.slots())
        if "synonym" in self.kinds and self.rate > 0 and self.rng.random() < self.rate:
            words = text.split(" ")
            swappable = [i for i, w in enumerate(words) if w in SYNONYMS]
            if swappable:
                i = swappable[int(self.rng.integers(len(swappable)))]
                words[i] = SYNONYMS[words[i]]
                text = " ".join(words)
        return text


def _generator_graph(rng: np.random.Generator, n_domains: int, n_problems: int, n_actions: int) -> GroundTruth:
    domains = [DOMAINS[i] if i < len(DOMAINS) else f"domain{i}" for i in range(n_domains)]
    nodes: dict[str, GenNode] = {}
    for i, d in enumerate(domains):
        nodes[f"D{i}"] = GenNode(f"D{i}", "Domain", d, d)

    symptoms = list(SYMPTOMS)
    pairs = [(c, s) for c in COMPONENTS for s in symptoms]
    order = rng.permutation(len(pairs))
    slot_keys = list(SLOT_TEMPLATES)
    problem_ids: list[str] = []
    problem_info: dict[str, tuple[str, str]] = {}
    for k in range(n_problems):
        c, s = pairs[int(order[k % len(pairs)])]
        suffix = "" if k < len(pairs) else f" variant {k // len(pairs)}"
        slot = SLOT_TEMPLATES[slot_keys[int(rng.integers(len(slot_keys)))]]
        pid = f"P{k}"
        dom = domains[k % n_domains]
        nodes[pid] = GenNode(pid, "Problem", f"{c} {s}{suffix}{slot}", dom)
        problem_ids.append(pid)
        problem_info[pid] = (c, s)

    # each problem gets at least one action when there are enough of them
    owners = list(rng.permutation(problem_ids))
    assign = [owners[i % len(owners)] for i in range(n_actions)]
    mitigations: dict[str, list[str]] = defaultdict(list)
    used_texts: set[str] = set()
    for k, pid in enumerate(assign):
        c, s = problem_info[pid]
        kw = SYMPTOMS[s]
        for attempt in range(100):
            verb = VERBS[int(rng.integers(len(VERBS)))]
            word = kw[int(rng.integers(len(kw)))]
            text = f"{verb} {c} {word}" + (f" step {attempt}" if attempt >= 50 else "")
            if text not in used_texts:
                break
        used_texts.add(text)
        slot = SLOT_TEMPLATES[slot_keys[int(rng.integers(len(slot_keys)))]] if rng.random() < 0.5 else ""
        aid = f"A{k}"
        nodes[aid] = GenNode(aid, "Action", text + slot, nodes[pid].domain)
        mitigations[pid].append(aid)
    for pid in problem_ids:
        if not mitigations[pid]:
            mitigations[pid].append(f"A{int(rng.integers(n_actions))}")

    causes: list[tuple[str, str]] = []
    by_domain: dict[str, list[str]] = defaultdict(list)
    for pid in problem_ids:
        by_domain[nodes[pid].domain].append(pid)
    for dom_pids in by_domain.values():
        for i, pid in enumerate(dom_pids[:-1]):
            later = dom_pids[i + 1 :]
            n_out = int(rng.integers(0, 3))
            for j in rng.choice(len(later), size=min(n_out, len(later)), replace=False):
                causes.append((pid, later[int(j)]))
    return GroundTruth(nodes=nodes, causes=sorted(causes), mitigations=dict(mitigations))


def _sample_chain(rng: np.random.Generator, gt: GroundTruth, succ: dict[str, list[str]], max_len: int = 3) -> list[str]:
    problems = sorted((k for k, v in gt.nodes.items() if v.kind == "Problem"), key=lambda s: int(s[1:]))
    chain = [problems[int(rng.integers(len(problems)))]]
    while len(chain) < max_len and succ.get(chain[-1]) and rng.random() < 0.6:
        nxt = succ[chain[-1]]
        chain.append(nxt[int(rng.integers(len(nxt)))])
    return chain


def _observation_text(gt: GroundTruth, chain: list[str], pos: int, action: str, actions: list[str]) -> str:
    if action == actions[-1]:
        return f"{MITIGATED}: {gt.nodes[action].base_text} resolved the incident"
    nxt = chain[min(pos + 1, len(chain) - 1)]
    return f"diagnostic returned data; observed {gt.nodes[nxt].base_text}"


def generate_corpus(
    seed: int = 0,
    n_domains: int = 3,
    n_problems: int = 60,
    n_actions: int = 120,
    n_traces: int = 200,
    noise_rate: float = 0.3,
    paraphrase_rate: float = 0.3,
    n_incidents: int = 30,
    paraphrase_kinds: Sequence[str] = PARAPHRASE_KINDS,
) -> tuple[list[Trace], GroundTruth]:
    """Draw a generator graph and sample ``n_traces`` traces plus held-out incidents from it."""
    if min(n_domains, n_problems, n_actions, n_traces) < 1:
        raise ValueError("sizes must be >= 1")
    if not (0 <= noise_rate <= 1 and 0 <= paraphrase_rate <= 1):
        raise ValueError("rates must lie in [0, 1]")
    unknown = set(paraphrase_kinds) - set(PARAPHRASE_KINDS)
    if unknown:
        raise ValueError(f"unknown paraphrase kinds {sorted(unknown)}")

    root = np.random.SeedSequence(seed)
    g_rng, t_rng, i_rng = (np.random.default_rng(s) for s in root.spawn(3))
    gt = _generator_graph(g_rng, n_domains, n_problems, n_actions)
    succ: dict[str, list[str]] = defaultdict(list)
    for a, b in gt.causes:
        succ[a].append(b)
    render = _Renderer(t_rng, paraphrase_rate, paraphrase_kinds)

    traces = []
    for n in range(n_traces):
        chain = _sample_chain(t_rng, gt, succ)
        actions = [a for p in chain for a in gt.mitigations[p]]
        body: list[TraceEntry] = []

        def add(kind: str, text: str) -> None:
            body.append(TraceEntry(kind, text))
            if t_rng.random() < noise_rate:
                tmpl = NOISE[int(t_rng.integers(len(NOISE)))]
                body.append(TraceEntry("noise", tmpl.format(guid=_guid(t_rng), ts=_timestamp(t_rng))))

        for pos, pid in enumerate(chain):
            text = render.text(gt.nodes[pid])
            gt.register("Problem", text, pid)
            add("problem", text)
            for aid in gt.mitigations[pid]:
                text = render.text(gt.nodes[aid])
                gt.register("Action", text, aid)
                add("action", text)
                add("observation", _observation_text(gt, chain, pos, aid, actions))
        domain = gt.nodes[chain[0]].domain
        gt.register("Domain", domain, next(k for k, v in gt.nodes.items() if v.kind == "Domain" and v.template == domain))
        traces.append(
            Trace(
                trace_id=f"TR-{seed}-{n:05d}",
                title=f"Incident on {domain}: {gt.nodes[chain[0]].base_text}",
                body=body,
                timestamp=_timestamp(t_rng),
                domain=domain,
            )
        )

    for n in range(n_incidents):
        chain = _sample_chain(i_rng, gt, succ)
        actions = list(dict.fromkeys(a for p in chain for a in gt.mitigations[p]))
        p1 = gt.nodes[chain[0]]
        task = f"Incident {_guid(i_rng)} at {_timestamp(i_rng)}: {p1.base_text}"
        gt.incidents.append(Incident(f"INC-{seed}-{n:04d}", task, p1.domain, chain, actions))
    return traces, gt


# -- simulated execution ---------------------------------------------------


class SimulatedExecutor:
    """Answers actions from the incident's hidden resolution path.

    On-path actions return ``ok`` with a payload naming the next true
    problem (or a mitigation marker for the final action); anything else
    returns ``empty``.
    """

    def __init__(self, ground_truth: GroundTruth, incident: Incident, graph: WorkflowGraph):
        self.gt = ground_truth
        self.incident = incident
        self.graph = graph
        self.calls = 0

    def __call__(self, node: Node) -> Observation:
        self.calls += 1
        for gid, member in self.gt.resolve(self.graph, node):
            if gid in self.incident.actions:
                pos = self.incident.problem_of(self.gt, gid)
                text = _observation_text(self.gt, self.incident.problems, pos, gid, self.incident.actions)
                return Observation("ok", text, metric=1.0, member=member)
        return Observation("empty", "")


def simulated_executor(ground_truth: GroundTruth, incident: Incident, graph: WorkflowGraph) -> SimulatedExecutor:
    return SimulatedExecutor(ground_truth, incident, graph)


def covered_actions(gt: GroundTruth, graph: WorkflowGraph, incident: Incident, trajectory: Trajectory) -> set[str]:
    done = set()
    for nid in trajectory.executed_actions:
        if nid in graph.nodes:
            done.update(g for g, _ in gt.resolve(graph, graph.nodes[nid]))
    return done & set(incident.actions)


def scorers_for(gt: GroundTruth, graph: WorkflowGraph, incident: Incident) -> dict:
    def usefulness(traj: Trajectory) -> float:
        if not incident.actions:
            return 0.0
        return len(covered_actions(gt, graph, incident, traj)) / len(incident.actions)

    return {"usefulness": usefulness, "groundedness": groundedness}


def mitigated(trajectory: Trajectory) -> bool:
    return any(o.status == "ok" and o.payload.startswith(MITIGATED) for o in trajectory.observations())


def derive_seed(*parts: int) -> int:
    return int(np.random.SeedSequence([int(p) for p in parts]).generate_state(1)[0])


def run_incident(
    graph: WorkflowGraph,
    index: VectorIndex,
    gt: GroundTruth,
    incident: Incident,
    params: TraversalParams,
    weights: QualityWeights = QualityWeights(),
) -> Trajectory:
    executor = SimulatedExecutor(gt, incident, graph)
    _, traj = run_episode(incident.task, graph, index, params, executor=executor)
    traj.quality = score(traj, scorers_for(gt, graph, incident), weights)
    return traj


# -- graph evolution -------------------------------------------------------


@dataclass
class EpochReport:
    epoch: int
    trajectories: int
    deposits: int
    synthesized: int
    synthesized_cumulative: int
    node_gini: float
    edge_gini: float
    total_weight: float
    mean_quality: float


def run_evolution(
    graph: WorkflowGraph,
    ground_truth: GroundTruth,
    incidents: Sequence[Incident],
    epochs: int = 6,
    per_epoch: int = 15,
    atr_params: AtrParams = AtrParams(rho=0.0, alpha=0.0),
    traversal_params: TraversalParams = TraversalParams(),
    embedder: EmbeddingProvider = DEFAULT_EMBEDDER,
    weights: QualityWeights = QualityWeights(),
) -> list[EpochReport]:
    """Run ``epochs`` rounds of episodes, reinforcing ``graph`` in place after each round."""
    index = VectorIndex.rebuild(graph, embedder)
    reports: list[EpochReport] = []
    cumulative = 0
    for epoch in range(1, epochs + 1):
        batch = []
        for i in range(per_epoch):
            inc = incidents[((epoch - 1) * per_epoch + i) % len(incidents)]
            params = traversal_params.replace(
                alpha=atr_params.alpha, seed=derive_seed(traversal_params.seed, epoch, i)
            )
            batch.append(run_incident(graph, index, ground_truth, inc, params, weights))
        deposits = synthesized = 0
        for traj in batch:
            if deposit(graph, traj, traj.quality, atr_params) > 0:
                deposits += 1
            synthesized += synthesize_edges(graph, traj, atr_params.delta_q)
        decay(graph, atr_params.rho)
        cumulative += synthesized
        reports.append(
            EpochReport(
                epoch=epoch,
                trajectories=len(batch),
                deposits=deposits,
                synthesized=synthesized,
                synthesized_cumulative=cumulative,
                node_gini=node_gini(graph),
                edge_gini=edge_gini(graph),
                total_weight=sum(n.weight for n in graph.nodes.values()) + sum(e.weight for e in graph.edges.values()),
                mean_quality=float(np.mean([t.quality for t in batch])) if batch else 0.0,
            )
        )
    return reports


def epoch_reports_jsonl(reports: Iterable[EpochReport]) -> str:
    return "".join(json.dumps(asdict(r), sort_keys=True) + "\n" for r in reports)


def epoch_reports_csv(reports: Iterable[EpochReport]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["epoch", "node_gini", "edge_gini", "synthesized_cumulative"])
    for r in reports:
        w.writerow([r.epoch, repr(r.node_gini), repr(r.edge_gini), r.synthesized_cumulative])
    return buf.getvalue()


def format_epoch_table(reports: Sequence[EpochReport]) -> str:
    head = f"{'epoch':>5} {'traj':>5} {'dep':>4} {'synth':>5} {'cum':>5} {'node_gini':>9} {'edge_gini':>9} {'total_w':>10}"
    rows = [head]
    for r in reports:
        rows.append(
            f"{r.epoch:>5} {r.trajectories:>5} {r.deposits:>4} {r.synthesized:>5} "
            f"{r.synthesized_cumulative:>5} {r.node_gini:>9.4f} {r.edge_gini:>9.4f} {r.total_weight:>10.2f}"
        )
    return "\n".join(rows)


# -- ablation --------------------------------------------------------------

METRICS = ("mitigation_reach", "hallucination_rate", "usefulness", "executor_successes", "mean_rounds")


def true_path_edges(graph: WorkflowGraph, gt: GroundTruth, incident: Incident) -> list[int]:
    """Active edges whose endpoints both map onto the incident's problems and actions."""
    on_path = set(incident.problems) | set(incident.actions)
    out = []
    for e in graph.active_edges():
        src = {g for g, _ in gt.resolve(graph, graph.nodes[e.src])}
        dst = {g for g, _ in gt.resolve(graph, graph.nodes[e.dst])}
        if src & on_path and dst & on_path:
            out.append(e.id)
    return out


def incident_roots(graph: WorkflowGraph, gt: GroundTruth, incident: Incident) -> list[NodeId]:
    """Enabled graph nodes standing for the incident's first problem."""
    first = incident.problems[0]
    return [
        n.id
        for n in graph.iter_nodes(kind=NodeKind.PROBLEM, enabled=True)
        if first in {g for g, _ in gt.resolve(graph, n)}
    ]


def true_path_probability(graph: WorkflowGraph, gt: GroundTruth, incident: Incident, alpha: float) -> float | None:
    """Closed-form chance that the first expansion draw at the incident's root follows a true-path edge."""
    roots = incident_roots(graph, gt, incident)
    if not roots:
        return None
    root = roots[0]
    true = set(true_path_edges(graph, gt, incident))
    cands = [graph.edges[e] for e in graph.incident_edges(root) if graph.nodes[graph.edges[e].other(root)].enabled]
    if not cands:
        return None
    p = edge_probabilities([e.weight for e in cands], alpha)
    return float(sum(pi for pi, e in zip(p, cands) if e.id in true))


def selection_probe(
    graph: WorkflowGraph,
    root: NodeId,
    target_edges: Iterable[int],
    alpha: float,
    draws: int,
    seed: int = 0,
) -> tuple[float, float, float]:
    """Monte Carlo rate at which a one-edge expansion from ``root`` follows ``target_edges``.

    Runs the loader's own expansion (``neighborhood`` with a fan-out of one)
    and returns (empirical rate, closed-form probability, binomial sigma).
    """
    targets = set(target_edges)
    rng = np.random.default_rng(seed)
    sampler = edge_sampler(alpha, 1, rng)
    hits = 0
    for _ in range(draws):
        sub = graph.neighborhood([root], 1, sampler, direction="both", stop_kinds=(NodeKind.DOMAIN,))
        if any(e in targets for e in sub.parent_edge.values()):
            hits += 1
    cands = [graph.edges[e] for e in graph.incident_edges(root) if graph.nodes[graph.edges[e].other(root)].enabled]
    p = float(sum(pi for pi, e in zip(edge_probabilities([e.weight for e in cands], alpha), cands) if e.id in targets))
    return hits / draws, p, math.sqrt(p * (1 - p) / draws)


def reinforce_true_path(graph: WorkflowGraph, gt: GroundTruth, incident: Incident, amount: float) -> WorkflowGraph:
    """Copy of ``graph`` with uniform weights except ``amount`` added to the incident's true-path edges."""
    g = graph.copy()
    g.reset_weights()
    for eid in true_path_edges(g, gt, incident):
        g.edges[eid].weight += amount
    return g


def _arm_metrics(graph, index, gt, incidents, params, runs, weights) -> dict:
    per_run = {m: [] for m in METRICS}
    for r in range(runs):
        trajs = [
            run_incident(graph, index, gt, inc, params.replace(seed=derive_seed(params.seed, r, i)), weights)
            for i, inc in enumerate(incidents)
        ]
        per_run["mitigation_reach"].append(float(np.mean([mitigated(t) for t in trajs])))
        per_run["hallucination_rate"].append(float(np.mean([1.0 - groundedness(t) for t in trajs])))
        per_run["usefulness"].append(
            float(np.mean([len(covered_actions(gt, graph, inc, t)) / len(inc.actions) for inc, t in zip(incidents, trajs)]))
        )
        per_run["executor_successes"].append(
            float(np.mean([sum(o.status == "ok" for o in t.observations()) for t in trajs]))
        )
        per_run["mean_rounds"].append(float(np.mean([len(t.inner_iterations) for t in trajs])))
    probs = [true_path_probability(graph, gt, inc, params.alpha) for inc in incidents]
    probs = [p for p in probs if p is not None]
    return {
        "mean": {m: float(np.mean(v)) for m, v in per_run.items()},
        "runs": per_run,
        "true_path_edge_probability": float(np.mean(probs)) if probs else None,
    }


def run_ablation(
    graph: WorkflowGraph,
    ground_truth: GroundTruth,
    incidents: Sequence[Incident],
    atr_params: AtrParams = AtrParams(alpha=1.0),
    traversal_params: TraversalParams = TraversalParams(),
    runs_per_condition: int = 4,
    embedder: EmbeddingProvider = DEFAULT_EMBEDDER,
    weights: QualityWeights = QualityWeights(),
) -> dict:
    """Matched episodes on the learned weights versus the same graph with weights reset to phi0."""
    params = traversal_params.replace(alpha=atr_params.alpha)
    uniform = graph.copy()
    uniform.reset_weights()
    arms = {"with_reinforcement": graph, "without_reinforcement": uniform}
    out = {"incidents": len(incidents), "runs_per_condition": runs_per_condition, "alpha": params.alpha, "arms": {}}
    for name, g in arms.items():
        index = VectorIndex.rebuild(g, embedder)
        out["arms"][name] = _arm_metrics(g, index, ground_truth, incidents, params, runs_per_condition, weights)
    return out


def format_ablation(report: dict) -> str:
    head = f"{'condition':<24}" + "".join(f"{m:>20}" for m in METRICS) + f"{'p(true edge)':>14}"
    rows = [head]
    for name, arm in report["arms"].items():
        p = arm["true_path_edge_probability"]
        rows.append(
            f"{name:<24}"
            + "".join(f"{arm['mean'][m]:>20.4f}" for m in METRICS)
            + (f"{p:>14.4f}" if p is not None else f"{'n/a':>14}")
        )
    return "\n".join(rows)


# -- context size ----------------------------------------------------------


def context_size_comparison(
    graph: WorkflowGraph,
    corpus: Sequence[Trace],
    incidents: Sequence[Incident],
    k: int = 10,
    params: TraversalParams = TraversalParams(),
    embedder: EmbeddingProvider = DEFAULT_EMBEDDER,
) -> dict:
    """Characters injected by a first graph load versus top-k summary and raw-trace retrieval.

    Both retrieval arms rank traces by similarity of their summaries to the
    task and take the same top-k, so a raw trace is never shorter than its
    summary.
    """
    index = VectorIndex.rebuild(graph, embedder)
    summaries = [t.summary_text() for t in corpus]
    raw = [t.full_text() for t in corpus]
    S = embed_many(embedder, (canonicalize(s, graph.rules) for s in summaries)) if corpus else np.zeros((0, 1))
    rows = []
    for n, inc in enumerate(incidents):
        ctx = EpisodeContext(inc.task)
        sub = graph_loader(ctx, graph, index, params, ReferenceLoader(), np.random.default_rng(derive_seed(params.seed, n)))
        g_size = len(sub.to_text(graph)) if sub.nodes else 0
        if k > 0 and len(corpus):
            sims = S @ embedder.embed(canonicalize(inc.task, graph.rules))
            top = np.lexsort((np.arange(len(sims)), -sims))[:k]
            s_size = sum(len(summaries[i]) for i in top)
            r_size = sum(len(raw[i]) for i in top)
        else:
            s_size = r_size = 0
        rows.append({"incident": inc.incident_id, "graph": g_size, "summary": s_size, "raw": r_size})
    mean = {key: float(np.mean([r[key] for r in rows])) if rows else 0.0 for key in ("graph", "summary", "raw")}
    ratio = {
        "summary_over_graph": mean["summary"] / mean["graph"] if mean["graph"] else math.inf,
        "raw_over_summary": mean["raw"] / mean["summary"] if mean["summary"] else math.inf,
        "raw_over_graph": mean["raw"] / mean["graph"] if mean["graph"] else math.inf,
    }
    return {"k": k, "per_incident": rows, "mean": mean, "ratios": ratio}
