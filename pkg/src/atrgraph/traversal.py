"""Nested-loop agentic traversal over a workflow graph.

The outer loop executes planned actions and accumulates their observations
in the episode's global context.  The inner loop alternates graph loading
and action planning until the planner returns actions or the inner budget
runs out; an empty plan at that point ends the episode.

Loader, planner and executor are plug-ins.  The reference implementations
here are deterministic token-overlap heuristics that stand in for LLM
policies.
"""

from __future__ import annotations

import dataclasses
import json
import logging
from dataclasses import dataclass, field
from typing import Protocol

import numpy as np

from .atr import edge_sampler
from .embedding import tokenize
from .graph import EdgeKind, Node, NodeId, NodeKind, Subgraph, ValidationError, WorkflowGraph
from .index import Query, VectorIndex
from .trajectory import Observation, Step, Trajectory

logger = logging.getLogger(__name__)

STOPWORDS = frozenset(
    "a an the of on in at to for from by with and or is are was were be no not this that "
    "it its as via into after before during".split()
)
MASK_TOKENS = frozenset({"guid", "timestamp", "ip", "hex", "num"})


class ProtocolError(RuntimeError):
    """A policy broke the traversal contract; the episode is aborted."""

    def __init__(self, message: str, context: "EpisodeContext | None" = None, trajectory: Trajectory | None = None):
        super().__init__(message)
        self.context = context
        self.trajectory = trajectory

    def dump(self) -> str:
        d = {"error": str(self)}
        if self.context is not None:
            d["context"] = self.context.to_dict()
        if self.trajectory is not None:
            d["trajectory"] = self.trajectory.header()
            d["steps"] = [dataclasses.asdict(s) for s in self.trajectory.steps]
        return json.dumps(d, indent=1, sort_keys=True, default=str)


@dataclass(frozen=True)
class TraversalParams:
    k_p: int = 3
    k_a: int = 7
    m: int = 2
    J: int = 3
    alpha: float = 1.0
    max_outer: int = 10
    seed: int = 0
    fanout: int = 5

    def __post_init__(self) -> None:
        for name in ("k_p", "k_a", "J", "max_outer", "fanout"):
            if getattr(self, name) < 1:
                raise ValidationError(f"{name} must be >= 1")
        if self.m < 0:
            raise ValidationError("m must be >= 0")
        if self.alpha < 0:
            raise ValidationError("alpha must be >= 0")

    def replace(self, **changes) -> "TraversalParams":
        return dataclasses.replace(self, **changes)


@dataclass
class EpisodeContext:
    task: str
    history: list[tuple[NodeId, Observation]] = field(default_factory=list)
    temp: list[str] = field(default_factory=list)
    retrieved_roots: set[NodeId] = field(default_factory=set)
    rounds: list[list[NodeId]] = field(default_factory=list)

    def start_outer(self) -> None:
        self.temp = []
        self.retrieved_roots = set()

    def record(self, action: NodeId, obs: Observation) -> None:
        self.history.append((action, obs))

    def last_round(self) -> list[tuple[NodeId, Observation]]:
        if not self.rounds:
            return []
        ids = set(self.rounds[-1])
        return [(a, o) for a, o in self.history if a in ids]

    def to_dict(self) -> dict:
        return {
            "task": self.task,
            "history": [[a, o.to_dict()] for a, o in self.history],
            "temp": list(self.temp),
            "retrieved_roots": sorted(self.retrieved_roots),
        }


@dataclass
class LoaderDecision:
    query_text: str
    target_kind: NodeKind


@dataclass
class PlannerDecision:
    actions: list[NodeId]
    context_delta: str = ""


class LoaderPolicy(Protocol):
    def decide(self, ctx: EpisodeContext) -> LoaderDecision: ...


class PlannerPolicy(Protocol):
    def plan(self, ctx: EpisodeContext, subgraph: Subgraph, graph: WorkflowGraph, params: TraversalParams) -> PlannerDecision: ...

    def report(self, ctx: EpisodeContext, graph: WorkflowGraph, termination: str) -> str: ...


class Executor(Protocol):
    def __call__(self, node: Node) -> Observation: ...


def content_tokens(text: str) -> set[str]:
    return {t for t in tokenize(text) if t not in STOPWORDS and t not in MASK_TOKENS}


class ReferenceLoader:
    """Queries with the newest successful observations, else the task, plus any pivot hints."""

    def __init__(self, target_kind: NodeKind = NodeKind.PROBLEM):
        self.target_kind = NodeKind(target_kind)

    def decide(self, ctx: EpisodeContext) -> LoaderDecision:
        parts = [o.payload for _, o in ctx.last_round() if o.status == "ok" and o.payload]
        if not parts:
            parts = [ctx.task]
        parts.extend(t for t in ctx.temp if t)
        return LoaderDecision(" ".join(parts), self.target_kind)


class ReferencePlanner:
    """Ranks unexecuted actions by token overlap with the task and observations.

    Node weight enters as a small additive prior so that, at equal overlap,
    more reinforced actions come first.  Actions below ``relevance_floor``
    overlap never qualify.  When nothing qualifies the decision is empty and
    its context delta names the best-matching problem as a pivot hint.
    """

    def __init__(self, relevance_floor: float = 0.25, prior_scale: float = 0.02, stop_markers: tuple[str, ...] = ("mitigated",)):
        self.relevance_floor = relevance_floor
        self.prior_scale = prior_scale
        self.stop_markers = stop_markers

    def _context_tokens(self, ctx: EpisodeContext) -> set[str]:
        toks = content_tokens(ctx.task)
        for _, o in ctx.history:
            if o.status == "ok":
                toks |= content_tokens(o.payload)
        return toks

    def _stopped(self, ctx: EpisodeContext) -> bool:
        return any(
            marker in o.payload.lower()
            for _, o in ctx.history
            if o.status == "ok"
            for marker in self.stop_markers
        )

    @staticmethod
    def overlap(text: str, context: set[str]) -> float:
        toks = content_tokens(text)
        if not toks:
            return 0.0
        return len(toks & context) / len(toks)

    def plan(self, ctx: EpisodeContext, subgraph: Subgraph, graph: WorkflowGraph, params: TraversalParams) -> PlannerDecision:
        if self._stopped(ctx):
            return PlannerDecision([], "")
        context = self._context_tokens(ctx)
        done = {a for a, _ in ctx.history}
        scored = []
        for nid in subgraph.nodes:
            n = graph.nodes[nid]
            if n.kind != NodeKind.ACTION or not n.enabled or nid in done:
                continue
            ov = self.overlap(n.canonical_text, context)
            if ov < self.relevance_floor:
                continue
            scored.append((-(ov + self.prior_scale * subgraph.weights[nid]), nid))
        scored.sort()
        actions = [nid for _, nid in scored[: params.k_a]]
        if actions:
            return PlannerDecision(actions, "")
        return PlannerDecision([], self._pivot_hint(subgraph, graph, context))

    def _pivot_hint(self, subgraph: Subgraph, graph: WorkflowGraph, context: set[str]) -> str:
        roots = set(subgraph.roots)
        best = None
        for nid in subgraph.nodes:
            n = graph.nodes[nid]
            if n.kind != NodeKind.PROBLEM:
                continue
            key = (nid not in roots, self.overlap(n.canonical_text, context), -nid)
            if best is None or key > best[0]:
                best = (key, n)
        return "" if best is None else f"pivot: {best[1].canonical_text}"

    def report(self, ctx: EpisodeContext, graph: WorkflowGraph, termination: str) -> str:
        lines = [f"Task: {ctx.task}", f"Termination: {termination}"]
        ok = [(a, o) for a, o in ctx.history if o.status == "ok"]
        other = [(a, o) for a, o in ctx.history if o.status != "ok"]
        if not ctx.history:
            lines.append("No actionable path found in the workflow graph.")
            return "\n".join(lines) + "\n"
        lines.append("Findings:")
        lines.extend(f"- {graph.nodes[a].canonical_text}: {o.payload}" for a, o in ok)
        if other:
            lines.append("Actions without usable results:")
            lines.extend(f"* {graph.nodes[a].canonical_text} [{o.status}]" for a, o in other)
        return "\n".join(lines) + "\n"


def report_claims(report: str) -> list[str]:
    """Claim lines of a reference-format report (the bullets under ``Findings:``)."""
    claims, inside = [], False
    for line in report.splitlines():
        if line.startswith("Findings:"):
            inside = True
        elif inside and line.startswith("- "):
            claims.append(line[2:])
        elif inside and line and not line.startswith("- "):
            inside = False
    return claims


def groundedness(trajectory: Trajectory) -> float:
    """Fraction of report claims whose payload matches an executed observation."""
    claims = report_claims(trajectory.report)
    if not claims:
        return 1.0
    payloads = [o.payload for o in trajectory.observations() if o.status == "ok" and o.payload]
    backed = sum(1 for c in claims if any(p in c for p in payloads))
    return backed / len(claims)


class EchoExecutor:
    """Reports every action as executed successfully."""

    def __call__(self, node: Node) -> Observation:
        return Observation("ok", f"executed {node.canonical_text}")


class ScriptedExecutor:
    """Looks observations up by action text; unknown actions return ``empty``."""

    def __init__(self, script: dict[str, Observation]):
        self.script = dict(script)

    @classmethod
    def load(cls, path) -> "ScriptedExecutor":
        with open(path, encoding="utf-8") as fh:
            raw = json.load(fh)
        return cls({k: Observation.from_dict(v) for k, v in raw.items()})

    def __call__(self, node: Node) -> Observation:
        for key in (node.text, node.canonical_text):
            if key in self.script:
                return self.script[key]
        for m in node.canonical_text.split(" | "):
            if m in self.script:
                return self.script[m]
        return Observation("empty", "")


def graph_loader(
    ctx: EpisodeContext,
    graph: WorkflowGraph,
    index: VectorIndex,
    params: TraversalParams,
    policy: LoaderPolicy,
    rng: np.random.Generator,
) -> Subgraph:
    """Retrieve fresh roots for the policy's query and expand them by weighted sampling."""
    decision = policy.decide(ctx)
    hits = index.top_k(
        Query(decision.query_text, decision.target_kind, params.k_p, frozenset(ctx.retrieved_roots))
    )
    roots = [nid for nid, _ in hits if nid in graph.nodes and graph.nodes[nid].enabled]
    ctx.retrieved_roots.update(roots)
    if not roots:
        return Subgraph(roots=[], nodes=[], edges=[], weights={})
    return graph.neighborhood(
        roots,
        params.m,
        edge_sampler(params.alpha, params.fanout, rng),
        direction="both",
        stop_kinds=(NodeKind.DOMAIN,),
    )


def _check_decision(decision: PlannerDecision, sub: Subgraph, graph: WorkflowGraph, params: TraversalParams) -> None:
    if len(decision.actions) > params.k_a:
        raise ProtocolError(f"planner returned {len(decision.actions)} actions, budget is {params.k_a}")
    for a in decision.actions:
        if a not in sub:
            raise ProtocolError(f"planner chose node {a}, which is not in the loaded subgraph")
        n = graph.nodes[a]
        if n.kind != NodeKind.ACTION or not n.enabled:
            raise ProtocolError(f"planner chose node {a}, which is not an enabled action")


def _execute(executor: Executor, node: Node) -> Observation:
    try:
        obs = executor(node)
    except Exception as exc:  # failures are evidence, not crashes
        logger.info("executor failed on node %d: %s", node.id, exc)
        return Observation("error", f"{type(exc).__name__}: {exc}")
    if not isinstance(obs, Observation):
        return Observation("error", f"executor returned {type(obs).__name__}, not an Observation")
    return obs


def _append_walk(traj: Trajectory, sub: Subgraph, graph: WorkflowGraph, action: NodeId, obs: Observation) -> None:
    path = sub.path_to(graph, action)
    nodes = [n for n, _ in path]
    last = traj.steps[-1].node if traj.steps else None
    if last in nodes:
        path = path[nodes.index(last) + 1 :]
    elif path:
        link = None
        if last is not None:
            between = graph.edges_between(last, path[0][0])
            leads = [e for e in between if graph.edges[e].kind == EdgeKind.LEADS_TO]
            link = (leads or between or [None])[0]
        path[0] = (path[0][0], link)
    for i, (nid, eid) in enumerate(path):
        traj.steps.append(Step(nid, eid, obs if i == len(path) - 1 else None))


def run_episode(
    task: str,
    graph: WorkflowGraph,
    index: VectorIndex,
    params: TraversalParams = TraversalParams(),
    loader_policy: LoaderPolicy | None = None,
    planner_policy: PlannerPolicy | None = None,
    executor: Executor | None = None,
) -> tuple[str, Trajectory]:
    """Run one traversal episode and return (final report, trajectory)."""
    loader_policy = loader_policy or ReferenceLoader()
    planner_policy = planner_policy or ReferencePlanner()
    executor = executor or EchoExecutor()
    rng = np.random.default_rng(params.seed)

    ctx = EpisodeContext(task)
    traj = Trajectory(task=task, seed=params.seed, params=dataclasses.asdict(params))
    executed: set[NodeId] = set()
    visited: set[NodeId] = set()
    termination = "budget"
    t = 0
    while t < params.max_outer:
        ctx.start_outer()
        decision = PlannerDecision([])
        root_sets: list[list[NodeId]] = []
        sub = Subgraph([], [], [], {})
        j = 0
        while not decision.actions and j < params.J:
            sub = graph_loader(ctx, graph, index, params, loader_policy, rng)
            root_sets.append(list(sub.roots))
            visited.update(sub.nodes)
            decision = planner_policy.plan(ctx, sub, graph, params)
            try:
                _check_decision(decision, sub, graph, params)
            except ProtocolError as exc:
                traj.termination = "protocol_error"
                raise ProtocolError(str(exc), ctx, traj) from None
            fresh = [a for a in dict.fromkeys(decision.actions) if a not in executed]
            if len(fresh) != len(decision.actions):
                logger.debug("dropping repeated actions from plan")
                decision = PlannerDecision(fresh, decision.context_delta)
            if decision.context_delta:
                ctx.temp.append(decision.context_delta)
            j += 1
        traj.inner_iterations.append(j)
        traj.root_sets.append(root_sets)
        if not decision.actions:
            termination = "no_actions"
            break
        for a in decision.actions:
            obs = _execute(executor, graph.nodes[a])
            ctx.record(a, obs)
            executed.add(a)
            _append_walk(traj, sub, graph, a, obs)
        ctx.rounds.append(list(decision.actions))
        t += 1

    traj.termination = termination
    traj.visited = sorted(visited)
    report = planner_policy.report(ctx, graph, termination)
    traj.report = report
    return report, traj
