"""Adaptive traversal reinforcement.

Quality scoring, deposition, decay, reinforcement-weighted edge sampling,
LEADS_TO synthesis and the Gini concentration statistic.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import Callable, Mapping, Sequence

import numpy as np

from .graph import Edge, EdgeKind, NodeKind, ValidationError, WorkflowGraph
from .trajectory import Trajectory

logger = logging.getLogger(__name__)

Scorer = Callable[[Trajectory], "float | None"]


@dataclass(frozen=True)
class QualityWeights:
    useful: float = 0.5
    grounded: float = 0.5
    user: float = 0.0

    def __post_init__(self) -> None:
        parts = (self.useful, self.grounded, self.user)
        if any(w < 0 for w in parts):
            raise ValidationError("quality weights must be non-negative")
        if not math.isclose(sum(parts), 1.0, abs_tol=1e-9):
            raise ValidationError(f"quality weights must sum to 1, got {sum(parts)}")


@dataclass(frozen=True)
class AtrParams:
    delta_q: float = 0.8
    rho: float = 0.0
    alpha: float = 1.0

    def __post_init__(self) -> None:
        if not 0.0 <= self.delta_q <= 1.0:
            raise ValidationError("delta_q must lie in [0, 1]")
        if not 0.0 <= self.rho < 1.0:
            raise ValidationError("rho must lie in [0, 1)")
        if self.alpha < 0:
            raise ValidationError("alpha must be >= 0")


def _unit(name: str, value: float) -> float:
    if not (0.0 <= value <= 1.0):
        raise ValidationError(f"{name} score {value} is outside [0, 1]")
    return float(value)


def score(
    trajectory: Trajectory,
    scorers: Mapping[str, Scorer],
    weights: QualityWeights = QualityWeights(),
) -> float:
    """Weighted quality of a trajectory.

    ``scorers`` maps ``"usefulness"``, ``"groundedness"`` and optionally
    ``"user_score"`` to callables.  A user score that is present (not None)
    overrides everything else.
    """
    user_fn = scorers.get("user_score")
    user = user_fn(trajectory) if user_fn is not None else None
    if user is not None:
        return _unit("user", user)
    useful = _unit("usefulness", scorers["usefulness"](trajectory))
    grounded = _unit("groundedness", scorers["groundedness"](trajectory))
    return weights.useful * useful + weights.grounded * grounded


def deposit(graph: WorkflowGraph, trajectory: Trajectory, quality: float, params: AtrParams = AtrParams()) -> float:
    """Add Q/|T| to every distinct node and edge of the trajectory when Q >= delta_q.

    Returns the per-element increment actually applied (0.0 below threshold).
    """
    if quality < params.delta_q or not trajectory.steps:
        return 0.0
    delta = quality / len(trajectory.steps)
    nodes = {s.node for s in trajectory.steps}
    edges = {s.edge for s in trajectory.steps if s.edge is not None}
    for nid in sorted(nodes):
        n = graph.nodes.get(nid)
        if n is None:
            logger.warning("deposit: node %s no longer in graph, skipped", nid)
            continue
        n.weight += delta
    for eid in sorted(edges):
        e = graph.edges.get(eid)
        if e is None:
            logger.warning("deposit: edge %s no longer in graph, skipped", eid)
            continue
        e.weight += delta
    return delta


def decay(graph: WorkflowGraph, rho: float) -> None:
    """Scale every node and edge weight by (1 - rho)."""
    if not 0.0 <= rho < 1.0:
        raise ValidationError(f"rho must lie in [0, 1), got {rho}")
    if rho == 0.0:
        return
    f = 1.0 - rho
    for n in graph.nodes.values():
        n.weight *= f
    for e in graph.edges.values():
        e.weight *= f


def selection_weights(phis: np.ndarray, alpha: float) -> np.ndarray:
    """Unnormalized [log(1 + phi)]^alpha; alpha = 0 gives all ones."""
    if alpha == 0:
        return np.ones(len(phis))
    return np.log1p(np.asarray(phis, dtype=float)) ** alpha


def edge_probabilities(phis: Sequence[float], alpha: float) -> np.ndarray:
    """First-draw probabilities over ``phis``; uniform when every weight is zero."""
    w = selection_weights(np.asarray(phis, dtype=float), alpha)
    total = w.sum()
    if not total > 0:
        return np.full(len(w), 1.0 / len(w))
    return w / total


def sample_edges(
    candidates: Sequence[Edge],
    alpha: float,
    budget: int,
    rng: np.random.Generator,
) -> list[Edge]:
    """Draw up to ``budget`` edges without replacement, re-normalizing after each draw."""
    if budget < 1:
        raise ValidationError("budget must be >= 1")
    if not candidates:
        raise ValidationError("no candidate edges")
    remaining = list(candidates)
    w = selection_weights(np.array([e.weight for e in remaining]), alpha)
    chosen: list[Edge] = []
    for _ in range(min(budget, len(remaining))):
        total = w.sum()
        if total > 0:
            i = int(rng.choice(len(remaining), p=w / total))
        else:
            i = int(rng.integers(len(remaining)))
        chosen.append(remaining.pop(i))
        w = np.delete(w, i)
    return chosen


def edge_sampler(alpha: float, budget: int, rng: np.random.Generator) -> Callable[[list[Edge]], list[Edge]]:
    """Bind ``sample_edges`` into the sampler callable ``WorkflowGraph.neighborhood`` takes."""

    def _sample(candidates: list[Edge]) -> list[Edge]:
        return sample_edges(candidates, alpha, budget, rng)

    return _sample


def synthesize_edges(graph: WorkflowGraph, trajectory: Trajectory, delta_q: float = 0.8) -> int:
    """Create LEADS_TO edges between consecutively executed, unlinked actions.

    Only successful trajectories (quality >= delta_q) synthesize.  The new
    edge starts at phi0 plus this trajectory's deposition increment.
    """
    q = trajectory.quality
    if q is None or q < delta_q or not trajectory.steps:
        return 0
    delta = q / len(trajectory.steps)
    executed = trajectory.executed
    created = 0
    for prev, cur in zip(executed, executed[1:]):
        a, b = prev.node, cur.node
        if a == b or a not in graph.nodes or b not in graph.nodes:
            continue
        na, nb = graph.nodes[a], graph.nodes[b]
        if na.kind != NodeKind.ACTION or nb.kind != NodeKind.ACTION:
            continue
        if graph.find_edge(a, b, EdgeKind.LEADS_TO) is not None:
            continue
        eid = graph.add_edge(a, b, EdgeKind.LEADS_TO, synthesized=True, weight=graph.phi0 + delta)
        graph.edges[eid].anchors = (_anchor(na, prev), _anchor(nb, cur))
        created += 1
    return created


def _anchor(node, step) -> int | None:
    if not node.is_representative:
        return node.id
    member = step.observation.member if step.observation is not None else None
    return member if member in node.cluster_members else None


def gini(weights: Sequence[float]) -> float:
    """Gini coefficient sum_ij |w_i - w_j| / (2 n sum w), via the sorted-rank identity."""
    w = np.sort(np.asarray(weights, dtype=float))
    n = len(w)
    if n == 0:
        raise ValidationError("gini of an empty sequence is undefined")
    if np.any(w < 0):
        raise ValidationError("gini needs non-negative weights")
    total = w.sum()
    if total <= 0:
        raise ValidationError("gini of all-zero weights is undefined")
    ranks = np.arange(1, n + 1)
    # equal weights can cancel to a tiny negative
    return max(0.0, float(np.sum((2 * ranks - n - 1) * w) / (n * total)))


def node_gini(graph: WorkflowGraph) -> float:
    return gini([n.weight for n in graph.iter_nodes(enabled=True)])


def edge_gini(graph: WorkflowGraph) -> float:
    return gini([e.weight for e in graph.active_edges()])
