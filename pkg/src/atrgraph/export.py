"""Graphviz export and weight statistics."""

from __future__ import annotations

import json

import numpy as np

from .atr import edge_gini, node_gini
from .graph import NodeKind, WorkflowGraph

_SHAPES = {NodeKind.DOMAIN: "folder", NodeKind.PROBLEM: "ellipse", NodeKind.ACTION: "box"}


def _quote(text: str) -> str:
    return json.dumps(text, ensure_ascii=False)


def to_dot(graph: WorkflowGraph, header: str = "", include_disabled: bool = False) -> str:
    """DOT text where node size and edge pen width grow with reinforcement weight."""
    nodes = list(graph.iter_nodes(enabled=None if include_disabled else True))
    keep = {n.id for n in nodes}
    edges = [e for e in graph.iter_edges() if e.src in keep and e.dst in keep]
    top_n = max((n.weight for n in nodes), default=1.0) or 1.0
    top_e = max((e.weight for e in edges), default=1.0) or 1.0
    lines = [f"// {header}"] if header else []
    lines.append("digraph workflow {")
    lines.append("  node [fontsize=10];")
    for n in nodes:
        size = 0.3 + 1.2 * n.weight / top_n
        style = "" if n.enabled else ", style=dashed"
        label = n.canonical_text if len(n.canonical_text) <= 60 else n.canonical_text[:57] + "..."
        lines.append(
            f"  n{n.id} [label={_quote(label)}, shape={_SHAPES[n.kind]}, "
            f"width={size:.3f}, height={size / 2:.3f}, tooltip={_quote(f'w={n.weight:.4g}')}{style}];"
        )
    for e in edges:
        width = 0.5 + 4.5 * e.weight / top_e
        style = ", style=dashed" if e.synthesized else ""
        lines.append(f"  n{e.src} -> n{e.dst} [label={_quote(e.kind.value)}, penwidth={width:.3f}{style}];")
    lines.append("}")
    return "\n".join(lines) + "\n"


def weight_stats(graph: WorkflowGraph) -> dict:
    """Counts, weight quantiles and Gini over enabled nodes and active edges."""

    def describe(ws: list[float]) -> dict:
        if not ws:
            return {"count": 0}
        a = np.asarray(ws)
        q = np.quantile(a, [0.0, 0.25, 0.5, 0.75, 1.0])
        return {
            "count": len(ws),
            "total": float(a.sum()),
            "mean": float(a.mean()),
            "quantiles": dict(zip(("min", "p25", "median", "p75", "max"), map(float, q))),
        }

    nw = [n.weight for n in graph.iter_nodes(enabled=True)]
    ew = [e.weight for e in graph.active_edges()]
    out = {
        "summary": graph.summary(),
        "node_weights": describe(nw),
        "edge_weights": describe(ew),
        "node_gini": node_gini(graph) if nw and sum(nw) > 0 else None,
        "edge_gini": edge_gini(graph) if ew and sum(ew) > 0 else None,
    }
    return out
