"""Trace ingestion and per-trace workflow extraction.

Trace corpus format (JSON lines, one trace per line)::

    {"schema": 1, "trace_id": "INC-1", "title": "...", "timestamp": "...",
     "domain": "storage",            # optional, falls back to the corpus config
     "body": [{"kind": "problem", "text": "..."},
              {"kind": "action", "text": "...", "refs": [0]},
              {"kind": "observation", "text": "..."},
              {"kind": "noise", "text": "..."}]}

``refs`` holds indices of earlier body entries; an action that refs a
problem entry resolves that problem.
"""

from __future__ import annotations

import json
import logging
import os
from dataclasses import dataclass, field
from typing import Iterable, Sequence

from .clustering import DEFAULT_TAU, MergeReport, incremental_merge
from .embedding import DEFAULT_EMBEDDER, EmbeddingProvider
from .graph import EdgeKind, NodeKind, WorkflowGraph
from .masking import DEFAULT_RULES, MaskingRule, canonicalize, rules_from_config

logger = logging.getLogger(__name__)

TRACE_SCHEMA = 1
ENTRY_KINDS = ("problem", "action", "observation", "noise")


class TraceParseError(ValueError):
    def __init__(self, message: str, line: int | None = None):
        self.line = line
        super().__init__(f"line {line}: {message}" if line is not None else message)


@dataclass(frozen=True)
class TraceEntry:
    kind: str
    text: str
    refs: tuple[int, ...] = ()

    @property
    def is_noise(self) -> bool:
        return self.kind == "noise"


@dataclass
class Trace:
    trace_id: str
    title: str
    body: list[TraceEntry]
    timestamp: str = ""
    domain: str | None = None

    @property
    def noise_entries(self) -> list[int]:
        return [i for i, e in enumerate(self.body) if e.is_noise]

    def to_dict(self) -> dict:
        d = {
            "schema": TRACE_SCHEMA,
            "trace_id": self.trace_id,
            "title": self.title,
            "timestamp": self.timestamp,
            "body": [
                {"kind": e.kind, "text": e.text, **({"refs": list(e.refs)} if e.refs else {})}
                for e in self.body
            ],
        }
        if self.domain is not None:
            d["domain"] = self.domain
        return d

    def dumps(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)

    def full_text(self) -> str:
        """Every entry, noise included, as a raw trace would read."""
        lines = [f"{self.trace_id} {self.timestamp} {self.title}".strip()]
        lines.extend(f"[{e.kind}] {e.text}" for e in self.body)
        return "\n".join(lines)

    def summary_text(self) -> str:
        """Problem and action lines only."""
        lines = [self.title]
        lines.extend(f"{e.kind}: {e.text}" for e in self.body if e.kind in ("problem", "action"))
        return "\n".join(lines)


@dataclass
class CorpusConfig:
    domain: str = "default"
    tau: float = DEFAULT_TAU
    rules: tuple[MaskingRule, ...] = DEFAULT_RULES

    @classmethod
    def from_dict(cls, d: dict) -> "CorpusConfig":
        rules = rules_from_config(d["masking_rules"]) if d.get("masking_rules") else DEFAULT_RULES
        return cls(domain=d.get("domain", "default"), tau=float(d.get("tau", DEFAULT_TAU)), rules=rules)


@dataclass
class WorkflowExtract:
    trace_id: str
    graph: WorkflowGraph
    warnings: list[str] = field(default_factory=list)

    @property
    def empty(self) -> bool:
        return not self.graph.nodes


def parse_trace(raw: str | dict, line: int | None = None) -> Trace:
    """Validate one trace document (a JSON string or an already-decoded dict)."""
    if isinstance(raw, str):
        try:
            raw = json.loads(raw)
        except json.JSONDecodeError as exc:
            raise TraceParseError(f"invalid JSON: {exc.msg}", line) from None
    if not isinstance(raw, dict):
        raise TraceParseError("trace must be a JSON object", line)
    schema = raw.get("schema", TRACE_SCHEMA)
    if schema != TRACE_SCHEMA:
        raise TraceParseError(f"unsupported trace schema {schema!r}", line)
    trace_id = raw.get("trace_id")
    if not isinstance(trace_id, str) or not trace_id:
        raise TraceParseError("missing trace_id", line)
    body = raw.get("body")
    if not isinstance(body, list) or not body:
        raise TraceParseError(f"trace {trace_id}: body must be a non-empty list", line)
    entries = []
    for i, item in enumerate(body):
        if not isinstance(item, dict):
            raise TraceParseError(f"trace {trace_id}: entry {i} is not an object", line)
        kind = item.get("kind")
        if kind not in ENTRY_KINDS:
            raise TraceParseError(f"trace {trace_id}: entry {i} has unknown kind {kind!r}", line)
        text = item.get("text")
        if not isinstance(text, str) or not text.strip():
            raise TraceParseError(f"trace {trace_id}: entry {i} has no text", line)
        refs = item.get("refs", [])
        if not isinstance(refs, list) or any(not isinstance(r, int) or not 0 <= r < i for r in refs):
            raise TraceParseError(f"trace {trace_id}: entry {i} refs must point to earlier entries", line)
        entries.append(TraceEntry(kind, text, tuple(refs)))
    domain = raw.get("domain")
    return Trace(
        trace_id=trace_id,
        title=str(raw.get("title", "")),
        body=entries,
        timestamp=str(raw.get("timestamp", "")),
        domain=domain if isinstance(domain, str) and domain else None,
    )


def parse_corpus(text: str) -> tuple[list[Trace], list[TraceParseError]]:
    """Parse a JSON-lines corpus; bad lines are reported, not fatal."""
    traces, errors, seen = [], [], set()
    for lineno, line in enumerate(text.splitlines(), start=1):
        if not line.strip():
            continue
        try:
            t = parse_trace(line, lineno)
        except TraceParseError as exc:
            errors.append(exc)
            continue
        if t.trace_id in seen:
            errors.append(TraceParseError(f"duplicate trace_id {t.trace_id}", lineno))
            continue
        seen.add(t.trace_id)
        traces.append(t)
    return traces, errors


def load_corpus(path: str | os.PathLike) -> tuple[list[Trace], list[TraceParseError]]:
    with open(path, encoding="utf-8") as fh:
        return parse_corpus(fh.read())


def dump_corpus(traces: Iterable[Trace]) -> str:
    return "".join(t.dumps() + "\n" for t in traces)


def extract_workflow(trace: Trace, config: CorpusConfig = CorpusConfig()) -> WorkflowExtract:
    """Reference rule-based extractor.

    Problems and actions become nodes (repeats within a trace collapse onto
    one node); consecutive problems are chained by CAUSES, consecutive
    actions by LEADS_TO; each action RESOLVES the problem it refs, else the
    nearest preceding unresolved problem, else the nearest preceding
    problem.  Everything belongs to the trace's domain.  Observation and
    noise entries are not turned into nodes.
    """
    g = WorkflowGraph(rules=config.rules)
    prov = [trace.trace_id]
    kept = [(i, e) for i, e in enumerate(trace.body) if e.kind in ("problem", "action")]
    if not kept:
        logger.warning("trace %s has no problem or action entries", trace.trace_id)
        return WorkflowExtract(trace.trace_id, g, [f"trace {trace.trace_id}: nothing to extract"])

    domain = g.add_node(NodeKind.DOMAIN, trace.domain or config.domain, prov)
    by_text: dict[tuple[NodeKind, str], int] = {}
    entry_node: dict[int, int] = {}
    for i, e in kept:
        kind = NodeKind.PROBLEM if e.kind == "problem" else NodeKind.ACTION
        key = (kind, canonicalize(e.text, config.rules))
        if key not in by_text:
            by_text[key] = g.add_node(kind, e.text, prov)
            g.add_edge(by_text[key], domain, EdgeKind.BELONGS_TO, provenance=prov)
        entry_node[i] = by_text[key]

    prev_problem = prev_action = None
    problems_seen: list[int] = []
    resolved: set[int] = set()
    for i, e in kept:
        nid = entry_node[i]
        if e.kind == "problem":
            if prev_problem is not None and prev_problem != nid:
                g.add_edge(prev_problem, nid, EdgeKind.CAUSES, provenance=prov)
            prev_problem = nid
            problems_seen.append(nid)
            continue
        if prev_action is not None and prev_action != nid:
            g.add_edge(prev_action, nid, EdgeKind.LEADS_TO, provenance=prov)
        prev_action = nid
        targets = [entry_node[r] for r in e.refs if trace.body[r].kind == "problem"]
        if not targets:
            unresolved = [p for p in reversed(problems_seen) if p not in resolved]
            if unresolved:
                targets = [unresolved[0]]
            elif problems_seen:
                targets = [problems_seen[-1]]
        for p in targets:
            g.add_edge(nid, p, EdgeKind.RESOLVES, provenance=prov)
            resolved.add(p)
    return WorkflowExtract(trace.trace_id, g)


def build_graph(
    corpus: Sequence[Trace],
    tau: float = DEFAULT_TAU,
    config: CorpusConfig = CorpusConfig(),
    embedder: EmbeddingProvider = DEFAULT_EMBEDDER,
    graph: WorkflowGraph | None = None,
) -> tuple[WorkflowGraph, MergeReport]:
    """Extract every trace and merge the fragments into ``graph`` (a new one by default)."""
    graph = graph if graph is not None else WorkflowGraph(rules=config.rules)
    fragments, failures = [], []
    for trace in corpus:
        try:
            ex = extract_workflow(trace, config)
        except Exception as exc:
            logger.warning("extraction failed for %s: %s", trace.trace_id, exc)
            failures.append((trace.trace_id, [f"extraction failed: {exc}"]))
            continue
        if not ex.empty:
            fragments.append(ex)
    report = incremental_merge(graph, fragments, tau, embedder)
    report.rejected[:0] = failures
    return graph, report
