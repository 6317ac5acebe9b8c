"""Episode trajectories and executor observations, plus their JSON-lines format."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Any

from .graph import EdgeId, NodeId

STATUSES = ("ok", "empty", "error")


@dataclass
class Observation:
    status: str
    payload: str = ""
    metric: float | None = None
    # concrete cluster member the execution resolved to, when the node is a representative
    member: NodeId | None = None

    def __post_init__(self) -> None:
        if self.status not in STATUSES:
            raise ValueError(f"observation status must be one of {STATUSES}, got {self.status!r}")

    def to_dict(self) -> dict:
        d: dict[str, Any] = {"status": self.status, "payload": self.payload, "metric": self.metric}
        if self.member is not None:
            d["member"] = self.member
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "Observation":
        return cls(d["status"], d.get("payload", ""), d.get("metric"), d.get("member"))


@dataclass
class Step:
    node: NodeId
    edge: EdgeId | None = None
    observation: Observation | None = None

    @property
    def executed(self) -> bool:
        return self.observation is not None


@dataclass
class Trajectory:
    task: str
    steps: list[Step] = field(default_factory=list)
    seed: int | None = None
    params: dict = field(default_factory=dict)
    termination: str | None = None
    quality: float | None = None
    report: str = ""
    visited: list[NodeId] = field(default_factory=list)
    inner_iterations: list[int] = field(default_factory=list)
    root_sets: list[list[list[NodeId]]] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.steps)

    @property
    def executed(self) -> list[Step]:
        return [s for s in self.steps if s.executed]

    @property
    def executed_actions(self) -> list[NodeId]:
        return [s.node for s in self.steps if s.executed]

    def observations(self) -> list[Observation]:
        return [s.observation for s in self.steps if s.observation is not None]

    def header(self) -> dict:
        return {
            "type": "episode",
            "task": self.task,
            "seed": self.seed,
            "params": self.params,
            "termination": self.termination,
            "quality": self.quality,
            "report": self.report,
            "visited": self.visited,
            "inner_iterations": self.inner_iterations,
            "root_sets": self.root_sets,
        }

    def to_jsonl(self) -> str:
        lines = [json.dumps(self.header(), sort_keys=True)]
        for i, s in enumerate(self.steps):
            lines.append(
                json.dumps(
                    {
                        "type": "step",
                        "index": i,
                        "node": s.node,
                        "edge": s.edge,
                        "observation": None if s.observation is None else s.observation.to_dict(),
                    },
                    sort_keys=True,
                )
            )
        return "\n".join(lines) + "\n"

    @classmethod
    def from_jsonl(cls, text: str) -> "Trajectory":
        rows = [json.loads(line) for line in text.splitlines() if line.strip()]
        if not rows or rows[0].get("type") != "episode":
            raise ValueError("trajectory file must start with an episode header")
        h = rows[0]
        traj = cls(
            task=h["task"],
            seed=h.get("seed"),
            params=h.get("params", {}),
            termination=h.get("termination"),
            quality=h.get("quality"),
            report=h.get("report", ""),
            visited=h.get("visited", []),
            inner_iterations=h.get("inner_iterations", []),
            root_sets=h.get("root_sets", []),
        )
        for row in rows[1:]:
            obs = row.get("observation")
            traj.steps.append(
                Step(row["node"], row.get("edge"), None if obs is None else Observation.from_dict(obs))
            )
        return traj
