"""One diagnostic episode walked step by step."""

# %% [markdown]
# The agent never sees the whole graph. Each round it retrieves a few root
# nodes that look like the current context, grows a small neighborhood around
# them by weighted sampling, and asks the planner which actions to run.

# %%
from atrgraph import TraversalParams, VectorIndex, build_graph, generate_corpus
from atrgraph.harness import SimulatedExecutor, scorers_for
from atrgraph.atr import score
from atrgraph.traversal import run_episode

traces, truth = generate_corpus(seed=0)
graph, _ = build_graph(traces, tau=0.01)
index = VectorIndex.rebuild(graph)
incident = truth.incidents[3]
print(incident.task)
print("hidden path:", incident.problems, incident.actions)

# %% [markdown]
# The simulated executor knows the incident's hidden resolution path. Actions
# on that path return what an engineer would see next. Anything else returns
# nothing.

# %%
executor = SimulatedExecutor(truth, incident, graph)
report, traj = run_episode(incident.task, graph, index, TraversalParams(seed=1), executor=executor)
print(report)

# %%
for step in traj.steps:
    node = graph.nodes[step.node]
    obs = f"  -> {step.observation.status}: {step.observation.payload}" if step.observation else ""
    print(f"{node.kind.value:8} {node.text[:60]}{obs}")
print("rounds:", traj.inner_iterations, "termination:", traj.termination)

# %% [markdown]
# The quality score mixes how much of the hidden path was covered with how
# well the report sticks to what the executor actually returned.

# %%
print("quality:", score(traj, scorers_for(truth, graph, incident)))
