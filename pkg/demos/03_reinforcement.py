"""Watching reinforcement concentrate weight on useful paths."""

# %% [markdown]
# After each batch of episodes, good trajectories deposit weight on the nodes
# and edges they used. Actions that were run back to back but had no edge
# between them get a new one. We keep decay off and sample uniformly so the
# concentration we see comes from deposits alone.

# %%
from atrgraph import AtrParams, build_graph, generate_corpus
from atrgraph.harness import (
    context_size_comparison,
    format_ablation,
    format_epoch_table,
    run_ablation,
    run_evolution,
)

traces, truth = generate_corpus(seed=0)
graph, _ = build_graph(traces, tau=0.01)
reports = run_evolution(graph, truth, truth.incidents, epochs=6, per_epoch=15, atr_params=AtrParams(rho=0.0, alpha=0.0))
print(format_epoch_table(reports))

# %% [markdown]
# Both Gini coefficients climb every epoch: a growing share of the total
# weight sits on a shrinking set of well-trodden elements.
#
# Next, the learned weights against the same graph reset to uniform, with
# sampling now following the weights.

# %%
print(format_ablation(run_ablation(graph, truth, truth.incidents, AtrParams(alpha=1.0), runs_per_condition=2)))

# %% [markdown]
# At this scale the difference is small and can go either way. The
# probability of picking a true-path edge on the first draw is the cleaner
# signal.
#
# Finally, the amount of text each retrieval style would hand to a model.

# %%
sizes = context_size_comparison(graph, traces, truth.incidents, k=10)
print(sizes["mean"], sizes["ratios"])
