# %% [markdown]
# # Control strategies on one graph, then replicated
#
# One replication draws a graph, per-node rates and the initially infected
# nodes from a seed.  Every strategy cell of the same replication reuses
# that draw, so differences between cells are not sampling noise.
#
# `python3 notebooks/02_control_strategies.py [n_iter]` (default 2; ten
# replications of the full table take about half a minute per topology).

# %%
import sys

import numpy as np

from netsir import (
    ControlStrategy,
    EpidemicParams,
    Kind,
    TopologyConfig,
    build_payoff_matrix,
    experiment1,
    metrics,
    pure_nash,
    resolve_schedule,
    run_epidemic,
)
from netsir.games import cell_names
from netsir.scenarios import draw_replication, interaction_effect, replication_seed

n_iter = int(sys.argv[1]) if len(sys.argv) > 1 else 2
topo, params = TopologyConfig(), EpidemicParams()

# %% [markdown]
# ## A single run per strategy

# %%
rep = draw_replication(topo, params, replication_seed(0, 0))
for kind in Kind:
    sched = resolve_schedule([ControlStrategy(kind)] * 2, params.steps)
    tr = run_epidemic(rep.weights, rep.labels, params, sched, rep.beta, rep.delta,
                      state=rep.init, rng=np.random.default_rng(rep.vacc_seed))
    peak, t = metrics.peak_mean_infection(tr)
    print(f"{kind.label:9s} load {metrics.infection_load(tr):.3f}  "
          f"peak mean {peak:.3f} at step {t:4d}  doses {sum(len(v) for _, v in tr.events)}")

# %% [markdown]
# ## The timing table
#
# Interventions that start after the epidemic peak cannot lower a load
# defined through each node's worst moment, so the late row collapses onto
# the uncontrolled value.

# %%
table = experiment1(topo, params, n_iter=n_iter, seed=0)
print("timing   " + "".join(f"{k.label:>10s}" for k in Kind))
for timing in ("EARLY", "MID", "LATE"):
    print(f"{timing:8s} " + "".join(f"{table[(timing, k.label)].infection_load:10.3f}" for k in Kind))

# %% [markdown]
# ## Two groups, sixteen cells

# %%
for layout in ("hom", "block"):
    pm = build_payoff_matrix(TopologyConfig(topology=layout), params, n_iter=n_iter, seed=0)
    print(f"\n{layout}: baseline per group {np.round(pm.baseline, 3)}")
    print("group 0 change\n", np.round(pm.delta[..., 0], 3))
    print("group 1 change\n", np.round(pm.delta[..., 1], 3))
    print("equilibria", cell_names(pure_nash(pm.delta)))
    print("interaction, both groups acting", np.round(interaction_effect(pm, "cooperative"), 3))
    print("interaction, one group acting  ", np.round(interaction_effect(pm, "unilateral"), 3))
