# %% [markdown]
# # A noisy Nash-Cournot market
#
# Five firms choose quantities in `[0, 30]`. Each sees only its own marginal
# cost, perturbed by a demand shock, and the market caps total output at 56.

# %%
import numpy as np

from onlinemep import engine, graph, metrics, oracle, problem

inst = problem.example2()
seq = graph.example2_graphs()
T = 100
sched = engine.StepSchedule.fixed(0.5, 1 / 3, horizon=T, shift=30)
noise = oracle.NoiseModel.for_instance(inst)

# %% [markdown]
# The equilibrium at round 0 is `(0, 5, 10, 15, 20)`; later rounds can push
# the capacity constraint into play.

# %%
for t in (0, 20, 27):
    print(t, np.round(oracle.solve_instantaneous(inst, t), 4), "printed:",
          np.round(inst.solution_path(t), 4))

# %% [markdown]
# Twenty seeds of the stochastic algorithm. `R_t / t` drops between rounds 10
# and 100 for every one of them.

# %%
finals = []
for seed in range(20):
    tr = engine.run_stochastic(inst, seq, sched, T, noise=noise, seed=seed)
    R = metrics.max_over_agents([metrics.dynamic_regret(tr, inst, i) for i in range(5)])
    finals.append((R.over_t[10], R.over_t[100]))
finals = np.array(finals)
print("R_10/10 mean", finals[:, 0].mean(), " R_100/100 mean", finals[:, 1].mean())

# %% [markdown]
# Taking the printed sign on the epsilon terms literally leaves no feasible
# output level at all.

# %%
try:
    oracle.check_feasible(problem.example2("paper"))
except oracle.InfeasibleError as exc:
    print("infeasible:", exc)
