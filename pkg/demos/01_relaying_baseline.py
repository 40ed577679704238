# %% [markdown]
# # Relaying for the primary user
#
# Node 1 (primary) sends to node 3 over a lossy link: node 3 misses 80% of
# its packets.  Node 2 (secondary, sending to node 4) overhears node 1 with
# only 20% loss and reaches node 3 with 20% loss.  Forwarding the packets
# node 2 overhears speeds up the primary and frees idle slots that the
# secondary can then use.

# %%
import numpy as np

from cogsim.analytic import busy_idle, mu1_alg1, mu1_alg3, region_alg1, region_alg3
from cogsim.channel import baseline_spec
from cogsim.engine import RunConfig, busy_idle_stats, simulate
from cogsim.traffic import bernoulli

spec = baseline_spec()
print("erasure at 3 from node 1:", spec.eps(1, 3))
print("erasure at 2 and 3 jointly:", round(spec.eps(1, 2, 3), 4))
print(f"primary service rate without help {mu1_alg1(spec):.4f}, with relaying {mu1_alg3(spec):.4f}")

# %% [markdown]
# ## Throughput regions
# Each region is a triangle: the secondary gets `1 - eps(2,{4})` of every
# slot the primary queue leaves idle.

# %%
r1 = np.linspace(0, 0.45, 10)
print(" r1     alg1   alg3")
for x, a, b in zip(r1, region_alg1(spec).r2_max(r1), region_alg3(spec).r2_max(r1)):
    print(f"{x:.3f}  {a:.4f} {b:.4f}")

# %% [markdown]
# ## Check against the slot simulator
# A few points at moderate load, 2e5 slots each.

# %%
for alg, reg in ((1, region_alg1(spec)), (3, region_alg3(spec))):
    for lam in (0.05, 0.15):
        run = simulate(RunConfig(alg, spec, bernoulli(lam), 200_000, seed=1))
        m = run.metrics
        print(f"alg{alg} lam={lam}: r1={m.r1:.4f} r2={m.r2:.4f} (analytic {reg.r2_max(lam):.4f}), "
              f"mean service {m.service_mean:.2f} slots")

# %% [markdown]
# ## Busy and idle periods
# The primary queue alternates busy and idle periods; with Bernoulli(0.1)
# arrivals the idle period is geometric with mean 10.

# %%
run = simulate(RunConfig(1, spec, bernoulli(0.1), 400_000, seed=2))
bi = busy_idle_stats(run)
print("simulated busy/idle:", round(bi.busy_mean, 2), round(bi.idle_mean, 2), f"({bi.cycles} cycles)")
print("formula busy/idle:  ", busy_idle(0.1, mu1_alg1(spec), 0.9))
