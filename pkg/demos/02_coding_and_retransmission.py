# %% [markdown]
# # Network coding and node-1 retransmissions
#
# When node 4 already holds the primary packet node 2 is relaying, node 2
# can XOR it with a secondary packet node 3 holds: one transmission then
# serves both sessions.  The service chain of one primary packet tells how
# often that chance comes up.

# %%
import numpy as np

from cogsim.analytic import (build_chain_alg4, build_chain_alg5, inv_pi1, mu1_alg3,
                             optimize_q, pi3_alg4, region_alg4, region_alg5)
from cogsim.channel import retx_spec
from cogsim.engine import RunConfig, run
from cogsim.traffic import bernoulli

spec = retx_spec()
chain = build_chain_alg4(spec)
print("states:", chain.labels)
print(np.round(chain.P, 4))
print("stationary law:", np.round(chain.pi, 5))
print(f"pi1 = {chain.prob('1'):.8f}  closed form {mu1_alg3(spec):.8f}")
print(f"pi3 = {chain.prob('3'):.8f}  closed form {pi3_alg4(spec):.8f}")

# %% [markdown]
# ## Letting node 1 resend
# A packet only node 2 heard can also be resent by node 1 with probability
# q.  That slows the primary (1/pi1 grows with q) but here node 1 reaches
# nodes 3 and 4 jointly better than node 2 does, so more packets end up at
# node 4 and coding chances grow.

# %%
for q in (0.0, 0.25, 0.5, 0.75, 1.0):
    ch = build_chain_alg5(spec, q)
    print(f"q={q:.2f}: mean service {1 / ch.prob('1'):.4f} (closed form {float(inv_pi1(spec, q)):.4f}),"
          f" coded slots per packet {ch.visits_per_cycle('3'):.4f}")

# %%
r4, r5 = region_alg4(spec), region_alg5(spec)
print(" r1     alg4    alg5    best q")
for x in np.linspace(0, r4.r1_max, 9):
    c = optimize_q(spec, x)
    print(f"{x:.3f}  {r4.r2_max(x):.4f}  {c.r2:.4f}  {c.q:.3f}")

# %% [markdown]
# ## Simulated check at one point

# %%
c = optimize_q(spec, 0.06)
m4 = run(RunConfig(4, spec, bernoulli(0.06), 300_000, seed=3))
m5 = run(RunConfig(5, spec, bernoulli(0.06), 300_000, q=c.q, seed=3))
print(f"alg4 r2={m4.r2:.4f} (analytic {r4.r2_max(0.06):.4f})")
print(f"alg5 r2={m5.r2:.4f} (analytic {c.r2:.4f}, q={c.q})")
