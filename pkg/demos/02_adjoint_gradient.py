"""
Checking the adjoint gradient
=============================

The gradient of the boundary cost comes from an adjoint sweep that is the
exact transpose of the linearised time stepping. Here we confirm it against
central finite differences and look at the switching functions it produces.
"""

import numpy as np

from bousscontrol import duality_check, gradient_check, load_config, solve_adjoint

# %%
# The default configuration: an 8 x 8 cavity, 20 steps, outflow through the
# right wall penalised and the temperature trace on the horizontal walls
# rewarded (both with unit weight).
cfg = load_config()
prob = cfg.problem()
v = cfg.initial_controls(prob.domain, prob.time)

# %%
# Central differences along a random direction. The error falls by four
# each time epsilon halves, until roundoff takes over.
rep = gradient_check(prob, v, seed=0)
print(rep.table())

# %%
# Tangent and adjoint pairings agree to machine precision for any direction.
traj = prob.forward(v)
adj = solve_adjoint(traj, prob.weights)
rng = np.random.default_rng(0)
dv = (rng.standard_normal(v.v1.shape), rng.standard_normal(v.v2.shape))
print("duality gap:", duality_check(traj, dv, prob.weights, adj))

# %%
# The adjoint vanishes at the final time, and the switching functions tell
# which bound each control value should take: positive means the upper bound.
print("p(T), q(T) max:", np.abs(adj.p[-1]).max(), np.abs(adj.q[-1]).max())
side = prob.domain.faces.side[prob.domain.gamma1]
print("sign of s1 on the left wall :", np.unique(np.sign(adj.s1[:, side == "left"])))
print("sign of s1 on the right wall:", np.unique(np.sign(adj.s1[:, side == "right"])))
print("sign of s2:", np.unique(np.sign(adj.s2)))
