"""
Optimal boundary control and the bang-bang structure
====================================================

Minimise the boundary cost over box-constrained pressure and heat-flux
controls, then audit the result: every control value whose switching
function is clearly nonzero should sit on the bound its sign selects.
"""

import numpy as np

from bousscontrol import (GroupParametrization, brute_force_oracle, conditional_gradient_solve, load_config,
                          projected_gradient_solve)

cfg = load_config()
prob = cfg.problem()
v0 = cfg.initial_controls(prob.domain, prob.time)

# %%
# Projected gradient with Armijo backtracking, stopped when the optimality
# residual has dropped by six orders of magnitude.
pg = projected_gradient_solve(prob, v0)
for i, (J, R, s) in enumerate(zip(pg.J, pg.residual, pg.step_size)):
    print(f"iter {i:2d}  J={J:+.10f}  R={R:.3e}  step={s:g}")
print("termination:", pg.termination)
print("switching audit:", pg.switching)

# %%
# Conditional gradient jumps straight to the bang-bang vertex picked by the
# switching functions, so it needs a single step here.
fw = conditional_gradient_solve(prob, v0)
print("conditional gradient:", fw.n_iter, "iterations, J =", fw.J_final)
print("max control difference:", np.abs(fw.controls.flat() - pg.controls.flat()).max())

# %%
# An independent check: restrict the controls to three constants (inlet
# pressure, outlet pressure, wall heat flux) and enumerate a 9 x 9 x 9 grid.
par = GroupParametrization.inlet_outlet_walls(prob.domain, (0.1, 0.3, 0.1, 0.5))
res = brute_force_oracle(prob, par, levels=9, template=v0)
restricted = projected_gradient_solve(prob, v0, parametrization=par)
print("oracle best:", res.best_theta, res.best_J)
print("restricted optimizer:", restricted.x, restricted.J_final)
