# %% [markdown]
# # Zero operator and constraint geometry
#
# Without a diffusion term the eigenvalue is the minimum of the cost, and
# the eigenfunction is a cone centred at the minimiser.  Its slopes are given
# by the support function of the constraint set, which is also the object
# behind every gradient check in the package.

# %%
import numpy as np

from gceigen import ConstraintH, Grid, SupportFunction, builtin, solve_eigen

spec = builtin("degenerate_zeroF")
grid = Grid.cube(3.0, 1, 2e-3)
pair = solve_eigen(spec, grid)
print(f"lambda* = {pair.lam_star:.3e} at x0 = {pair.x0[0]:.4f}")
print(f"residual away from the kink: {pair.residual.sup_abs_filtered:.2e}")

# %% [markdown]
# ## Support functions and gauges
#
# `ell(v) = max{p.v : H(p) <= 0}`.  The gauge `H0(p) = max_{|v|=1} p.v - ell(v)`
# has the same sign as `H` and is what the solvers evaluate.

# %%
shapes = {
    "disc": ConstraintH.ball(2),
    "square": ConstraintH.box(2),
    "ellipse": ConstraintH.ellipsoid(np.diag([1.0, 4.0])),
    "custom superellipse": ConstraintH.custom(lambda p: np.sum(p**4, axis=-1) - 1, 2),
}
v = np.array([[1.0, 0.0], [1.0, 1.0], [0.0, 1.0]])
p = np.array([[0.5, 0.5], [1.0, 1.0]])
for name, H in shapes.items():
    ell = SupportFunction(H)
    print(f"{name:20s} ell = {np.round(ell(v), 4)}  H0 = {np.round(ell.gauge(p), 4)}  "
          f"c0 = {ell.c0:.3f}  c1 = {ell.c1:.3f}")
