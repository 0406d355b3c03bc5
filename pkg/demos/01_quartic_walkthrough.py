# %% [markdown]
# # One-dimensional walkthrough
#
# The smallest interesting problem: `F = -u''`, gradient constraint `|u'| <= 1`
# and cost `f(x) = x^2`.  Inside the contact interval the equation
# `lam - u'' = x^2` holds, outside it `|u'| = 1`.  Matching `u'` and `u''`
# at the free boundary pins the eigenvalue to `(3/2)^(2/3)`.

# %%
import numpy as np

from gceigen import Grid, SolverParams, builtin, solve_eigen, validate
from gceigen.radial import RadialProblem, smooth_fit_solve

spec = builtin("quartic1d")
report = validate(spec)
print("assumptions hold:", report.ok)
for check in report.checks:
    print(f"  {check.name:22s} {check.passed}")

# %% [markdown]
# ## Reference value from the ODE
#
# The radial reduction integrates the profile ODE outward and adjusts `lam`
# until the first zero of `phi''` lands where `phi' = 1`.

# %%
ref = smooth_fit_solve(RadialProblem.from_spec(spec))
print(f"smooth-fit lambda = {ref.lam:.10f}, free boundary r0 = {ref.r0:.10f}")
print(f"closed form       = {1.5 ** (2 / 3):.10f}, {1.5 ** (1 / 3):.10f}")

# %% [markdown]
# ## Vanishing discount on a grid
#
# Each discount `delta` is a penalized Newton solve; `delta u(x_delta)`
# approaches the eigenvalue as `delta` halves.

# %%
grid = Grid.cube(3.0, 1, 2e-3)
pair = solve_eigen(spec, grid, SolverParams(eps_min=1e-4))
for delta, lam in pair.delta_trace:
    print(f"  delta = {delta:9.6f}   lambda_delta = {lam:.6f}")
print(f"lambda* = {pair.lam_star:.6f} (error {pair.lam_star - ref.lam:+.2e}), {pair.runtime:.2f} s")

# %% [markdown]
# ## Where the constraint binds
#
# The contact set is where `|u'| < 1` strictly; its edges should sit next to
# `+-r0`.

# %%
x = grid.points()[..., 0]
inside = np.flatnonzero(pair.omega0)
print(f"contact interval: [{x[inside[0]]:.4f}, {x[inside[-1]]:.4f}] vs +-{ref.r0:.4f}")
print(f"core residual sup = {pair.residual.sup_abs:.2e} on {pair.residual.nodes} nodes")
