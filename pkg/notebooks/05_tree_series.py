# %% [markdown]
# # The invariant measure as a sum over genealogical trees
#
# Grouping coalescent histories by their shape gives a series over leveled
# trees t whose level sizes q run from N down to 1. Each tree carries weight
# N (N)_q / (|Z(t)| N^|q|), where |Z(t)| is the order of its symmetry group.

# %%
from fractions import Fraction as F

from neutralgen.neutral_model import MutationKernel, exact_stationary, tv_distance
from neutralgen.block_count import mrca_time_pmf
from neutralgen.tree_measure import (
    enumerate_trees,
    format_tree,
    invariant_measure_series,
    level_mass,
    stabilizer_order,
    tree_weight,
)

# %% [markdown]
# All trees for N = 3 with level sizes (3, 2, 2) below the root:

# %%
for t in enumerate_trees((3, 2, 2)):
    print(f"{format_tree(t):30s} |Z| = {stabilizer_order(t):2d}  weight = {tree_weight(t)}")

# %% [markdown]
# Summing the weights of all trees of a given depth gives P(T = depth):

# %%
pmf, _ = mrca_time_pmf(3, 5, exact=True)
for d in range(6):
    print(d, level_mass(3, d), pmf[d])

# %% [markdown]
# The truncated series against the stationary law from a linear solve.

# %%
m = MutationKernel([[F(9, 10), F(1, 10)], [F(2, 10), F(8, 10)]]).with_stationary()
for n in (2, 3):
    res = invariant_measure_series(m, n, 1e-8)
    err = tv_distance(res.measure, exact_stationary(m, n))
    print(f"N={n}: depth {res.depth}, {res.trees} trees, TV {float(err):.2e} <= radius {float(res.radius):.2e}")
