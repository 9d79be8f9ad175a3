# %% [markdown]
# # The neutral model: selection then mutation
#
# A population of N individuals with types in a finite set E. Each
# generation resamples parents uniformly (selection) and then mutates every
# individual independently with kernel M. The law of the population evolves
# exactly on E^N; we compare it with simulation and with the stationary law.

# %%
from fractions import Fraction as F

from neutralgen.neutral_model import (
    MutationKernel,
    dobrushin,
    empirical_law,
    exact_flow,
    exact_stationary,
    fit_mixing_parameters,
    simulate,
    tv_distance,
)
from neutralgen.rng import make_rng

m = MutationKernel([[F(9, 10), F(1, 10)], [F(2, 10), F(8, 10)]]).with_stationary()
print("stationary type law:", m.stationary)
print("mixing parameters:", fit_mixing_parameters(m))
print("Dobrushin coefficients:", [float(dobrushin(m, k)) for k in (1, 2, 3)])

# %% [markdown]
# Exact law after a few generations starting from everybody of type 1.

# %%
eta = [1, 0]
n = 3
gamma, _ = exact_flow(m, eta, n, 5)
stat = exact_stationary(m, n)
print("law after 5 steps:", [float(x) for x in gamma.weights])
print("stationary:       ", [float(x) for x in stat.weights])
print("TV (sup over |f| <= 1):", float(tv_distance(gamma, stat)))

# %%
xi, _ = simulate(m, eta, n, 5, 20_000, make_rng(4))
emp = empirical_law(xi[:, -1], m.size) / len(xi)
print("simulation vs exact:", tv_distance(emp, gamma.to_float()))
