# %% [markdown]
# # Parent maps and coalescent excursions
#
# One generation of neutral resampling is a uniformly random *parent map*
# a: {1..N} -> {1..N}. Composing maps backwards in time traces the ancestral
# lines of today's population; the chain B_n stops once every individual
# descends from a single ancestor (a constant map).

# %%
import numpy as np
from fractions import Fraction

from neutralgen.mapping_monoid import ParentMap, compose, format_map, image_size, leq
from neutralgen.ancestral_chain import (
    enumerate_excursions,
    excursion_probability,
    format_excursion,
    run_to_absorption,
    simulate_absorption,
)
from neutralgen.block_count import mrca_time_pmf
from neutralgen.rng import make_rng

rng = make_rng(1)

# %% [markdown]
# Maps are written 1-based and comma-separated, as in `2,2,1`: individual 1
# picks parent 2, etc. Excursions join their maps with `;`.

# %%
a = ParentMap.from_one_based((2, 2, 1))
b = ParentMap.from_one_based((3, 1, 1))
ab = compose(a, b)
print(format_map(a), "then", format_map(b), "->", format_map(ab), "image size", image_size(ab))
print("ab <= a in the refinement order:", leq(ab, a))

# %% [markdown]
# A sampled history for N = 5, run until absorption.

# %%
e = run_to_absorption(5, rng)
print(format_excursion(e))
print("T =", e.length, " probability of this exact history:", excursion_probability(e))

# %% [markdown]
# The probabilities of all excursions of bounded length add up to the exact
# absorption-time distribution. For N = 3 and length <= 3:

# %%
pmf, tail = mrca_time_pmf(3, 3, exact=True)
by_len = {}
for exc in enumerate_excursions(3, 3):
    by_len[exc.length] = by_len.get(exc.length, Fraction(0)) + excursion_probability(exc)
for k in range(4):
    print(k, by_len[k], pmf[k], by_len[k] == pmf[k])

# %% [markdown]
# Monte Carlo: absorption times and the label of the common ancestor.
# The label is uniform over the population.

# %%
T, labels = simulate_absorption(4, 50_000, rng)
print("mean T:", T.mean())
print("label frequencies:", np.bincount(labels, minlength=5)[1:] / len(labels))
