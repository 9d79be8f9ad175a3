# %% [markdown]
# # The block-count chain and the MRCA time
#
# The number of surviving ancestral lines |B_n| is itself a Markov chain on
# {1..N}. From q lines, the next generation has p lines with probability
# S(q, p) (N)_p / N^q (Stirling numbers of the second kind). Everything below
# is exact rational arithmetic unless stated.

# %%

from neutralgen.block_count import (
    TAIL_CONSTANT,
    absorption_distribution,
    expected_decrease,
    mean_absorption_time,
    stochastic_domination_violations,
    tail_bound,
    transition_matrix,
)

# %%
M = transition_matrix(4, exact=True)
for q in range(1, 5):
    print(q, [str(M.prob(q, p)) for p in range(1, 5)])

# %% [markdown]
# Expected number of lost lines in one step, from q lines:
# E[q - p] = q - N (1 - (1 - 1/N)^q).

# %%
for q in (2, 3, 4):
    print(q, expected_decrease(4, q))

# %% [markdown]
# Exact distribution of the absorption time S from N lines, against the
# exponential tail bound K (n/N v 1) exp(-(n/N - 1)_+) with K = 3e.

# %%
n = 20
dist = absorption_distribution(n, n, eps=1e-12)
print("K =", TAIL_CONSTANT)
for k in (5, 20, 40, 80, 160):
    print(f"n={k:4d}  P(S>={k}) = {float(dist.survival(k)):.3e}  bound = {tail_bound(n, k):.3e}")

# %% [markdown]
# The mean time to the common ancestor approaches 2N generations.

# %%
for n in (10, 25, 50):
    print(n, float(mean_absorption_time(n)) / n)

# %% [markdown]
# The chain is dominated by a slower one that only ever merges two lines.

# %%
print("violations for N <= 12:", {n: stochastic_domination_violations(n) for n in range(2, 13)})
