# %% [markdown]
# # Scaling limit of the absorption time
#
# S^(N,N)/N converges in law to sum_l 2 E_l / ((l+1)(l+2)) with i.i.d. unit
# exponentials E_l, whose Laplace transform is an infinite product Pi(alpha).

# %%
import numpy as np
from scipy import stats

from neutralgen.analysis import verify_laplace_bound
from neutralgen.block_count import (
    limit_law_laplace,
    limit_law_laplace_closed,
    sample_absorption_times,
    sample_limit_law,
)
from neutralgen.rng import substream

# %%
for alpha in (0.1, 0.5, 0.9):
    print(alpha, limit_law_laplace(alpha), limit_law_laplace_closed(alpha))

# %% [markdown]
# The finite-N transform stays below e^alpha Pi(alpha):

# %%
for r in verify_laplace_bound([5, 20], [0.3, 0.9]):
    print(r)

# %% [markdown]
# Monte Carlo comparison at N = 200 (the acceptance run uses N = 500 and 10^5 draws).

# %%
n = 200
s = sample_absorption_times(n, 20_000, substream(3, 0)) / n
lim = sample_limit_law(substream(3, 1), trunc=200, size=20_000)
print("KS statistic:", stats.ks_2samp(s, lim).statistic)
print("means:", s.mean(), lim.mean())
print("quantiles:", np.quantile(s, [0.1, 0.5, 0.9]), np.quantile(lim, [0.1, 0.5, 0.9]))
