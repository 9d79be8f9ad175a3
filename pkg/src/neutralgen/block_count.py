"""The block-count chain |B_n| and the law of the absorption time.

The number of distinct ancestors R_n = |B_n| is itself a Markov chain on [N]
with lower-triangular transitions

    M[q, p] = S(q, p) (N)_p / N^q,

where S(q, p) is a Stirling number of the second kind and (N)_p = N!/(N-p)!.
S^(N,i) is its hitting time of state 1 from state i, and T has the law of
S^(N,N). The single-jump chain only allows q -> q and q -> q-1 and stochastically
dominates it.

Matrices and distributions are exact (``fractions.Fraction``) for N <= 64 and
double precision above, where entries are evaluated in log space.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from functools import lru_cache
from typing import Sequence

import gmpy2
import numpy as np
from scipy.special import gammaln

EXACT_LIMIT = 64
MAX_STEPS = 10**7
TAIL_CONSTANT = 3 * math.e
DEFAULT_KPRIME = math.e**2 * (1 + 3 * math.e)


def _frac(num, den) -> Fraction:
    """Fraction from big (possibly gmpy2) integers, reducing with GMP."""
    q = gmpy2.mpq(num, den)
    try:
        return Fraction(int(q.numerator), int(q.denominator), _normalize=False)
    except TypeError:  # pragma: no cover - keyword dropped in newer Pythons
        return Fraction(int(q.numerator), int(q.denominator))


# -- Stirling numbers ----------------------------------------------------------


def _ratio_float(num, den) -> float:
    """num/den to within a few ulps, from the leading 64 bits of each (no gcd, no overflow)."""
    if num == 0:
        return 0.0
    sa = max(int(num.bit_length()) - 64, 0)
    sb = max(int(den.bit_length()) - 64, 0)
    return math.ldexp(int(num >> sa) / int(den >> sb), sa - sb)


@lru_cache(maxsize=None)
def _stirling_rows(n: int) -> tuple[tuple[int, ...], ...]:
    rows = [(1,)]
    for q in range(1, n + 1):
        prev = rows[-1]
        row = [0] * (q + 1)
        for p in range(1, q + 1):
            row[p] = (p * prev[p] if p < q else 0) + prev[p - 1]
        rows.append(tuple(row))
    return tuple(rows)


def stirling2(q: int, p: int) -> int:
    """Number of partitions of [q] into p non-empty blocks."""
    if q < 0 or p < 0:
        raise ValueError("Stirling numbers need non-negative arguments")
    if p > q:
        return 0
    return _stirling_rows(q)[q][p]


@lru_cache(maxsize=16)
def log_stirling_table(n: int) -> np.ndarray:
    """log S(q, p) for 0 <= p, q <= n (-inf where S vanishes)."""
    L = np.full((n + 1, n + 1), -np.inf)
    L[0, 0] = 0.0
    for q in range(1, n + 1):
        p = np.arange(1, q + 1)
        L[q, 1 : q + 1] = np.logaddexp(np.log(p) + L[q - 1, 1 : q + 1], L[q - 1, 0:q])
    return L


def falling(n: int, p: int) -> int:
    return math.perm(n, p)


# -- transition matrices ---------------------------------------------------------


@dataclass(frozen=True)
class BlockCountMatrix:
    """Lower-triangular transition matrix on block counts 1..N.

    ``entries[q-1, p-1]`` is the probability of moving from q to p blocks; the
    array has object dtype holding Fractions when ``exact`` is true.
    """

    n: int
    entries: np.ndarray
    exact: bool

    def prob(self, q: int, p: int):
        if not (1 <= q <= self.n and 1 <= p <= self.n):
            raise IndexError(f"states must lie in 1..{self.n}")
        return self.entries[q - 1, p - 1]

    def row(self, q: int) -> np.ndarray:
        return self.entries[q - 1]

    def to_float(self) -> np.ndarray:
        return self.entries.astype(float)


def _want_exact(n: int, exact: bool | None) -> bool:
    if exact is None:
        return n <= EXACT_LIMIT
    return exact


def transition_matrix(n: int, exact: bool | None = None) -> BlockCountMatrix:
    if n < 1:
        raise ValueError("n must be positive")
    if _want_exact(n, exact):
        S = _stirling_rows(n)
        E = np.empty((n, n), dtype=object)
        E[:] = Fraction(0)
        for q in range(1, n + 1):
            for p in range(1, q + 1):
                E[q - 1, p - 1] = Fraction(S[q][p] * falling(n, p), n**q)
        return BlockCountMatrix(n, E, True)
    L = log_stirling_table(n)
    q = np.arange(1, n + 1)[:, None]
    p = np.arange(1, n + 1)[None, :]
    log_falling = gammaln(n + 1) - gammaln(n - p + 1)
    with np.errstate(invalid="ignore"):
        logM = L[1:, 1:] + log_falling - q * math.log(n)
    E = np.where(p <= q, np.exp(logM), 0.0)
    return BlockCountMatrix(n, E, False)


def _stay_probability(n: int, q: int) -> Fraction:
    return Fraction(falling(n, q), n**q)


def single_jump_matrix(n: int, exact: bool | None = None) -> BlockCountMatrix:
    """Diagonal (N)_q/N^q, the rest of each row on q-1."""
    if n < 1:
        raise ValueError("n must be positive")
    if _want_exact(n, exact):
        E = np.empty((n, n), dtype=object)
        E[:] = Fraction(0)
        E[0, 0] = Fraction(1)
        for q in range(2, n + 1):
            stay = _stay_probability(n, q)
            E[q - 1, q - 1] = stay
            E[q - 1, q - 2] = 1 - stay
        return BlockCountMatrix(n, E, True)
    E = np.zeros((n, n))
    E[0, 0] = 1.0
    q = np.arange(2, n + 1)
    log_stay = gammaln(n + 1) - gammaln(n - q + 1) - q * math.log(n)
    stay = np.exp(log_stay)
    E[q - 1, q - 1] = stay
    E[q - 1, q - 2] = 1.0 - stay
    return BlockCountMatrix(n, E, False)


@lru_cache(maxsize=128)
def _integer_weights(n: int, single_jump: bool) -> np.ndarray:
    """Transient block (states 2..N) of the matrix scaled by N^N, as mpz."""
    W = np.empty((n - 1, n - 1), dtype=object)
    W[:] = gmpy2.mpz(0)
    if single_jump:
        for q in range(2, n + 1):
            scale = n ** (n - q)
            W[q - 2, q - 2] = gmpy2.mpz(falling(n, q) * scale)
            if q > 2:
                W[q - 2, q - 3] = gmpy2.mpz((n**q - falling(n, q)) * scale)
    else:
        S = _stirling_rows(n)
        for q in range(2, n + 1):
            scale = n ** (n - q)
            for p in range(2, q + 1):
                W[q - 2, p - 2] = gmpy2.mpz(S[q][p] * falling(n, p) * scale)
    return W


# -- absorption-time laws ----------------------------------------------------------


@dataclass
class AbsorptionDistribution:
    """Law of S^(N,i) computed up to a horizon.

    ``pmf[k] = P(S = k)`` for k <= horizon and ``tail = P(S > horizon)``. In
    exact mode probabilities are kept as integer numerators over N^(N k) and
    only turned into Fractions on demand, since the numbers grow quickly.
    """

    n: int
    i: int
    exact: bool
    single_jump: bool = False
    _pmf_num: list = field(default_factory=list, repr=False)
    _alive_num: list = field(default_factory=list, repr=False)
    _pmf_float: np.ndarray | None = field(default=None, repr=False)
    _alive_float: np.ndarray | None = field(default=None, repr=False)
    final_state: np.ndarray | None = field(default=None, repr=False)

    @property
    def horizon(self) -> int:
        if self.exact:
            return len(self._pmf_num) - 1
        return len(self._pmf_float) - 1

    def _den(self, k: int):
        return gmpy2.mpz(self.n) ** (self.n * k)

    @property
    def pmf(self) -> list:
        if self.exact:
            if not hasattr(self, "_pmf_cache"):
                self._pmf_cache = [_frac(v, self._den(k)) for k, v in enumerate(self._pmf_num)]
            return self._pmf_cache
        return list(self._pmf_float)

    @property
    def tail(self):
        return self.alive(self.horizon)

    def alive(self, k: int):
        """P(S > k) for 0 <= k <= horizon (any k once all mass is absorbed)."""
        if k > self.horizon:
            last = self._alive_num[-1] if self.exact else self._alive_float[-1]
            if last != 0:
                raise IndexError(f"step {k} is beyond the computed horizon {self.horizon}")
            k = self.horizon
        if self.exact:
            return _frac(self._alive_num[k], self._den(k))
        return float(self._alive_float[k])

    def survival(self, k: int):
        """P(S >= k)."""
        if k <= 0:
            return Fraction(1) if self.exact else 1.0
        return self.alive(k - 1)

    def survival_le(self, k: int, bound: float) -> bool:
        """Exact test of P(S >= k) <= bound (bound taken as its exact binary value)."""
        if not self.exact:
            return self.survival(k) <= bound
        if k <= 0:
            return 1 <= bound
        num, den = Fraction(bound).as_integer_ratio()
        return self._alive_num[k - 1] * den <= num * self._den(k - 1)

    def alive_cmp(self, k: int, value) -> int:
        """Sign of P(S > k) - value, exact for rational or float ``value``."""
        if not self.exact:
            a = self.alive(k)
            return (a > value) - (a < value)
        k = min(k, self.horizon) if self._alive_num[-1] == 0 else k
        num, den = Fraction(value).as_integer_ratio()
        lhs, rhs = self._alive_num[k] * den, num * self._den(k)
        return (lhs > rhs) - (lhs < rhs)

    def pmf_float(self) -> np.ndarray:
        if self.exact:
            return np.array([_ratio_float(v, self._den(k)) for k, v in enumerate(self._pmf_num)])
        return np.asarray(self._pmf_float)

    def alive_float(self) -> np.ndarray:
        if self.exact:
            return np.array([_ratio_float(v, self._den(k)) for k, v in enumerate(self._alive_num)])
        return np.asarray(self._alive_float)

    def mean_truncated(self) -> float:
        pmf = self.pmf_float()
        return float(np.dot(np.arange(pmf.size), pmf))


@lru_cache(maxsize=256)
def absorption_distribution(
    n: int,
    i: int | None = None,
    eps: float = 1e-12,
    exact: bool | None = None,
    single_jump: bool = False,
    horizon: int | None = None,
) -> AbsorptionDistribution:
    """pmf of S^(N,i) by iterating the transition matrix until P(S > k) < eps.

    ``horizon`` forces a fixed number of steps instead. Iteration stops at
    ``MAX_STEPS`` regardless; the residual mass is always kept in ``tail``.
    Results are cached, so treat the returned object as read-only.
    """
    if i is None:
        i = n
    if not 1 <= i <= n:
        raise ValueError(f"initial block count {i} outside 1..{n}")
    if not eps > 0:
        raise ValueError("eps must be positive")
    exact = _want_exact(n, exact)
    dist = AbsorptionDistribution(n, i, exact, single_jump)
    limit = MAX_STEPS if horizon is None else horizon
    if i == 1:
        if exact:
            dist._pmf_num, dist._alive_num = [gmpy2.mpz(1)], [gmpy2.mpz(0)]
            dist.final_state = np.array([], dtype=object)
        else:
            dist._pmf_float, dist._alive_float = np.array([1.0]), np.array([0.0])
            dist.final_state = np.zeros(0)
        return dist

    if exact:
        W = _integer_weights(n, single_jump)
        D = gmpy2.mpz(n) ** n
        v = np.empty(n - 1, dtype=object)
        v[:] = gmpy2.mpz(0)
        v[i - 2] = gmpy2.mpz(1)
        pmf, alive = [gmpy2.mpz(0)], [gmpy2.mpz(1)]
        den = gmpy2.mpz(1)
        k = 0
        while k < limit and (horizon is not None or alive[-1] * eps_ratio(eps)[1] >= den * eps_ratio(eps)[0]):
            v = v.dot(W)
            den *= D
            mass = sum(v, gmpy2.mpz(0))
            pmf.append(alive[-1] * D - mass)
            alive.append(mass)
            k += 1
        dist._pmf_num, dist._alive_num = pmf, alive
        dist.final_state = v
        return dist

    M = (single_jump_matrix(n, False) if single_jump else transition_matrix(n, False)).entries
    Q = M[1:, 1:]
    v = np.zeros(n - 1)
    v[i - 2] = 1.0
    pmf, alive = [0.0], [1.0]
    k = 0
    while k < limit and (horizon is not None or alive[-1] >= eps):
        v = v @ Q
        mass = float(v.sum())
        pmf.append(max(alive[-1] - mass, 0.0))
        alive.append(mass)
        k += 1
    dist._pmf_float, dist._alive_float = np.array(pmf), np.array(alive)
    dist.final_state = v
    return dist


def mrca_time_pmf(n: int, horizon: int, exact: bool | None = None) -> tuple[list, object]:
    """Law of the absorption time T of the backward chain started at B_0 = A_0.

    B_0 is already one uniform map away from the identity, so T + 1 has the law
    of S^(N,N). Returns ``([P(T = k) for k <= horizon], P(T > horizon))``.
    """
    if horizon < 0:
        raise ValueError("horizon must be >= 0")
    if n == 1:
        one, zero = (Fraction(1), Fraction(0)) if _want_exact(n, exact) else (1.0, 0.0)
        return [one] + [zero] * horizon, zero
    dist = absorption_distribution(n, n, exact=exact, horizon=horizon + 1)
    pmf = dist.pmf if dist.exact else list(dist.pmf_float())
    return pmf[1:], dist.alive(horizon + 1)


@lru_cache(maxsize=32)
def eps_ratio(eps: float) -> tuple[int, int]:
    return Fraction(eps).as_integer_ratio()


def mean_absorption_time(n: int, i: int | None = None, exact: bool | None = None):
    """E[S^(N,i)], by a triangular solve (exact up to N = 64)."""
    return expected_hitting_time(n, 2, i, exact)


def expected_hitting_time(n: int, j: int, i: int | None = None, exact: bool | None = None):
    """E[tau_j] with tau_j = inf{k : R_k < j}, R_0 = i (default N)."""
    if i is None:
        i = n
    if not (1 <= j <= n and 1 <= i <= n):
        raise ValueError("need 1 <= j, i <= n")
    M = transition_matrix(n, exact)
    E = M.entries
    zero = Fraction(0) if M.exact else 0.0
    h = [zero] * (n + 1)
    for q in range(j, n + 1):
        acc = 1 + sum((E[q - 1, p - 1] * h[p] for p in range(j, q)), zero)
        h[q] = acc / (1 - E[q - 1, q - 1])
    return h[i] if i >= j else zero


# -- drift and the auxiliary function g -----------------------------------------------


def expected_decrease(n: int, q: int) -> Fraction:
    """E[R_k - R_{k+1} | R_k = q] = q - N + N (1 - 1/N)^q."""
    if not 1 <= q <= n:
        raise ValueError("need 1 <= q <= n")
    return q - n + n * Fraction(n - 1, n) ** q


def g(n: int, s: float) -> float:
    """s - N + N (1 - 1/N)^s."""
    if s < 1:
        raise ValueError("g is defined for s >= 1")
    return s - n + n * (1 - 1 / n) ** s


def g_exact(n: int, s: int) -> Fraction:
    return s - n + n * Fraction(n - 1, n) ** s


def jump_two_probability(n: int, q: int) -> Fraction:
    """P(R_{k+1} <= q - 2 | R_k = q), closed form."""
    if not 2 <= q <= n:
        raise ValueError("need 2 <= q <= n")
    return 1 - Fraction(falling(n, q - 1), n**q) * (n - q + 1 + Fraction(q * (q - 1), 2))


def supermartingale_drift(n: int, q: int) -> Fraction:
    """One-step drift of k + sum_{l <= R_k} 1/g(l) from R_k = q (must be <= 0)."""
    if not 2 <= q <= n:
        raise ValueError("need 2 <= q <= n")
    E = transition_matrix(n, exact=True).entries
    inv_g = {l: 1 / g_exact(n, l) for l in range(2, q + 1)}
    drop = Fraction(0)
    for p in range(1, q):
        drop += E[q - 1, p - 1] * sum(inv_g[l] for l in range(p + 1, q + 1))
    return 1 - drop


# -- quantitative bounds ----------------------------------------------------------------


@dataclass(frozen=True)
class HittingTimeReport:
    n: int
    j: int
    expected: float | Fraction
    shape: float
    ratio: float


def hitting_time_bound(n: int, j: int) -> HittingTimeReport:
    """E[tau_j^(N,N)] next to the N/j shape of its upper bound."""
    if not (4 <= j <= n and j <= n ** 0.4 + 1e-12):
        raise ValueError("need 4 <= j <= n and j <= n^(2/5)")
    expected = expected_hitting_time(n, j)
    shape = n / j
    return HittingTimeReport(n, j, expected, shape, float(expected) / shape)


def overshoot_probability(n: int, j: int, i: int | None = None, exact: bool | None = None):
    """P(R at tau_j <= j/2): how far the chain jumps when it first goes below j."""
    if i is None:
        i = n
    if not (1 <= j <= i <= n):
        raise ValueError("need 1 <= j <= i <= n")
    M = transition_matrix(n, exact)
    E = M.entries
    zero = Fraction(0) if M.exact else 0.0
    low = [p for p in range(1, j) if 2 * p <= j]
    # f[q] = P(first value below j is <= j/2 | R = q)
    f = {}
    for q in range(j, n + 1):
        acc = sum((E[q - 1, p - 1] for p in low), zero)
        acc += sum((E[q - 1, p - 1] * f[p] for p in range(j, q)), zero)
        f[q] = acc / (1 - E[q - 1, q - 1])
    return f[i]


def tail_bound(n: int, k: float) -> float:
    """K (k/N v 1) exp(-(k/N - 1)_+), K = 3e."""
    if n < 1 or k < 0:
        raise ValueError("need n >= 1 and k >= 0")
    r = k / n
    return TAIL_CONSTANT * max(r, 1.0) * math.exp(-max(r - 1.0, 0.0))


def tail_constant_product(terms: int) -> float:
    """e / prod_{l=1}^{terms} (1 - 2/((l+1)(l+2))); tends to 3e."""
    prod = 1.0
    for l in range(1, terms + 1):
        prod *= 1 - 2 / ((l + 1) * (l + 2))
    return math.e / prod


def _single_jump_laplace_float(n: int, q: int, theta: float) -> float:
    """E[exp(theta * single-jump absorption time from q)] (inf if divergent)."""
    value = math.exp(theta * (q - 1))
    for j in range(1, q):
        p = math.exp(gammaln(n + 1) - gammaln(n - j) - (j + 1) * math.log(n))
        denom = 1 - math.exp(theta) * p
        if denom <= 0:
            return math.inf
        value *= (1 - p) / denom
    return value


def laplace_exact(n: int, i: int | None = None, alpha: float = 0.5, tol: float = 1e-14) -> float:
    """E[exp(alpha S^(N,i)/N)] from the pmf plus a rigorous tail term.

    The pmf is summed up to a horizon H; the rest is bounded by
    sum_q P(R_H = q) e^{alpha H/N} E[exp(alpha S~^(N,q)/N)], using the
    stochastic domination by the single-jump chain. The returned value is that
    upper estimate; its excess over the truth is below ``tol`` (relative).
    """
    if i is None:
        i = n
    if not 0 <= alpha < 1:
        raise ValueError("alpha must lie in [0, 1)")
    if alpha == 0:
        return 1.0
    if i == 1:
        return 1.0
    theta = alpha / n
    M = transition_matrix(n, exact=False).entries
    Q = M[1:, 1:]
    absorb = M[1:, 0]
    L = np.array([_single_jump_laplace_float(n, q, theta) for q in range(2, n + 1)])
    v = np.zeros(n - 1)
    v[i - 2] = 1.0
    partial = 0.0
    k = 0
    while k < MAX_STEPS:
        k += 1
        partial += math.exp(theta * k) * float(v @ absorb)
        v = v @ Q
        tail = math.exp(theta * k) * float(v @ L)
        if tail <= tol * partial:
            return partial + tail
    raise RuntimeError("laplace transform did not converge")  # pragma: no cover


def laplace_triangular(n: int, i: int | None = None, alpha: float = 0.5) -> float:
    """Same transform by solving L(q) = e^theta sum_p M[q,p] L(p) (test oracle)."""
    if i is None:
        i = n
    theta = alpha / n
    M = transition_matrix(n, exact=False).entries
    L = np.ones(n + 1)
    for q in range(2, n + 1):
        denom = 1 - math.exp(theta) * M[q - 1, q - 1]
        if denom <= 0:
            return math.inf
        L[q] = math.exp(theta) * float(M[q - 1, : q - 1] @ L[1:q]) / denom
    return float(L[i])


def limit_law_laplace(alpha: float, tol: float = 1e-12) -> float:
    """Pi(alpha) = prod_{l>=0} 1/(1 - 2 alpha/((l+1)(l+2))).

    The log-product is truncated after L factors; the linear part of the
    remainder, sum_{l>=L} x_l = 2 alpha/(L+1), is added exactly and L is chosen
    so that the neglected higher-order part is below ``tol``.
    """
    if not 0 <= alpha < 1:
        raise ValueError("alpha must lie in [0, 1)")
    if not tol > 0:
        raise ValueError("tol must be positive")
    if alpha == 0:
        return 1.0
    L = 1
    while True:
        x_L = 2 * alpha / ((L + 1) * (L + 2))
        if 2 * alpha**2 / (3 * (1 - x_L) * L**3) < tol:
            break
        L *= 2
    l = np.arange(L)
    x = 2 * alpha / ((l + 1) * (l + 2))
    return float(math.exp(-np.sum(np.log1p(-x)) + 2 * alpha / (L + 1)))


def limit_law_laplace_closed(alpha: float) -> float:
    """Gamma-function form Gamma(3/2 - s) Gamma(3/2 + s), s = sqrt(1/4 + 2 alpha)."""
    s = math.sqrt(0.25 + 2 * alpha)
    return math.gamma(1.5 - s) * math.gamma(1.5 + s)


def sample_limit_law(rng: np.random.Generator, trunc: int = 200, size: int | None = None, chunk: int = 50_000):
    """Draws of sum_l 2/((l+1)(l+2)) E_l with i.i.d. unit exponentials E_l.

    Terms l < trunc are sampled; the remaining ones are replaced by their mean
    2/(trunc+1), so draws are biased only through the neglected tail variance.
    """
    if trunc < 1:
        raise ValueError("trunc must be >= 1")
    l = np.arange(trunc)
    w = 2.0 / ((l + 1) * (l + 2))
    shift = 2.0 / (trunc + 1)
    if size is None:
        return float(rng.exponential(size=trunc) @ w + shift)
    out = np.empty(size)
    for start in range(0, size, chunk):
        stop = min(size, start + chunk)
        out[start:stop] = rng.exponential(size=(stop - start, trunc)) @ w + shift
    return out


def truncation_ks_bias(trunc: int) -> float:
    """Crude bound on the sup-distance between truncated and full limit CDFs.

    The neglected centred tail has standard deviation s; by Chebyshev and the
    density bound of the first exponential term, the CDF shift is at most
    2 * (s^2)^(1/3) * density^(2/3) with density <= 1.
    """
    l = np.arange(trunc, trunc + 10**6)
    var = float(np.sum((2.0 / ((l + 1) * (l + 2))) ** 2))
    return 2 * var ** (1 / 3)


def sample_absorption_times(n: int, runs: int, rng: np.random.Generator, i: int | None = None) -> np.ndarray:
    """Monte Carlo draws of S^(N,i) by simulating the block-count chain.

    Each chain waits a geometric number of steps in its current state and then
    jumps down according to the normalised off-diagonal part of the row.
    """
    if i is None:
        i = n
    if not 1 <= i <= n:
        raise ValueError("need 1 <= i <= n")
    M = transition_matrix(n, exact=False).to_float()
    stay = np.diag(M).copy()
    off = np.tril(M, k=-1)
    rowsum = off.sum(axis=1)
    rowsum[0] = 1.0
    cdf = np.cumsum(off / rowsum[:, None], axis=1)
    cdf[:, -1] = np.maximum(cdf[:, -1], 1.0)
    flat = (cdf + np.arange(n)[:, None]).ravel()
    state = np.full(runs, i - 1)
    times = np.zeros(runs, dtype=np.int64)
    active = np.flatnonzero(state > 0)
    while active.size:
        s = state[active]
        times[active] += rng.geometric(1.0 - stay[s])
        u = rng.random(active.size) + s
        pos = np.searchsorted(flat, u, side="right")
        nxt = pos - s * n
        state[active] = np.minimum(nxt, s - 1)
        active = active[state[active] > 0]
    return times


# -- tail-mixing bound and fixed-start checks ----------------------------------------


def corollary_bound(n: int, k: int, lam: float, kprime: float = DEFAULT_KPRIME, i: int | None = None) -> tuple[float, float]:
    """(E[exp(-lam (k - S)) 1{S <= k}], K' (k/N) exp(-k/(N + 1/lam)))."""
    if not lam > 0:
        raise ValueError("lambda must be positive")
    if k < n + 1 / lam:
        raise ValueError("need k >= n + 1/lambda")
    dist = absorption_distribution(n, i, exact=False, horizon=k)
    pmf = dist.pmf_float()[: k + 1]
    s = np.arange(pmf.size)
    exact = float(np.sum(pmf * np.exp(-lam * (k - s))))
    bound = kprime * (k / n) * math.exp(-k / (n + 1 / lam))
    return exact, bound


def geometric_convolution_pmf(n: int, i: int, horizon: int) -> list[Fraction]:
    """pmf of i - 1 + sum_{j<i} G_j, G_j geometric with P(G = m) = (1-p) p^m, p = (N)_{j+1}/N^{j+1}."""
    pmf = [Fraction(0)] * (horizon + 1)
    if i - 1 > horizon:
        return pmf
    conv = [Fraction(1)] + [Fraction(0)] * horizon
    for j in range(1, i):
        p = Fraction(falling(n, j + 1), n ** (j + 1))
        geo = [(1 - p) * p**m for m in range(horizon + 1)]
        new = [Fraction(0)] * (horizon + 1)
        for a, ca in enumerate(conv):
            if ca:
                for b in range(horizon + 1 - a):
                    new[a + b] += ca * geo[b]
        conv = new
    for k in range(i - 1, horizon + 1):
        pmf[k] = conv[k - (i - 1)]
    return pmf


@dataclass(frozen=True)
class FixedStartRecord:
    n: int
    i: int
    horizon: int
    pmf_match: bool
    alpha: float
    laplace_from_pmf: float
    laplace_product: float


def _single_jump_pmf_from(n: int, i: int, horizon: int | None, exact: bool, eps: float = 1e-17, theta: float = 0.0):
    """pmf of S~^(N,i) using only the states 1..i the single-jump chain can visit.

    Without a horizon, runs until P(S~ > k) e^(theta k) < eps.
    """
    one = Fraction(1) if exact else 1.0
    stay = [None, None] + [
        Fraction(falling(n, q), n**q) if exact else math.exp(gammaln(n + 1) - gammaln(n - q + 1) - q * math.log(n))
        for q in range(2, i + 1)
    ]
    v = [0 * one] * (i + 1)
    v[i] = one
    pmf = [0 * one]
    alive = one
    k = 0
    while (k < horizon) if horizon is not None else (alive * math.exp(theta * k) >= eps and k < MAX_STEPS):
        new = [0 * one] * (i + 1)
        for q in range(2, i + 1):
            if v[q]:
                new[q] += v[q] * stay[q]
                new[q - 1] += v[q] * (1 - stay[q])
        pmf.append(new[1])
        new[1] = 0 * one
        v = new
        alive = sum(v[2:], 0 * one)
        k += 1
    return pmf


def fixed_i_limit_check(i: int, n_list: Sequence[int], horizon: int = 40, alpha: float = 0.5) -> list[FixedStartRecord]:
    """Single-jump chain from a fixed start i: pmf vs convolution of geometrics,
    and the Laplace transform of (S~ - i + 1)/N vs its product formula."""
    if i < 2:
        raise ValueError("need i >= 2")
    records = []
    for n in n_list:
        if n < i:
            raise ValueError(f"need N >= i (got N={n}, i={i})")
        match = _single_jump_pmf_from(n, i, horizon, exact=True) == geometric_convolution_pmf(n, i, horizon)
        theta = alpha / n
        pmf = np.array(_single_jump_pmf_from(n, i, None, exact=False, eps=1e-18, theta=theta))
        k = np.arange(pmf.size)
        from_pmf = float(np.sum(pmf * np.exp(theta * (k - i + 1))))
        product = 1.0
        for j in range(1, i):
            p = math.exp(gammaln(n + 1) - gammaln(n - j) - (j + 1) * math.log(n))
            product *= (1 - p) / (1 - math.exp(theta) * p)
        records.append(FixedStartRecord(n, i, horizon, match, alpha, from_pmf, product))
    return records


def stochastic_domination_violations(n: int, i: int | None = None, eps: float = 1e-15) -> list[int]:
    """k with P(S >= k) > P(S~ >= k), checked exactly until the S~ tail drops below eps."""
    if i is None:
        i = n
    full = absorption_distribution(n, i, eps=eps, exact=True, single_jump=True)
    horizon = full.horizon
    part = absorption_distribution(n, i, exact=True, horizon=horizon)
    bad = []
    for k in range(1, horizon + 1):
        # same denominators N^(N k) on both sides
        if part._alive_num[k - 1] > full._alive_num[k - 1]:
            bad.append(k)
    return bad
