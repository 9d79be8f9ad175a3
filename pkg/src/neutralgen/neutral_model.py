"""Forward selection/mutation dynamics and their exact distribution flows.

One generation of the N-particle chain is a uniform selection step
x -> x^A (every individual picks a parent uniformly) followed by independent
mutation of every coordinate with a kernel M. On a finite type space
E = {0, ..., |E|-1} the laws of the population live on E^N and are stored as
flat vectors indexed lexicographically, coordinate 1 most significant:

    index(x) = sum_i x_i |E|^(N-1-i).

Arrays have object dtype (exact ``Fraction`` entries) when the kernel and the
initial law are exact, and float64 otherwise.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from fractions import Fraction
from functools import lru_cache
from pathlib import Path
from typing import Callable, Iterator, Sequence

import numpy as np
from scipy.sparse.csgraph import connected_components

from .mapping_monoid import ParentMap, apply_selection, leq, sample_uniform_map

MAX_FLOW_STATES = 10**5
MAX_STATIONARY_STATES = 10**4
DENSE_LIMIT = 1024
FLOAT_TOL = 1e-12


def _is_exact(a: np.ndarray) -> bool:
    return a.dtype == object


def _as_array(values, exact: bool | None = None) -> np.ndarray:
    """Object array of Fractions if every entry is rational, else float64."""
    arr = np.asarray(values, dtype=object)
    if exact is None:
        exact = all(isinstance(v, (int, Fraction)) for v in arr.ravel())
    if exact:
        out = np.empty(arr.shape, dtype=object)
        out.ravel()[:] = [Fraction(v) for v in arr.ravel()]
        return out
    return arr.astype(float)


def parse_number(token: str) -> Fraction:
    """'3/4', '0.25' or '1' as an exact rational."""
    try:
        return Fraction(token.strip())
    except (ValueError, ZeroDivisionError) as exc:
        raise ValueError(f"cannot parse probability {token!r}") from exc


def read_matrix(path: str | Path) -> list[list[Fraction]]:
    """Whitespace-separated rows; blank lines and '#' comments are ignored."""
    rows = []
    for line in Path(path).read_text().splitlines():
        line = line.split("#", 1)[0].strip()
        if line:
            rows.append([parse_number(tok) for tok in line.split()])
    if not rows:
        raise ValueError(f"{path}: no rows found")
    return rows


# -- kernels -------------------------------------------------------------------


@dataclass(frozen=True)
class MutationKernel:
    """Row-stochastic matrix on E = {0, ..., size-1}, optionally with a known stationary law."""

    rows: np.ndarray
    stationary: np.ndarray | None = None

    def __post_init__(self):
        rows = self.rows if isinstance(self.rows, np.ndarray) and self.rows.dtype in (object, float) else _as_array(self.rows)
        if rows.ndim != 2 or rows.shape[0] != rows.shape[1] or rows.shape[0] == 0:
            raise ValueError("kernel must be a non-empty square matrix")
        exact = _is_exact(rows)
        if exact:
            if any(v < 0 for v in rows.ravel()) or any(sum(r) != 1 for r in rows):
                raise ValueError("kernel rows must be probability vectors")
        elif np.any(rows < 0) or np.max(np.abs(rows.sum(axis=1) - 1)) > FLOAT_TOL:
            raise ValueError("kernel rows must be probability vectors")
        object.__setattr__(self, "rows", rows)
        if self.stationary is not None:
            mu = _as_array(self.stationary, exact=exact and _all_rational(self.stationary))
            if mu.shape != (rows.shape[0],):
                raise ValueError("stationary law has the wrong length")
            if _is_exact(mu) and exact:
                if any(mu.dot(rows) != mu) or sum(mu) != 1:
                    raise ValueError("supplied law is not stationary for the kernel")
            elif np.max(np.abs(mu.astype(float) @ rows.astype(float) - mu.astype(float))) > FLOAT_TOL:
                raise ValueError("supplied law is not stationary for the kernel")
            object.__setattr__(self, "stationary", mu)

    @property
    def size(self) -> int:
        return self.rows.shape[0]

    @property
    def exact(self) -> bool:
        return _is_exact(self.rows)

    @classmethod
    def from_file(cls, path: str | Path, stationary=None) -> MutationKernel:
        return cls(_as_array(read_matrix(path), exact=True), stationary)

    def to_float(self) -> np.ndarray:
        return self.rows.astype(float)

    def power(self, steps: int) -> np.ndarray:
        out = np.eye(self.size, dtype=float) if not self.exact else _exact_identity(self.size)
        for _ in range(steps):
            out = out.dot(self.rows)
        return out

    def with_stationary(self) -> MutationKernel:
        """Copy with the stationary law attached (solved exactly when possible)."""
        return MutationKernel(self.rows, stationary_law(self.rows))

    def sample(self, states: np.ndarray, rng: np.random.Generator) -> np.ndarray:
        """Move every entry of ``states`` independently by its row."""
        states = np.asarray(states)
        cum = np.cumsum(self.to_float(), axis=1)
        cum[:, -1] = 1.0
        u = rng.random(states.shape)
        return (u[..., None] >= cum[states]).sum(axis=-1).astype(np.int64)


def _all_rational(values) -> bool:
    return all(isinstance(v, (int, Fraction)) for v in np.asarray(values, dtype=object).ravel())


def _exact_identity(n: int) -> np.ndarray:
    out = np.empty((n, n), dtype=object)
    out[:] = Fraction(0)
    for i in range(n):
        out[i, i] = Fraction(1)
    return out


def _solve_exact(A: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Gauss-Jordan elimination over the rationals (A square, non-singular)."""
    n = A.shape[0]
    M = [list(A[i]) + [b[i]] for i in range(n)]
    for col in range(n):
        pivot = next((r for r in range(col, n) if M[r][col] != 0), None)
        if pivot is None:
            raise np.linalg.LinAlgError("singular system")
        M[col], M[pivot] = M[pivot], M[col]
        inv = 1 / M[col][col]
        M[col] = [v * inv for v in M[col]]
        for r in range(n):
            if r != col and M[r][col] != 0:
                f = M[r][col]
                M[r] = [vr - f * vc for vr, vc in zip(M[r], M[col])]
    out = np.empty(n, dtype=object)
    out[:] = [M[r][n] for r in range(n)]
    return out


def _unique_closed_class(P_support: np.ndarray) -> tuple[bool, str]:
    """Whether the support graph has exactly one closed communicating class."""
    n = P_support.shape[0]
    ncomp, labels = connected_components(P_support, directed=True, connection="strong")
    closed = []
    for c in range(ncomp):
        members = labels == c
        leaves = P_support[members][:, ~members].any()
        if not leaves:
            closed.append(c)
    if len(closed) == 1:
        return True, ""
    return False, f"{len(closed)} closed communicating classes among {n} states"


def stationary_law(P: np.ndarray) -> np.ndarray:
    """Unique stationary law of a finite stochastic matrix (exact if P is).

    Raises ValueError when the stationary law is not unique.
    """
    exact = _is_exact(P)
    support = np.array([[v != 0 for v in row] for row in P], dtype=bool)
    ok, why = _unique_closed_class(support)
    if not ok:
        raise ValueError(f"stationary law is not unique: {why}")
    n = P.shape[0]
    if exact:
        A = (P.T - _exact_identity(n))
        A[-1, :] = Fraction(1)
        b = np.empty(n, dtype=object)
        b[:] = Fraction(0)
        b[-1] = Fraction(1)
        return _solve_exact(A, b)
    if n <= DENSE_LIMIT:
        A = P.T - np.eye(n)
        A[-1, :] = 1.0
        b = np.zeros(n)
        b[-1] = 1.0
        pi = np.linalg.solve(A, b)
        pi = np.maximum(pi, 0)
        return pi / pi.sum()
    pi = np.full(n, 1.0 / n)
    for _ in range(10**6):
        new = 0.5 * (pi + pi @ P)  # lazy chain: same stationary law, aperiodic
        if np.abs(new - pi).sum() < 1e-13:
            return new / new.sum()
        pi = new
    raise RuntimeError("power iteration did not converge")  # pragma: no cover


# -- population space ------------------------------------------------------------


@lru_cache(maxsize=32)
def population_coords(n: int, e_size: int) -> np.ndarray:
    """(|E|^N, N) array; row k is the population with lexicographic index k."""
    return np.array(list(itertools.product(range(e_size), repeat=n)), dtype=np.int64).reshape(-1, n)


def population_index(x: Sequence[int], e_size: int) -> int:
    idx = 0
    for v in x:
        if not 0 <= v < e_size:
            raise ValueError(f"type {v} outside 0..{e_size - 1}")
        idx = idx * e_size + int(v)
    return idx


def _powers(n: int, e_size: int) -> np.ndarray:
    return e_size ** np.arange(n - 1, -1, -1, dtype=np.int64)


def _check_guard(n: int, e_size: int, limit: int) -> None:
    if e_size**n > limit:
        raise ValueError(f"|E|^N = {e_size}^{n} exceeds the exact-computation limit {limit}")


@dataclass(frozen=True)
class DistributionVector:
    """Probability law on E^N, stored by lexicographic population index."""

    n: int
    e_size: int
    weights: np.ndarray = field(repr=False)

    def __post_init__(self):
        w = self.weights
        if w.shape != (self.e_size**self.n,):
            raise ValueError("weights have the wrong length for E^N")
        if _is_exact(w):
            if sum(w) != 1 or any(v < 0 for v in w):
                raise ValueError("weights must be a probability vector")
        elif abs(w.sum() - 1) > 1e-9 or np.any(w < -1e-15):
            raise ValueError("weights must be a probability vector")

    @property
    def exact(self) -> bool:
        return _is_exact(self.weights)

    def prob(self, x: Sequence[int]):
        if len(x) != self.n:
            raise ValueError("population has the wrong size")
        return self.weights[population_index(x, self.e_size)]

    def items(self) -> Iterator[tuple[tuple[int, ...], object]]:
        coords = population_coords(self.n, self.e_size)
        for k, w in enumerate(self.weights):
            if w:
                yield tuple(int(v) for v in coords[k]), w

    def to_float(self) -> np.ndarray:
        return self.weights.astype(float)

    def permute(self, perm: Sequence[int]) -> DistributionVector:
        """Law of (x_perm[0], ..., x_perm[N-1])."""
        t = self.weights.reshape((self.e_size,) * self.n)
        return DistributionVector(self.n, self.e_size, np.transpose(t, perm).reshape(-1).copy())

    def marginal(self, coord: int) -> np.ndarray:
        t = self.weights.reshape((self.e_size,) * self.n)
        axes = tuple(a for a in range(self.n) if a != coord)
        return t.sum(axis=axes) if axes else t

    def __eq__(self, other):
        if not isinstance(other, DistributionVector):
            return NotImplemented
        return (self.n, self.e_size) == (other.n, other.e_size) and bool(np.all(self.weights == other.weights))

    __hash__ = None


def product_measure(eta, n: int) -> DistributionVector:
    """eta^{(x) N}."""
    eta = _as_array(eta)
    out = eta
    for _ in range(n - 1):
        out = np.multiply.outer(out, eta)
    return DistributionVector(n, eta.size, np.asarray(out).reshape(-1))


def point_mass(x: Sequence[int], e_size: int, exact: bool = True) -> DistributionVector:
    w = _as_array(np.zeros(e_size ** len(x), dtype=int), exact=exact)
    w[population_index(x, e_size)] = Fraction(1) if exact else 1.0
    return DistributionVector(len(x), e_size, w)


def apply_mutation(p: DistributionVector, m: MutationKernel) -> DistributionVector:
    """p M^{(x) N}: every coordinate moves independently."""
    if m.size != p.e_size:
        raise ValueError("kernel and distribution use different type spaces")
    rows = m.rows if p.exact and m.exact else m.to_float()
    w = p.weights if rows.dtype == object else p.to_float()
    t = w.reshape((p.e_size,) * p.n)
    for _ in range(p.n):
        # contracting axis 0 appends the new axis last; N rounds restore the order
        t = np.tensordot(t, rows, axes=([0], [0]))
    return DistributionVector(p.n, p.e_size, np.asarray(t).reshape(-1))


def _pushforward(w: np.ndarray, target: np.ndarray, size: int | None = None) -> np.ndarray:
    size = w.size if size is None else size
    if _is_exact(w):
        out = np.empty(size, dtype=object)
        out[:] = Fraction(0)
        np.add.at(out, target, w)
        return out
    return np.bincount(target, weights=w, minlength=size)


def apply_selection_map(p: DistributionVector, a: ParentMap) -> DistributionVector:
    """p D_a: push the law forward through x -> x^a."""
    if a.n != p.n:
        raise ValueError(f"size mismatch: N={p.n} vs N={a.n}")
    coords = population_coords(p.n, p.e_size)
    target = coords[:, list(a.targets)] @ _powers(p.n, p.e_size)
    return DistributionVector(p.n, p.e_size, _pushforward(p.weights, target))


@lru_cache(maxsize=32)
def _compositions(n: int, e_size: int):
    """Type-count vectors, and for each population the index of its composition."""
    coords = population_coords(n, e_size)
    counts = np.stack([(coords == e).sum(axis=1) for e in range(e_size)], axis=1)
    comps, inverse = np.unique(counts, axis=0, return_inverse=True)
    return comps, inverse.reshape(-1)


def _selection_kernel(comps: np.ndarray, n: int, exact: bool) -> np.ndarray:
    """K[c, c'] = prod_e (c_e/N)^{c'_e}: probability of one ordered population of composition c'."""
    K = np.empty((len(comps), len(comps)), dtype=object if exact else float)
    for r, c in enumerate(comps):
        for s, d in enumerate(comps):
            val = Fraction(1) if exact else 1.0
            for ce, de in zip(c, d):
                if de:
                    val *= (Fraction(int(ce), n) if exact else ce / n) ** int(de)
            K[r, s] = val
    return K


@lru_cache(maxsize=32)
def _cached_selection_kernel(n: int, e_size: int, exact: bool) -> np.ndarray:
    comps, _ = _compositions(n, e_size)
    return _selection_kernel(comps, n, exact)


def apply_selection_average(p: DistributionVector) -> DistributionVector:
    """p D with D(x, .) = m(x)^{(x) N}, the average of D_a over uniform a."""
    comps, inverse = _compositions(p.n, p.e_size)
    by_comp = _pushforward_comp(p.weights, inverse, len(comps))
    K = _cached_selection_kernel(p.n, p.e_size, p.exact)
    out_comp = by_comp.dot(K)
    return DistributionVector(p.n, p.e_size, out_comp[inverse])


def _pushforward_comp(w: np.ndarray, inverse: np.ndarray, size: int) -> np.ndarray:
    if _is_exact(w):
        out = np.empty(size, dtype=object)
        out[:] = Fraction(0)
        np.add.at(out, inverse, w)
        return out
    return np.bincount(inverse, weights=w, minlength=size)


def _coerce_eta(eta, m: MutationKernel) -> np.ndarray:
    arr = _as_array(eta, exact=m.exact and _all_rational(eta))
    if arr.shape != (m.size,):
        raise ValueError("initial law has the wrong length")
    total = sum(arr) if _is_exact(arr) else arr.sum()
    if (_is_exact(arr) and total != 1) or (not _is_exact(arr) and abs(total - 1) > FLOAT_TOL):
        raise ValueError("initial law must sum to 1")
    return arr


def flow_sequence(m: MutationKernel, eta, n_particles: int, n_steps: int) -> Iterator[tuple[DistributionVector, DistributionVector]]:
    """Yields (Gamma_{eta,k}, Gamma^_{eta,k}) for k = 0..n_steps."""
    _check_guard(n_particles, m.size, MAX_FLOW_STATES)
    gamma = product_measure(_coerce_eta(eta, m), n_particles)
    for k in range(n_steps + 1):
        hat = apply_selection_average(gamma)
        yield gamma, hat
        if k < n_steps:
            gamma = apply_mutation(hat, m)


def exact_flow(m: MutationKernel, eta, n_particles: int, n_steps: int) -> tuple[DistributionVector, DistributionVector]:
    """(Gamma_{eta,n}, Gamma^_{eta,n}) by exact operator iteration."""
    if n_steps < 0:
        raise ValueError("n_steps must be >= 0")
    for pair in flow_sequence(m, eta, n_particles, n_steps):
        pass
    return pair


def hat_flow(m: MutationKernel, eta, n_particles: int, n_steps: int) -> list[DistributionVector]:
    return [hat for _, hat in flow_sequence(m, eta, n_particles, n_steps)]


# -- stationary law of the selected population --------------------------------------


def _mutation_on_compositions(m: MutationKernel, n: int, comps: np.ndarray, exact: bool) -> np.ndarray:
    """Mut[c, c'']: composition law after mutating a population of composition c."""
    rows = m.rows if exact else m.to_float()
    index = {tuple(int(v) for v in c): k for k, c in enumerate(comps)}
    zero, one = (Fraction(0), Fraction(1)) if exact else (0.0, 1.0)
    out = np.empty((len(comps), len(comps)), dtype=object if exact else float)
    out[:] = zero
    for r, c in enumerate(comps):
        law = {(0,) * m.size: one}
        for e, count in enumerate(c):
            for _ in range(int(count)):
                new: dict[tuple, object] = {}
                for key, w in law.items():
                    for f in range(m.size):
                        if rows[e, f]:
                            k2 = list(key)
                            k2[f] += 1
                            k2 = tuple(k2)
                            new[k2] = new.get(k2, zero) + w * rows[e, f]
                law = new
        for key, w in law.items():
            out[r, index[key]] += w
    return out


def _multinomial_on_compositions(n: int, comps: np.ndarray, exact: bool) -> np.ndarray:
    K = _selection_kernel(comps, n, exact)
    mult = np.array([math.factorial(n) // math.prod(math.factorial(int(v)) for v in d) for d in comps], dtype=object)
    if not exact:
        mult = mult.astype(float)
    return K * mult[None, :]


def exact_stationary(m: MutationKernel, n_particles: int) -> DistributionVector:
    """Stationary law of the selected population chain Gamma^ -> Gamma^ M D.

    After a selection step the population is i.i.d. given its composition, so
    the chain lumps exactly onto compositions. The lumped chain is
    "mutate, then resample multinomially"; its stationary law pi (unique or an
    error) gives the population law sum_c (pi Mut)(c) m(c)^{(x) N}.
    """
    n = n_particles
    _check_guard(n, m.size, MAX_STATIONARY_STATES)
    exact = m.exact
    comps, inverse = _compositions(n, m.size)
    Mut = _mutation_on_compositions(m, n, comps, exact)
    Mult = _multinomial_on_compositions(n, comps, exact)
    P = Mut.dot(Mult)
    try:
        pi = stationary_law(P)
    except ValueError as exc:
        raise ValueError(f"exact_stationary: {exc} (degenerate kernel?)") from exc
    rho = pi.dot(Mut)
    K = _selection_kernel(comps, n, exact)
    return DistributionVector(n, m.size, rho.dot(K)[inverse])


# -- genealogies ----------------------------------------------------------------


def _check_decreasing(b_seq: Sequence[ParentMap]) -> None:
    if not b_seq:
        raise ValueError("need at least one map")
    n = b_seq[0].n
    for p in range(1, len(b_seq)):
        if b_seq[p].n != n:
            raise ValueError("all maps must share N")
        if not leq(b_seq[p], b_seq[p - 1]):
            raise ValueError(f"sequence is not weakly decreasing at position {p}")


def genealogy_measure(m: MutationKernel, eta, b_seq: Sequence[ParentMap]) -> DistributionVector:
    """eta_b for b = (b_0, ..., b_n): the law of the population read on a genealogy.

    Level k = 0..n of the forest has one node per value of b_{n-k}; the node
    of individual i at level k is b_{n-k}(i). Roots are i.i.d. eta, each child
    moves from its parent by M, and coordinate i reads its level-n node b_0(i).
    """
    b_seq = tuple(b_seq)
    _check_decreasing(b_seq)
    n = b_seq[0].n
    _check_guard(n, m.size, MAX_FLOW_STATES)
    eta = _coerce_eta(eta, m)
    exact = _is_exact(eta) and m.exact
    rows = m.rows if exact else m.to_float()
    if not exact:
        eta = eta.astype(float)
    depth = len(b_seq) - 1

    nodes = sorted(set(b_seq[depth].targets))
    tensor = eta
    for _ in range(len(nodes) - 1):
        tensor = np.multiply.outer(tensor, eta)
    tensor = np.asarray(tensor)
    for k in range(1, depth + 1):
        upper, lower = b_seq[depth - k + 1], b_seq[depth - k]
        children = sorted(set(lower.targets))
        parent_of = {lower.targets[i]: upper.targets[i] for i in range(n)}
        pos = {v: a for a, v in enumerate(nodes)}
        letters = [chr(ord("a") + a) for a in range(len(nodes))]
        out_letters = [chr(ord("A") + a) for a in range(len(children))]
        operands = [tensor]
        subs = ["".join(letters)]
        for c, L in zip(children, out_letters):
            operands.append(rows)
            subs.append(letters[pos[parent_of[c]]] + L)
        tensor = np.einsum(",".join(subs) + "->" + "".join(out_letters), *operands)
        nodes = children

    pos = {v: a for a, v in enumerate(nodes)}
    node_coords = population_coords(len(nodes), m.size)
    read = node_coords[:, [pos[b_seq[0].targets[i]] for i in range(n)]]
    target = read @ _powers(n, m.size)
    return DistributionVector(n, m.size, _pushforward(np.asarray(tensor).reshape(-1), target, m.size**n))


# -- distances and mixing -------------------------------------------------------


def tv_distance(p: DistributionVector | np.ndarray, q: DistributionVector | np.ndarray):
    """sum_x |p(x) - q(x)|, twice the usual total variation distance."""
    if isinstance(p, DistributionVector) and isinstance(q, DistributionVector):
        if (p.n, p.e_size) != (q.n, q.e_size):
            raise ValueError("distributions live on different spaces")
        a, b = p.weights, q.weights
    else:
        a, b = np.asarray(p), np.asarray(q)
        if a.shape != b.shape:
            raise ValueError("distributions live on different spaces")
    if _is_exact(a) and _is_exact(b):
        return sum((abs(x - y) for x, y in zip(a, b)), Fraction(0))
    return float(np.abs(a.astype(float) - b.astype(float)).sum())


def dobrushin(m: MutationKernel | np.ndarray, steps: int = 1):
    """beta(M^steps) = max over pairs of rows of sum_y |M^n(x,y) - M^n(x',y)|."""
    if steps < 1:
        raise ValueError("steps must be >= 1")
    kernel = m if isinstance(m, MutationKernel) else MutationKernel(np.asarray(m))
    P = kernel.power(steps)
    best = Fraction(0) if kernel.exact else 0.0
    for x in range(kernel.size):
        for y in range(x + 1, kernel.size):
            best = max(best, tv_distance(P[x], P[y]))
    return best


@dataclass(frozen=True)
class MixingParameters:
    delta: float
    lam: float  # math.inf for rank-one kernels

    @property
    def rank_one(self) -> bool:
        return math.isinf(self.lam)


def fit_mixing_parameters(m: MutationKernel) -> MixingParameters:
    """(delta, lambda) = (2, -log(beta(M)/2)), so beta(M^n) <= delta e^{-lambda n}."""
    beta = float(dobrushin(m, 1))
    if beta / 2 >= 1:
        raise ValueError(
            "kernel is not contractive in one step (beta(M)/2 = 1); supply (delta, lambda) manually"
        )
    if beta == 0:
        return MixingParameters(2.0, math.inf)
    return MixingParameters(2.0, -math.log(beta / 2))


def mixing_violations(m: MutationKernel, params: MixingParameters, n_max: int = 50) -> list[int]:
    """n <= n_max with beta(M^n) > delta e^{-lambda n} (beyond float tolerance)."""
    bad = []
    P = m.power(1)
    for k in range(1, n_max + 1):
        beta = 0.0
        for x in range(m.size):
            for y in range(x + 1, m.size):
                beta = max(beta, float(tv_distance(P[x], P[y])))
        bound = 0.0 if params.rank_one else params.delta * math.exp(-params.lam * k)
        if beta > bound + 1e-10:
            bad.append(k)
        P = P.dot(m.rows)
    return bad


# -- Monte Carlo ----------------------------------------------------------------


def selection_step(x: Sequence, rng: np.random.Generator) -> tuple[tuple, ParentMap]:
    """(x^A, A) with A a uniform parent map."""
    a = sample_uniform_map(len(x), rng)
    return apply_selection(a, x), a


def mutation_step(x: Sequence, m: MutationKernel | Callable, rng: np.random.Generator) -> tuple:
    """Move every coordinate independently: by the kernel rows, or by ``m(value, rng)``."""
    if callable(m) and not isinstance(m, MutationKernel):
        return tuple(m(v, rng) for v in x)
    arr = np.asarray(x)
    if arr.size and (arr.min() < 0 or arr.max() >= m.size or not np.issubdtype(arr.dtype, np.integer)):
        raise ValueError(f"population values must be types in 0..{m.size - 1}")
    return tuple(int(v) for v in m.sample(arr, rng))


def offspring_counts(a: ParentMap) -> np.ndarray:
    """L_i = number of individuals choosing parent i."""
    return np.bincount(a.targets, minlength=a.n)


def sample_eta(eta, size, rng: np.random.Generator) -> np.ndarray:
    p = np.asarray(eta, dtype=object).astype(float)
    return rng.choice(p.size, size=size, p=p / p.sum())


def simulate(m: MutationKernel, eta, n_particles: int, n_steps: int, runs: int, rng: np.random.Generator):
    """Vectorised runs of the chain.

    Returns ``(xi, xi_hat)``, arrays of shape (runs, n_steps + 1, N): the
    population before and after each selection step.
    """
    n = n_particles
    if n < 1 or n_steps < 0 or runs < 0:
        raise ValueError("need N >= 1, n_steps >= 0, runs >= 0")
    xi = np.empty((runs, n_steps + 1, n), dtype=np.int64)
    xi_hat = np.empty_like(xi)
    x = sample_eta(eta, (runs, n), rng)
    for k in range(n_steps + 1):
        xi[:, k] = x
        parents = rng.integers(0, n, size=(runs, n))
        x = np.take_along_axis(x, parents, axis=1)
        xi_hat[:, k] = x
        if k < n_steps:
            x = m.sample(x, rng)
    return xi, xi_hat


def empirical_law(samples: np.ndarray, e_size: int) -> np.ndarray:
    """Counts of populations (rows of ``samples``) by lexicographic index."""
    samples = np.asarray(samples)
    idx = samples @ _powers(samples.shape[1], e_size)
    return np.bincount(idx, minlength=e_size ** samples.shape[1])


class GenealogyForest:
    """Lazily realised values X_p^{(i_0, ..., i_p)} on a planar forest of depth n.

    A lineage is a tuple of node labels read from the root (level 0) upwards.
    Roots draw i.i.d. from ``root_sampler``; every child moves from its
    parent's value with ``mutate``. Values are memoised, so two lineages with a
    common prefix share those ancestors.
    """

    def __init__(self, depth: int, root_sampler: Callable, mutate: Callable, rng: np.random.Generator):
        if depth < 0:
            raise ValueError("depth must be >= 0")
        self.depth = depth
        self._root = root_sampler
        self._mutate = mutate
        self._rng = rng
        self._values: dict[tuple, object] = {}

    @classmethod
    def from_kernel(cls, depth: int, m: MutationKernel, eta, rng: np.random.Generator) -> GenealogyForest:
        p = np.asarray(eta, dtype=object).astype(float)
        cum = np.cumsum(m.to_float(), axis=1)
        return cls(
            depth,
            lambda r: int(r.choice(p.size, p=p / p.sum())),
            lambda v, r: int(np.searchsorted(cum[v], r.random(), side="right").clip(max=m.size - 1)),
            rng,
        )

    def value(self, lineage: Sequence) -> object:
        lineage = tuple(lineage)
        if not 1 <= len(lineage) <= self.depth + 1:
            raise ValueError("lineage length must lie in 1..depth+1")
        if lineage in self._values:
            return self._values[lineage]
        if len(lineage) == 1:
            v = self._root(self._rng)
        else:
            v = self._mutate(self.value(lineage[:-1]), self._rng)
        self._values[lineage] = v
        return v

    def read(self, b_seq: Sequence[ParentMap]) -> tuple:
        """The population (X_n^{b_n(i), ..., b_0(i)})_i for a genealogy of matching depth."""
        b_seq = tuple(b_seq)
        _check_decreasing(b_seq)
        if len(b_seq) != self.depth + 1:
            raise ValueError("genealogy depth does not match the forest")
        n = b_seq[0].n
        return tuple(self.value(tuple(b.targets[i] for b in reversed(b_seq))) for i in range(n))


def sample_genealogy(m: MutationKernel, eta, b_seq: Sequence[ParentMap], rng: np.random.Generator) -> tuple:
    """One draw from eta_b via a fresh forest."""
    forest = GenealogyForest.from_kernel(len(b_seq) - 1, m, eta, rng)
    return forest.read(b_seq)
