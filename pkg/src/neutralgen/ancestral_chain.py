"""The backward coalescent chain B_n = A_n B_{n-1} and its excursions.

B_0 = A_0 is a uniform parent map and every later step composes a fresh uniform
map on the left. The chain is weakly decreasing for the factorisation order and
is absorbed when it becomes constant; the absorption time T is the number of
generations back to the most recent common ancestor of the whole population.
"""
from __future__ import annotations

import itertools
from collections import defaultdict
from dataclasses import dataclass, field
from fractions import Fraction
from functools import lru_cache
from typing import Iterator, Sequence

import numpy as np

from .mapping_monoid import (
    ParentMap,
    all_maps,
    compose,
    format_map,
    identity,
    image_size,
    is_boundary,
    leq,
    parse_map,
    sample_uniform_map,
)

MAX_ENUMERATION = 10**7


@dataclass(frozen=True)
class Excursion:
    """A weakly decreasing sequence (c_0, ..., c_l) of parent maps.

    When ``absorbed`` is true only the last map is constant, which makes it an
    element of the excursion space. ``absorbed=False`` marks a sequence that
    never reached a constant map (the no-hit case of :func:`star_compose`).
    """

    maps: tuple[ParentMap, ...]
    absorbed: bool = True
    size: int = field(init=False, compare=False, repr=False)

    def __post_init__(self):
        maps = tuple(self.maps)
        if not maps:
            raise ValueError("an excursion needs at least one map")
        n = maps[0].n
        for p, c in enumerate(maps):
            if c.n != n:
                raise ValueError("all maps of an excursion must share N")
            if p and not leq(c, maps[p - 1]):
                raise ValueError(f"not weakly decreasing at position {p}")
            hit = is_boundary(c)
            last = p == len(maps) - 1
            if hit and not (last and self.absorbed):
                raise ValueError(f"unexpected constant map at position {p}")
            if last and self.absorbed and not hit:
                raise ValueError("an absorbed excursion must end in a constant map")
        object.__setattr__(self, "maps", maps)
        object.__setattr__(self, "size", sum(image_size(c) for c in maps))

    @classmethod
    def _trusted(cls, maps: tuple[ParentMap, ...], size: int, absorbed: bool = True) -> Excursion:
        obj = object.__new__(cls)
        object.__setattr__(obj, "maps", maps)
        object.__setattr__(obj, "absorbed", absorbed)
        object.__setattr__(obj, "size", size)
        return obj

    @property
    def n(self) -> int:
        return self.maps[0].n

    @property
    def length(self) -> int:
        return len(self.maps) - 1

    def __str__(self) -> str:
        return format_excursion(self)


def format_excursion(e: Excursion | Sequence[ParentMap]) -> str:
    maps = e.maps if isinstance(e, Excursion) else e
    return ";".join(format_map(c) for c in maps)


def parse_excursion(text: str) -> Excursion:
    return Excursion(tuple(parse_map(tok) for tok in text.strip().split(";")))


def step(b: ParentMap, rng: np.random.Generator) -> ParentMap:
    """One backward generation: A o b with A uniform."""
    return compose(sample_uniform_map(b.n, rng), b)


def conditional_transition_prob(a: ParentMap, b: ParentMap) -> Fraction:
    """P(B_n = b | B_{n-1} = a) = N^-|a| if b <= a, else 0."""
    if not leq(b, a):
        return Fraction(0)
    return Fraction(1, a.n ** image_size(a))


def run_to_absorption(n: int, rng: np.random.Generator) -> Excursion:
    """Sample (B_0, ..., B_T)."""
    if n == 1:
        return Excursion((identity(1),))
    b = sample_uniform_map(n, rng)
    maps = [b]
    while not is_boundary(b):
        b = step(b, rng)
        maps.append(b)
    return Excursion(tuple(maps))


def simulate_absorption(n: int, runs: int, rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
    """Vectorised sampler of (T, label) for ``runs`` independent chains.

    Labels are 1-based. Each active chain draws its own uniform map every step,
    in the same order as repeated calls to :func:`step` would.
    """
    if n < 1 or runs < 0:
        raise ValueError("need n >= 1 and runs >= 0")
    T = np.zeros(runs, dtype=np.int64)
    labels = np.ones(runs, dtype=np.int64)
    if n == 1 or runs == 0:
        return T, labels
    B = rng.integers(0, n, size=(runs, n))
    active = np.arange(runs)
    t = 0
    while active.size:
        done = (B == B[:, :1]).all(axis=1)
        T[active[done]] = t
        labels[active[done]] = B[done, 0] + 1
        active = active[~done]
        B = B[~done]
        if not active.size:
            break
        A = rng.integers(0, n, size=B.shape)
        B = np.take_along_axis(A, B, axis=1)
        t += 1
    return T, labels


def mrca_label(e: Excursion) -> int:
    """The (1-based) label i of the constant map e_i closing the excursion."""
    if not isinstance(e, Excursion) or not e.absorbed:
        raise ValueError("mrca_label needs an absorbed excursion")
    return e.maps[-1].targets[0] + 1


@lru_cache(maxsize=None)
def _inverse_power(n: int, exponent: int) -> Fraction:
    return Fraction(1, n**exponent)


def excursion_probability(e: Excursion) -> Fraction:
    """p(c) = N^-(N + |c| - 1), with |c| the summed image sizes."""
    if not isinstance(e, Excursion) or not e.absorbed:
        raise ValueError("excursion_probability needs an absorbed excursion")
    return _inverse_power(e.n, e.n + e.size - 1)


def star_compose(seq: Sequence[ParentMap] | Excursion, a: ParentMap) -> Excursion:
    """(c_0 a, ..., c_t a), cut at the first constant entry.

    ``seq`` must start at the identity (it is (Id, c) for an excursion c). If no
    entry becomes constant the whole composed sequence is returned with
    ``absorbed=False``.
    """
    maps = seq.maps if isinstance(seq, Excursion) else tuple(seq)
    if not maps or maps[0] != identity(maps[0].n):
        raise ValueError("star_compose expects a sequence starting at the identity")
    if a.n != maps[0].n:
        raise ValueError(f"size mismatch: N={maps[0].n} vs N={a.n}")
    for p in range(1, len(maps)):
        if not leq(maps[p], maps[p - 1]):
            raise ValueError(f"input not weakly decreasing at position {p}")
    out = []
    for c in maps:
        ca = compose(c, a)
        out.append(ca)
        if is_boundary(ca):
            return Excursion(tuple(out))
    return Excursion(tuple(out), absorbed=False)


# -- exact enumeration -------------------------------------------------------


@lru_cache(maxsize=8)
def _order_graph(n: int):
    """For every non-constant c: sorted non-constant maps below c, and constants."""
    maps = sorted(all_maps(n), key=lambda m: m.targets)
    inner = [m for m in maps if not is_boundary(m)]
    consts = tuple(m for m in maps if is_boundary(m))
    sizes = {m: image_size(m) for m in maps}
    below = {c: tuple(d for d in inner if leq(d, c)) for c in inner}
    return tuple(inner), consts, below, sizes


def count_excursions(n: int, max_len: int) -> int:
    """Number of excursions of length <= max_len (dynamic programming)."""
    if n == 1:
        return 1
    if n > 4:
        raise ValueError("excursion enumeration is restricted to N <= 4")
    inner, consts, below, _ = _order_graph(n)
    ways = {c: 1 for c in inner}
    total = len(consts)
    for _length in range(1, max_len + 1):
        total += len(consts) * sum(ways.values())
        nxt: dict[ParentMap, int] = defaultdict(int)
        for c, w in ways.items():
            for d in below[c]:
                nxt[d] += w
        ways = nxt
    return total


def enumerate_excursions(n: int, max_len: int) -> Iterator[Excursion]:
    """Every excursion of length <= max_len exactly once.

    Ordered by length, then lexicographically by the map encodings.
    """
    if max_len < 0:
        raise ValueError("max_len must be >= 0")
    if n == 1:
        yield Excursion((identity(1),))
        return
    predicted = count_excursions(n, max_len)
    if predicted > MAX_ENUMERATION:
        raise ValueError(f"{predicted} excursions exceed the enumeration limit {MAX_ENUMERATION}")
    inner, consts, below, sizes = _order_graph(n)

    for length in range(max_len + 1):
        # depth-first over prefixes (c_0, ..., c_{length-1}) of non-constant maps
        if length == 0:
            for e in consts:
                yield Excursion._trusted((e,), 1)
            continue
        stack: list[tuple[tuple[ParentMap, ...], int]] = [((c,), sizes[c]) for c in reversed(inner)]
        while stack:
            prefix, size = stack.pop()
            if len(prefix) == length:
                for e in consts:
                    yield Excursion._trusted(prefix + (e,), size + 1)
                continue
            for d in reversed(below[prefix[-1]]):
                stack.append((prefix + (d,), size + sizes[d]))


def enumerate_prefixes(n: int, steps: int) -> Iterator[tuple[tuple[ParentMap, ...], Fraction]]:
    """All paths (B_0, ..., B_steps) of the backward chain with their probabilities.

    Unlike excursions these keep running after absorption. Feasible for tiny N only.
    """
    maps = list(all_maps(n))
    below = {c: [d for d in maps if leq(d, c)] for c in maps}
    start = Fraction(1, n**n)

    def rec(path, prob):
        if len(path) == steps + 1:
            yield tuple(path), prob
            return
        c = path[-1]
        w = prob / n ** image_size(c)
        for d in below[c]:
            path.append(d)
            yield from rec(path, w)
            path.pop()

    for b0 in maps:
        yield from rec([b0], start)


def exact_absorption_law(n: int, horizon: int) -> tuple[list[list[Fraction]], Fraction]:
    """Exact P(T = k, B_T = e_i) for k <= horizon by propagating the law of B_n.

    Returns ``(law, residual)`` where ``law[k][i-1] = P(T = k, label = i)`` and
    ``residual = P(T > horizon)``.
    """
    if n == 1:
        return [[Fraction(1)]] + [[Fraction(0)] for _ in range(horizon)], Fraction(0)
    maps = list(all_maps(n))
    below = {c: [d for d in maps if leq(d, c)] for c in maps if not is_boundary(c)}
    current: dict[ParentMap, Fraction] = {}
    law = []
    row = [Fraction(0)] * n
    for c in maps:
        if is_boundary(c):
            row[c.targets[0]] += Fraction(1, n**n)
        else:
            current[c] = current.get(c, Fraction(0)) + Fraction(1, n**n)
    law.append(row)
    for _k in range(horizon):
        row = [Fraction(0)] * n
        nxt: dict[ParentMap, Fraction] = defaultdict(Fraction)
        for c, w in current.items():
            share = w / n ** image_size(c)
            for d in below[c]:
                if is_boundary(d):
                    row[d.targets[0]] += share
                else:
                    nxt[d] += share
        law.append(row)
        current = dict(nxt)
    return law, sum(current.values(), Fraction(0))


def children(c: ParentMap) -> Iterator[ParentMap]:
    """All d <= c, i.e. the N^|c| maps of the form b o c."""
    n = c.n
    parents = sorted(set(c.targets))
    for values in itertools.product(range(n), repeat=len(parents)):
        lookup = dict(zip(parents, values))
        yield ParentMap(tuple(lookup[j] for j in c.targets))
