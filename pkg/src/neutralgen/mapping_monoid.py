"""Parent-choice maps: the composition monoid of all maps [N] -> [N].

A :class:`ParentMap` stores its targets 0-based. Everything that is printed or
parsed uses 1-based targets, so ``ParentMap((1, 0, 0))`` is written ``"2,1,1"``.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass
from typing import Iterator, Sequence

import numpy as np


@dataclass(frozen=True, slots=True)
class ParentMap:
    """A map a: [N] -> [N]; ``targets[i]`` is the (0-based) parent of individual i."""

    targets: tuple[int, ...]

    def __post_init__(self):
        t = tuple(int(v) for v in self.targets)
        n = len(t)
        if n == 0:
            raise ValueError("a parent map needs at least one individual")
        if any(v < 0 or v >= n for v in t):
            raise ValueError(f"targets must lie in 0..{n - 1}: {t}")
        object.__setattr__(self, "targets", t)

    @property
    def n(self) -> int:
        return len(self.targets)

    @classmethod
    def from_one_based(cls, targets: Sequence[int]) -> ParentMap:
        return cls(tuple(int(v) - 1 for v in targets))

    def one_based(self) -> tuple[int, ...]:
        return tuple(v + 1 for v in self.targets)

    def __str__(self) -> str:
        return format_map(self)


def identity(n: int) -> ParentMap:
    return ParentMap(tuple(range(n)))


def constant(n: int, i: int) -> ParentMap:
    """The constant map e_i (``i`` is 1-based, as in the printed encoding)."""
    if not 1 <= i <= n:
        raise ValueError(f"constant label {i} outside 1..{n}")
    return ParentMap((i - 1,) * n)


def format_map(a: ParentMap) -> str:
    return ",".join(str(v) for v in a.one_based())


def parse_map(text: str) -> ParentMap:
    """Parse the comma-separated 1-based encoding, e.g. ``"2,1,1"``."""
    try:
        values = [int(tok) for tok in text.strip().split(",")]
    except ValueError as exc:
        raise ValueError(f"malformed parent map {text!r}") from exc
    return ParentMap.from_one_based(values)


def _check_same_size(a: ParentMap, b: ParentMap) -> None:
    if a.n != b.n:
        raise ValueError(f"size mismatch: N={a.n} vs N={b.n}")


def image_size(a: ParentMap) -> int:
    """Number of distinct parents, |a([N])|."""
    return len(set(a.targets))


def is_boundary(a: ParentMap) -> bool:
    """True iff ``a`` is one of the constant maps e_1, ..., e_N."""
    first = a.targets[0]
    return all(v == first for v in a.targets)


def compose(a: ParentMap, b: ParentMap) -> ParentMap:
    """(a o b)(i) = a(b(i))."""
    _check_same_size(a, b)
    at = a.targets
    return ParentMap(tuple(at[j] for j in b.targets))


def leq(a: ParentMap, c: ParentMap) -> bool:
    """Partial order a <= c, i.e. a = b o c for some b.

    Such a b exists iff a is constant on every level set of c.
    """
    _check_same_size(a, c)
    seen: dict[int, int] = {}
    for ai, ci in zip(a.targets, c.targets):
        if seen.setdefault(ci, ai) != ai:
            return False
    return True


def apply_selection(a: ParentMap, x: Sequence) -> tuple:
    """Selected population x^a, with ``x^a[i] = x[a(i)]``."""
    if len(x) != a.n:
        raise ValueError(f"population of size {len(x)} does not match N={a.n}")
    return tuple(x[j] for j in a.targets)


def sample_uniform_map(n: int, rng: np.random.Generator) -> ParentMap:
    """Each of the N^N maps with probability N^-N."""
    if n < 1:
        raise ValueError("n must be positive")
    return ParentMap(tuple(rng.integers(0, n, size=n).tolist()))


def all_maps(n: int) -> Iterator[ParentMap]:
    """All N^N maps, in lexicographic order of their targets."""
    for t in itertools.product(range(n), repeat=n):
        yield ParentMap(t)


def level_sets(c: ParentMap) -> list[tuple[int, ...]]:
    """The fibres c^-1(j) of the non-empty parents j, in increasing j."""
    fibres: dict[int, list[int]] = {}
    for i, j in enumerate(c.targets):
        fibres.setdefault(j, []).append(i)
    return [tuple(fibres[j]) for j in sorted(fibres)]
