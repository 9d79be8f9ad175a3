"""Genealogical-tree expansion of the invariant measure.

A coalescent history (c_0, ..., c_n) with image sizes q_1, ..., q_n, 1 is, up to
relabelling the image sets increasingly, a sequence of surjections

    {1} <-a_n- [q_n] <- ... <- [q_1] <-a_0- [N],

and relabelling every level by a permutation (the group action below) leaves
the underlying rooted tree unchanged. Summing the excursion measure over a
tree's orbit gives

    Gamma^_mu = Sym( sum_t  N (N)_q / (|Z(t)| N^|q|)  mu_t ),

where Sym averages over permutations of the N individuals. The leading N
counts the choice of the final constant map e_i: each standardised sequence
stands for prod_{k=1..n+1} C(N, q_k) excursions, and q_{n+1} = 1 contributes
C(N, 1) = N.

Surjections are tuples of 0-based targets. Trees are nested tuples in
canonical form: a leaf is ``()`` and an internal vertex is the sorted tuple of
its children's forms.
"""
from __future__ import annotations

import itertools
import math
from collections import Counter
from dataclasses import dataclass
from fractions import Fraction
from functools import lru_cache
from typing import Iterator, Sequence

import numpy as np

from .ancestral_chain import Excursion, enumerate_excursions, excursion_probability
from .block_count import absorption_distribution, falling, stirling2
from .mapping_monoid import ParentMap, is_boundary, leq
from .neutral_model import DistributionVector, MutationKernel, genealogy_measure

MAX_PROFILES = 10**6
MAX_TREES = 10**5
MAX_EMBEDDINGS = 10**5

Tree = tuple


# -- profiles ------------------------------------------------------------------


@dataclass(frozen=True)
class LevelProfile:
    """(q_0, ..., q_n) with q_0 = N >= q_1 >= ... >= q_n > 1; q_{n+1} = 1 is implicit."""

    q: tuple[int, ...]

    def __post_init__(self):
        q = tuple(int(v) for v in self.q)
        if not q:
            raise ValueError("a profile needs q_0 = N")
        if any(a < b for a, b in zip(q, q[1:])):
            raise ValueError(f"profile {q} is not weakly decreasing")
        if q[-1] <= 1:
            raise ValueError(f"profile {q} has an entry <= 1")
        object.__setattr__(self, "q", q)

    @property
    def n(self) -> int:
        return self.q[0]

    @property
    def depth(self) -> int:
        return len(self.q) - 1

    @property
    def size(self) -> int:
        return sum(self.q)

    @property
    def factorial(self) -> int:
        return math.prod(math.factorial(v) for v in self.q)

    @property
    def falling(self) -> int:
        return math.prod(falling(self.n, v) for v in self.q)

    def surjection_total(self) -> int:
        """|S_n(q)|: all surjection sequences with this profile."""
        ext = self.q + (1,)
        return math.prod(surjection_count(ext[k], ext[k + 1]) for k in range(len(self.q)))

    def weight(self) -> Fraction:
        """Mass of one standardised sequence: N (N)_q / (q! N^|q|)."""
        return Fraction(self.n * self.falling, self.factorial * self.n**self.size)


def count_profiles(n_particles: int, depth: int) -> int:
    # weakly decreasing sequences of length depth in {2..N}
    return math.comb(n_particles - 2 + depth, depth) if n_particles >= 2 else 0


def enumerate_profiles(n_particles: int, depth: int) -> Iterator[LevelProfile]:
    """All profiles (N, q_1, ..., q_depth) in lexicographic order."""
    if n_particles < 2:
        raise ValueError("profiles need N >= 2")
    if depth < 0:
        raise ValueError("depth must be >= 0")
    total = count_profiles(n_particles, depth)
    if total > MAX_PROFILES:
        raise ValueError(f"{total} profiles exceed the limit {MAX_PROFILES}")

    def rec(prefix):
        if len(prefix) == depth + 1:
            yield LevelProfile(tuple(prefix))
            return
        for v in range(2, prefix[-1] + 1):
            yield from rec(prefix + [v])

    yield from rec([n_particles])


def surjection_count(m: int, k: int) -> int:
    """Number of surjections [m] -> [k], k! S(m, k)."""
    if m < 0 or k < 0:
        raise ValueError("need non-negative sizes")
    if k > m:
        return 0
    return math.factorial(k) * stirling2(m, k)


def surjections(m: int, k: int) -> Iterator[tuple[int, ...]]:
    for f in itertools.product(range(k), repeat=m):
        if len(set(f)) == k:
            yield f


# -- surjection sequences -----------------------------------------------------------


@dataclass(frozen=True)
class SurjectionSequence:
    """(a_0, ..., a_n) with a_p: [q_p] ->> [q_{p+1}] and q_{n+1} = 1.

    Levels of size 1 are allowed here (path segments), although profiles of
    the expansion never contain them.
    """

    maps: tuple[tuple[int, ...], ...]

    def __post_init__(self):
        maps = tuple(tuple(int(v) for v in a) for a in self.maps)
        if not maps:
            raise ValueError("need at least one surjection")
        sizes = [len(a) for a in maps] + [1]
        for p, a in enumerate(maps):
            if not a:
                raise ValueError("empty level")
            if set(a) != set(range(sizes[p + 1])):
                raise ValueError(f"a_{p} is not a surjection onto [{sizes[p + 1]}]")
        object.__setattr__(self, "maps", maps)

    @property
    def profile(self) -> tuple[int, ...]:
        """(q_0, ..., q_n)."""
        return tuple(len(a) for a in self.maps)

    @property
    def n(self) -> int:
        return len(self.maps[0])

    @property
    def depth(self) -> int:
        return len(self.maps) - 1

    def is_weakly_increasing(self) -> bool:
        return all(all(x <= y for x, y in zip(a, a[1:])) for a in self.maps)


def pi(a: SurjectionSequence) -> tuple[ParentMap, ...]:
    """(a_0, a_1 a_0, ..., a_n ... a_0), each read as a map [N] -> [N]."""
    out = []
    current = a.maps[0]
    out.append(ParentMap(current))
    for nxt in a.maps[1:]:
        current = tuple(nxt[v] for v in current)
        out.append(ParentMap(current))
    return tuple(out)


def standardize(c: Excursion | Sequence[ParentMap]) -> SurjectionSequence:
    """Relabel every image set increasingly and read off the surjections."""
    maps = c.maps if isinstance(c, Excursion) else tuple(c)
    if not maps or not is_boundary(maps[-1]):
        raise ValueError("standardize needs a sequence ending in a constant map")
    for p in range(1, len(maps)):
        if not leq(maps[p], maps[p - 1]):
            raise ValueError(f"sequence is not weakly decreasing at position {p}")
    ranked = []
    for cp in maps:
        rank = {v: r for r, v in enumerate(sorted(set(cp.targets)))}
        ranked.append(tuple(rank[v] for v in cp.targets))
    out = [ranked[0]]
    for prev, cur in zip(ranked, ranked[1:]):
        a = [0] * (max(prev) + 1)
        for u, v in zip(prev, cur):
            a[u] = v
        out.append(tuple(a))
    return SurjectionSequence(tuple(out))


def _inverse(s: Sequence[int]) -> list[int]:
    inv = [0] * len(s)
    for i, v in enumerate(s):
        inv[v] = i
    return inv


def group_action(s: Sequence[Sequence[int]], a: SurjectionSequence) -> SurjectionSequence:
    """s(a) = (s_1 a_0 s_0^-1, ..., s_n a_{n-1} s_{n-1}^-1, a_n s_n^-1)."""
    s = [tuple(p) for p in s]
    prof = a.profile
    if len(s) != len(prof) or any(sorted(p) != list(range(q)) for p, q in zip(s, prof)):
        raise ValueError("permutation sequence does not match the profile")
    out = []
    for p, ap in enumerate(a.maps):
        inv = _inverse(s[p])
        nxt = s[p + 1] if p + 1 < len(s) else (0,)
        out.append(tuple(nxt[ap[inv[i]]] for i in range(len(ap))))
    return SurjectionSequence(tuple(out))


def group_elements(profile: Sequence[int]) -> Iterator[tuple[tuple[int, ...], ...]]:
    return itertools.product(*(itertools.permutations(range(q)) for q in profile))


def compose_perms(s: Sequence[Sequence[int]], t: Sequence[Sequence[int]]) -> tuple[tuple[int, ...], ...]:
    """Level-wise s o t, so that (s t)(a) = s(t(a))."""
    return tuple(tuple(sp[tp[i]] for i in range(len(tp))) for sp, tp in zip(s, t))


def orbit(a: SurjectionSequence) -> set[SurjectionSequence]:
    return {group_action(s, a) for s in group_elements(a.profile)}


def stabilizer_bruteforce(a: SurjectionSequence) -> int:
    return sum(1 for s in group_elements(a.profile) if group_action(s, a) == a)


def surjection_sequences(profile: Sequence[int]) -> Iterator[SurjectionSequence]:
    ext = tuple(profile) + (1,)
    for maps in itertools.product(*(surjections(ext[k], ext[k + 1]) for k in range(len(profile)))):
        yield SurjectionSequence(maps)


def orbits(profile: Sequence[int]) -> list[list[SurjectionSequence]]:
    """Partition of S_n(q) into orbits (brute force, tiny profiles only)."""
    seen: set = set()
    out = []
    for a in surjection_sequences(profile):
        if a in seen:
            continue
        o = orbit(a)
        seen |= o
        out.append(sorted(o, key=lambda x: x.maps))
    return out


# -- trees -------------------------------------------------------------------------


def tree_of(a: SurjectionSequence) -> Tree:
    """Canonical form of the rooted tree drawn by a (leaves are the N individuals)."""
    forms: list[Tree] = [() for _ in range(a.n)]
    for ap in a.maps:
        children: list[list[Tree]] = [[] for _ in range(max(ap) + 1)]
        for i, v in enumerate(ap):
            children[v].append(forms[i])
        forms = [tuple(sorted(ch)) for ch in children]
    (root,) = forms
    return root


def tree_levels(t: Tree) -> list[list[Tree]]:
    """Vertices by depth, root first, siblings in canonical order."""
    levels = [[t]]
    while any(levels[-1]):
        levels.append([c for v in levels[-1] for c in v])
    return levels


def tree_profile(t: Tree) -> tuple[int, ...]:
    """(q_0, ..., q_n) from the leaves down to the level below the root."""
    levels = tree_levels(t)
    if any(not v for lv in levels[:-1] for v in lv):
        raise ValueError("tree has leaves below the top level")
    return tuple(len(lv) for lv in reversed(levels[1:]))


def vertex_count(t: Tree) -> int:
    return 1 + sum(vertex_count(c) for c in t)


@lru_cache(maxsize=65536)
def stabilizer_order(t: Tree) -> int:
    """|Z(t)| = prod over vertices of prod_j m_j!, m_j the multiplicities of equal child subtrees."""
    if not isinstance(t, tuple):
        raise ValueError("malformed tree")
    total = 1
    for child, mult in Counter(t).items():
        total *= math.factorial(mult) * stabilizer_order(child) ** mult
    return total


def representative(t: Tree) -> SurjectionSequence:
    """Weakly increasing surjection sequence drawing t.

    Vertices are numbered breadth-first from the root with siblings in the
    order stored in t (canonical order for canonical forms), so every a_p sends
    consecutive blocks to consecutive parents.
    """
    levels = tree_levels(t)
    if len(levels) < 2:
        raise ValueError("a tree needs at least one level of leaves above the root")
    maps = []
    for depth in range(len(levels) - 1, 0, -1):
        parents = levels[depth - 1]
        a = []
        for label, v in enumerate(parents):
            a.extend([label] * len(v))
        maps.append(tuple(a))
    return SurjectionSequence(tuple(maps))


def _distinct_permutations(items: Sequence) -> Iterator[tuple]:
    items = sorted(items)
    seen = set()
    for p in itertools.permutations(items):
        if p not in seen:
            seen.add(p)
            yield p


def planar_embeddings(t: Tree) -> Iterator[Tree]:
    """Every distinct ordering of children at every vertex (ordered nested tuples)."""
    if not t:
        yield ()
        return
    for order in _distinct_permutations(t):
        for parts in itertools.product(*(list(planar_embeddings(c)) for c in order)):
            yield tuple(parts)


def count_embeddings(t: Tree) -> int:
    total = math.factorial(len(t))
    for child, mult in Counter(t).items():
        total //= math.factorial(mult)
        total *= count_embeddings(child) ** mult
    return total


def canonical_representative(t: Tree) -> SurjectionSequence:
    """Lexicographically least weakly increasing sequence drawing t.

    Sequences are compared as (a_0, a_1, ..., a_n), each a_p as a tuple of
    0-based targets. Weakly increasing sequences of an orbit are exactly the
    breadth-first numberings of planar embeddings of t, so the minimum is taken
    over those (guarded by MAX_EMBEDDINGS).
    """
    total = count_embeddings(t)
    if total > MAX_EMBEDDINGS:
        raise ValueError(f"{total} planar embeddings exceed the limit {MAX_EMBEDDINGS}")
    return min((representative(e) for e in planar_embeddings(t)), key=lambda a: a.maps)


@lru_cache(maxsize=4096)
def _forest_groupings(forest: tuple, k: int) -> frozenset:
    """All ways to group a multiset of trees (sorted tuple) under k parents."""
    out = set()
    items = list(forest)
    for labels in _set_partitions(len(items), k):
        parents = [[] for _ in range(k)]
        for i, lab in enumerate(labels):
            parents[lab].append(items[i])
        out.add(tuple(sorted(tuple(sorted(p)) for p in parents)))
    return frozenset(out)


def _set_partitions(m: int, k: int) -> Iterator[list[int]]:
    """Restricted growth strings of length m with exactly k blocks."""

    def rec(prefix, used):
        if len(prefix) == m:
            if used == k:
                yield list(prefix)
            return
        remaining = m - len(prefix)
        if k - used > remaining:
            return
        for lab in range(min(used + 1, k)):
            prefix.append(lab)
            yield from rec(prefix, max(used, lab + 1))
            prefix.pop()

    yield from rec([], 0)


def enumerate_trees(profile: LevelProfile | Sequence[int]) -> list[Tree]:
    """Canonical forms of all trees with the given level sizes, sorted."""
    q = profile.q if isinstance(profile, LevelProfile) else tuple(profile)
    forests = {tuple(() for _ in range(q[0]))}
    for k in list(q[1:]) + [1]:
        new = set()
        for f in forests:
            new |= _forest_groupings(f, k)
        forests = new
        if len(forests) > MAX_TREES:
            raise ValueError("too many trees")
    return sorted(f[0] for f in forests)


def tree_weight(t: Tree) -> Fraction:
    """N (N)_q / (|Z(t)| N^|q|)."""
    prof = LevelProfile(tree_profile(t))
    return Fraction(prof.n * prof.falling, stabilizer_order(t) * prof.n**prof.size)


def format_tree(t: Tree) -> str:
    """'( )' for a leaf; children grouped as 'child^m' when repeated."""
    if not t:
        return "( )"
    parts = []
    for child, mult in sorted(Counter(t).items()):
        s = format_tree(child)
        parts.append(f"{s}^{mult}" if mult > 1 else s)
    return "( " + " ".join(parts) + " )"


def parse_tree(text: str) -> Tree:
    tokens = text.replace("(", " ( ").replace(")", " ) ").replace("^", " ^ ").split()
    pos = 0

    def parse() -> Tree:
        nonlocal pos
        if pos >= len(tokens) or tokens[pos] != "(":
            raise ValueError(f"expected '(' at token {pos} in {text!r}")
        pos += 1
        children = []
        while pos < len(tokens) and tokens[pos] != ")":
            child = parse()
            mult = 1
            if pos < len(tokens) and tokens[pos] == "^":
                try:
                    mult = int(tokens[pos + 1])
                except (IndexError, ValueError) as exc:
                    raise ValueError(f"bad multiplicity in {text!r}") from exc
                if mult < 1:
                    raise ValueError(f"bad multiplicity in {text!r}")
                pos += 2
            children.extend([child] * mult)
        if pos >= len(tokens):
            raise ValueError(f"unbalanced parentheses in {text!r}")
        pos += 1
        return tuple(sorted(children))

    t = parse()
    if pos != len(tokens):
        raise ValueError(f"trailing input in {text!r}")
    return t


# -- masses and the series -------------------------------------------------------------


def level_mass(n_particles: int, depth: int) -> Fraction:
    """Total weight of depth-n histories: sum_q N (N)_q |S_n(q)| / (q! N^|q|) = P(T = n)."""
    return sum((p.weight() * p.surjection_total() for p in enumerate_profiles(n_particles, depth)), Fraction(0))


def level_mass_trees(n_particles: int, depth: int) -> Fraction:
    """Same mass summed tree by tree with the stabiliser weights."""
    total = Fraction(0)
    for p in enumerate_profiles(n_particles, depth):
        for t in enumerate_trees(p):
            total += tree_weight(t)
    return total


def symmetrize(p: DistributionVector) -> DistributionVector:
    """Average of the law over all permutations of the N coordinates."""
    perms = list(itertools.permutations(range(p.n)))
    acc = None
    for perm in perms:
        w = p.permute(perm).weights
        acc = w if acc is None else acc + w
    return DistributionVector(p.n, p.e_size, acc / len(perms))


@dataclass(frozen=True)
class SeriesResult:
    """Truncated, renormalised tree series and its certified radius (TV norm, sup over |f| <= 1)."""

    measure: DistributionVector
    radius: object
    depth: int
    trees: int
    tail: object


def _truncation_depth(n: int, eps: float) -> tuple[int, object]:
    dist = absorption_distribution(n, n, eps=eps / 8)
    for h in range(dist.horizon):
        tail = dist.alive(h + 1)  # P(T > h) = P(S > h + 1)
        if 2 * tail < eps:
            return h, tail
    raise RuntimeError("truncation depth not reached")  # pragma: no cover


def invariant_measure_series(m: MutationKernel, n_particles: int, eps: float) -> SeriesResult:
    """Gamma^_mu from the tree expansion truncated at the first depth h with 2 P(T > h) < eps.

    Trees up to depth h are weighted by N (N)_q / (|Z(t)| N^|q|), evaluated on a
    weakly increasing representative, summed and symmetrised. The sum has mass
    1 - P(T > h); dividing by it moves the result by at most P(T > h), so the
    returned radius 2 P(T > h) bounds the distance to the full series.
    """
    if m.stationary is None:
        raise ValueError("the kernel needs a stationary law mu (see MutationKernel.with_stationary)")
    if not eps > 0:
        raise ValueError("eps must be positive")
    n = n_particles
    h, tail = _truncation_depth(n, eps)
    total_profiles = sum(count_profiles(n, d) for d in range(h + 1))
    if total_profiles > MAX_PROFILES:
        raise ValueError(f"{total_profiles} profiles exceed the limit")
    mu = list(m.stationary)
    acc = None
    mass = Fraction(0)
    count = 0
    for d in range(h + 1):
        for prof in enumerate_profiles(n, d):
            for t in enumerate_trees(prof):
                w = tree_weight(t)
                vec = genealogy_measure(m, mu, pi(representative(t))).weights
                term = vec * (w if vec.dtype == object else float(w))
                acc = term if acc is None else acc + term
                mass += w
                count += 1
                if count > MAX_TREES:
                    raise ValueError("too many trees for the series")
    assert mass == 1 - tail, "tree weights must reproduce the law of T"
    acc = acc / (mass if acc.dtype == object else float(mass))
    measure = symmetrize(DistributionVector(n, m.size, acc))
    radius = 2 * tail if acc.dtype == object else 2 * float(tail)
    return SeriesResult(measure, radius, h, count, tail)


def excursion_sum(m: MutationKernel, n_particles: int, max_len: int) -> np.ndarray:
    """sum over excursions c of length <= max_len of p(c) mu_c (unnormalised weights)."""
    if m.stationary is None:
        raise ValueError("the kernel needs a stationary law mu")
    mu = list(m.stationary)
    acc = None
    for c in enumerate_excursions(n_particles, max_len):
        vec = genealogy_measure(m, mu, c.maps).weights * excursion_probability(c)
        acc = vec if acc is None else acc + vec
    return acc


def tree_sum(m: MutationKernel, n_particles: int, max_depth: int) -> np.ndarray:
    """Symmetrised tree-weighted sum up to a depth (unnormalised), for cross-checks."""
    mu = list(m.stationary)
    acc = None
    for d in range(max_depth + 1):
        for prof in enumerate_profiles(n_particles, d):
            for t in enumerate_trees(prof):
                vec = genealogy_measure(m, mu, pi(representative(t))).weights * tree_weight(t)
                acc = vec if acc is None else acc + vec
    perms = list(itertools.permutations(range(n_particles)))
    shaped = acc.reshape((m.size,) * n_particles)
    return sum(np.transpose(shaped, p).reshape(-1) for p in perms) / len(perms)
