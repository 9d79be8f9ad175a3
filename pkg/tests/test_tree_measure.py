import itertools
import math
from fractions import Fraction as F

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from neutralgen.ancestral_chain import enumerate_excursions
from neutralgen.block_count import mrca_time_pmf
from neutralgen.mapping_monoid import ParentMap, constant, image_size
from neutralgen.neutral_model import (
    MutationKernel,
    apply_selection_average,
    exact_stationary,
    product_measure,
    tv_distance,
)
from neutralgen.tree_measure import (
    LevelProfile,
    SurjectionSequence,
    canonical_representative,
    compose_perms,
    count_embeddings,
    count_profiles,
    enumerate_profiles,
    enumerate_trees,
    excursion_sum,
    format_tree,
    group_action,
    invariant_measure_series,
    level_mass,
    level_mass_trees,
    orbits,
    parse_tree,
    pi,
    planar_embeddings,
    representative,
    stabilizer_bruteforce,
    stabilizer_order,
    standardize,
    surjection_count,
    surjection_sequences,
    tree_of,
    tree_profile,
    tree_sum,
    tree_weight,
    vertex_count,
)
import neutralgen.tree_measure as tm

ROWS = [[F(9, 10), F(1, 10)], [F(2, 10), F(8, 10)]]


@pytest.fixture
def kernel():
    return MutationKernel(ROWS).with_stationary()


def small_profiles(max_vertices):
    """Every weakly decreasing (q_0, ..., q_n) of positive sizes with |q| + 1 <= max_vertices."""
    out = []

    def rec(prefix, budget):
        if prefix:
            out.append(tuple(prefix))
        top = prefix[-1] if prefix else budget
        for v in range(1, min(top, budget) + 1):
            rec(prefix + [v], budget - v)

    rec([], max_vertices - 1)
    return out


# -- profiles and counts -------------------------------------------------------


@pytest.mark.parametrize(
    "n, depth, expected",
    [
        (2, 0, [(2,)]),
        (2, 1, [(2, 2)]),
        (3, 1, [(3, 2), (3, 3)]),
        (4, 2, [(4, 2, 2), (4, 3, 2), (4, 3, 3), (4, 4, 2), (4, 4, 3), (4, 4, 4)]),
    ],
)
def test_enumerate_profiles(n, depth, expected):
    got = [p.q for p in enumerate_profiles(n, depth)]
    assert got == expected
    assert count_profiles(n, depth) == len(expected)


def test_profiles_brute_force():
    for n in range(2, 6):
        for depth in range(4):
            brute = [
                (n,) + rest
                for rest in itertools.product(range(2, n + 1), repeat=depth)
                if all(a >= b for a, b in zip((n,) + rest, rest))
            ]
            assert [p.q for p in enumerate_profiles(n, depth)] == sorted(brute)


def test_profile_guard_and_validation(monkeypatch):
    monkeypatch.setattr(tm, "MAX_PROFILES", 5)
    with pytest.raises(ValueError):
        list(enumerate_profiles(4, 2))
    with pytest.raises(ValueError):
        LevelProfile((3, 4))
    with pytest.raises(ValueError):
        LevelProfile((3, 1))
    with pytest.raises(ValueError):
        list(enumerate_profiles(1, 0))


def test_profile_quantities():
    p = LevelProfile((3, 2))
    assert p.size == 5 and p.factorial == 12 and p.falling == 6 * 6
    assert p.surjection_total() == 6 * 1
    assert p.weight() == F(3 * 36, 12 * 3**5)


@pytest.mark.parametrize("m, k, expected", [(4, 1, 1), (5, 5, 120), (3, 2, 6), (2, 3, 0), (4, 2, 14)])
def test_surjection_count(m, k, expected):
    assert surjection_count(m, k) == expected


def test_surjection_count_brute_force():
    for m in range(1, 6):
        for k in range(1, 6):
            brute = sum(1 for f in itertools.product(range(k), repeat=m) if len(set(f)) == k)
            assert surjection_count(m, k) == brute


# -- sequences, pi, standardisation ---------------------------------------------------


def test_sequence_validation():
    with pytest.raises(ValueError):
        SurjectionSequence(((0, 0, 2), (0, 0)))
    with pytest.raises(ValueError):
        SurjectionSequence(((0, 1), (0, 1)))
    with pytest.raises(ValueError):
        SurjectionSequence(())
    a = SurjectionSequence(((0, 0, 1), (0, 0)))
    assert a.profile == (3, 2) and a.depth == 1 and a.is_weakly_increasing()


def test_pi_examples():
    a = SurjectionSequence(((0, 0, 1), (0, 0)))
    assert pi(a) == (ParentMap((0, 0, 1)), ParentMap((0, 0, 0)))
    assert pi(SurjectionSequence(((0, 0, 0),))) == (constant(3, 1),)


def test_pi_image_sizes():
    for prof in [(4, 3, 2), (3, 3, 2), (4, 2)]:
        for a in surjection_sequences(prof):
            assert tuple(image_size(c) for c in pi(a)) == prof[1:] + (1,)


def test_standardize_examples():
    assert standardize([ParentMap((1, 1))]) == SurjectionSequence(((0, 0),))
    a = SurjectionSequence(((0, 1, 0), (0, 0)))
    assert standardize(pi(a)) == a
    with pytest.raises(ValueError):
        standardize([ParentMap((0, 1))])
    with pytest.raises(ValueError):
        standardize([ParentMap((0, 0, 1)), ParentMap((1, 0, 0)), ParentMap((0, 0, 0))])


def test_standardize_round_trip():
    for c in enumerate_excursions(3, 2):
        a = standardize(c)
        for cp, sp in zip(c.maps, pi(a)):
            rank = {v: r for r, v in enumerate(sorted(set(cp.targets)))}
            assert sp.targets == tuple(rank[v] for v in cp.targets)


def test_standardize_fibres_count_excursions():
    # each standardised sequence stands for prod_{k>=1} C(N, q_k) excursions (q_{n+1} = 1)
    n = 3
    fibres = {}
    for c in enumerate_excursions(n, 3):
        a = standardize(c)
        fibres[a] = fibres.get(a, 0) + 1
    for a, count in fibres.items():
        sizes = a.profile[1:] + (1,)
        assert count == math.prod(math.comb(n, q) for q in sizes)
    assert len(fibres) == sum(p.surjection_total() for d in range(4) for p in enumerate_profiles(n, d))


# -- group action ---------------------------------------------------------------


def test_group_action_identity_and_shape():
    a = SurjectionSequence(((0, 1, 1), (0, 0)))
    ident = tuple(tuple(range(q)) for q in a.profile)
    assert group_action(ident, a) == a
    with pytest.raises(ValueError):
        group_action(((0, 1), (0, 1)), a)
    with pytest.raises(ValueError):
        group_action(((0, 1, 2),), a)


PROFILES_FOR_ACTION = [(3, 2), (4, 2), (4, 3, 2), (3, 3, 2), (4, 4, 2)]
SEQUENCES = {prof: list(surjection_sequences(prof)) for prof in PROFILES_FOR_ACTION}


@settings(max_examples=60, deadline=None)
@given(st.data())
def test_group_action_is_an_action(data):
    prof = data.draw(st.sampled_from(PROFILES_FOR_ACTION))
    a = data.draw(st.sampled_from(SEQUENCES[prof]))
    perm = lambda q: tuple(data.draw(st.permutations(list(range(q)))))
    s = tuple(perm(q) for q in prof)
    t = tuple(perm(q) for q in prof)
    assert group_action(s, group_action(t, a)) == group_action(compose_perms(s, t), a)
    assert group_action(s, a).profile == prof


def test_orbit_stabilizer_and_trees_exhaustive():
    """Orbits of every small profile: orbit-stabilizer, weakly increasing members, orbits <-> trees."""
    for prof in small_profiles(8):
        group_order = math.prod(math.factorial(q) for q in prof)
        parts = orbits(prof)
        trees = enumerate_trees(prof)
        assert sorted(tree_of(o[0]) for o in parts) == trees
        for o in parts:
            a = o[0]
            z = stabilizer_bruteforce(a)
            assert len(o) * z == group_order
            assert len({tree_of(b) for b in o}) == 1
            assert any(b.is_weakly_increasing() for b in o)
            assert z == stabilizer_order(tree_of(a))


# -- trees ----------------------------------------------------------------------


def test_stabilizer_examples():
    leaf = ()
    path = ((((),),),)
    assert stabilizer_order(path) == 1
    assert stabilizer_order((leaf, leaf)) == 2
    assert stabilizer_order(((leaf, leaf), (leaf, leaf))) == 8
    assert stabilizer_order(((leaf, leaf), (leaf,))) == 2
    with pytest.raises(ValueError):
        stabilizer_order("x")


def test_stabilizer_formula_all_small_trees():
    """Fixed points of the full group on a representative, for every tree with <= 8 vertices."""
    seen = 0
    for prof in small_profiles(8):
        for t in enumerate_trees(prof):
            assert vertex_count(t) <= 8
            assert tree_profile(t) == prof
            assert stabilizer_bruteforce(representative(t)) == stabilizer_order(t)
            seen += 1
    assert seen > 40


@pytest.mark.parametrize(
    "text",
    ["( ( )^2 ( ( ) ) )", "( ( ) )", "( ( ( )^2 )^2 ( ( )^3 ) )", "( )"],
)
def test_tree_format_round_trip(text):
    t = parse_tree(text)
    assert format_tree(t) == text
    assert parse_tree(format_tree(t)) == t


def test_tree_parse_normalises_order():
    assert parse_tree("( ( ( ) ) ( ) ( ) )") == parse_tree("( ( )^2 ( ( ) ) )")
    assert parse_tree("(()())") == ((), ())


@pytest.mark.parametrize("bad", ["", "(", "( ) )", "( ( )^0 )", "( ( )^x )", "x"])
def test_tree_parse_errors(bad):
    with pytest.raises(ValueError):
        parse_tree(bad)


def test_tree_profile_rejects_ragged_trees():
    with pytest.raises(ValueError):
        tree_profile(((), ((),)))


def test_representatives_are_weakly_increasing():
    for prof in [(4, 3, 2), (5, 2), (4, 4, 2, 2)]:
        for t in enumerate_trees(prof):
            a = representative(t)
            b = canonical_representative(t)
            assert a.is_weakly_increasing() and b.is_weakly_increasing()
            assert tree_of(a) == tree_of(b) == t


def test_canonical_representative_is_orbit_minimum():
    for prof in small_profiles(8):
        for o in orbits(prof):
            inc = [b for b in o if b.is_weakly_increasing()]
            assert canonical_representative(tree_of(o[0])) == min(inc, key=lambda a: a.maps)


def test_canonical_representative_example():
    # ( ( )^2 ) beside ( ( ) ): the pair of leaves comes first
    t = parse_tree("( ( ( ) ) ( ( )^2 ) )")
    assert canonical_representative(t).maps == ((0, 0, 1), (0, 0))


def test_embedding_count():
    for prof in [(4, 3, 2), (4, 2, 2), (5, 3)]:
        for t in enumerate_trees(prof):
            assert count_embeddings(t) == len(list(planar_embeddings(t)))


def test_embedding_guard(monkeypatch):
    monkeypatch.setattr(tm, "MAX_EMBEDDINGS", 1)
    with pytest.raises(ValueError):
        canonical_representative(parse_tree("( ( ( ) ) ( ( )^2 ) )"))


# -- masses -------------------------------------------------------------------


def test_level_mass_depth_zero():
    assert level_mass(2, 0) == F(1, 2)


@pytest.mark.parametrize("n", [2, 3, 4])
def test_level_mass_matches_block_count(n):
    pmf, _ = mrca_time_pmf(n, 4)
    for depth in range(5):
        assert level_mass(n, depth) == pmf[depth]
        assert level_mass_trees(n, depth) == pmf[depth]


def test_level_mass_sums_to_one():
    n, horizon = 3, 60
    pmf, rest = mrca_time_pmf(n, horizon)
    masses = [level_mass(n, d) for d in range(horizon + 1)]
    assert masses == pmf
    assert sum(masses) + rest == 1


def test_printed_weights_are_off_by_n():
    # without the leading N the depth-0 mass would be N^-N
    for n in range(2, 6):
        (p,) = enumerate_profiles(n, 0)
        assert p.weight() / n == F(1, n**n)
        assert level_mass(n, 0) == F(1, n ** (n - 1))


def test_tree_weight_sums_by_profile():
    for prof in enumerate_profiles(4, 2):
        total = sum(tree_weight(t) for t in enumerate_trees(prof))
        assert total == prof.weight() * prof.surjection_total()


# -- the series ---------------------------------------------------------------------


@pytest.mark.parametrize("n, depth", [(2, 0), (2, 1), (2, 2), (2, 3), (3, 2)])
def test_tree_sum_equals_excursion_sum(kernel, n, depth):
    exp = excursion_sum(kernel, n, depth)
    comp = tree_sum(kernel, n, depth)
    assert exp.dtype == object
    assert list(exp) == list(comp)


def test_series_matches_stationary_exact(kernel):
    r = invariant_measure_series(kernel, 2, 1e-8)
    assert r.measure.exact and isinstance(r.radius, F)
    assert r.radius < F(1, 10**8)
    assert r.radius == 2 * r.tail
    assert r.tail == mrca_time_pmf(2, r.depth)[1]
    assert tv_distance(r.measure, exact_stationary(kernel, 2)) <= r.radius + F(1, 10**12)


@pytest.mark.parametrize(
    "rows",
    [
        [[0.9, 0.1], [0.2, 0.8]],
        [[0.5, 0.25, 0.25], [0.1, 0.6, 0.3], [0.2, 0.2, 0.6]],
    ],
)
def test_series_matches_stationary_float(rows):
    m = MutationKernel(np.array(rows)).with_stationary()
    n = 3 if len(rows) == 2 else 2
    r = invariant_measure_series(m, n, 1e-6)
    d = tv_distance(r.measure, exact_stationary(m, n))
    assert d <= r.radius + 1e-12
    assert r.radius < 1e-6


def test_series_is_symmetric(kernel):
    r = invariant_measure_series(kernel, 3, 1e-3)
    for perm in itertools.permutations(range(3)):
        assert r.measure.permute(perm) == r.measure
    # the unsymmetrised excursion sum is already exchangeable
    w = excursion_sum(kernel, 3, 2)
    shaped = w.reshape(2, 2, 2)
    for perm in itertools.permutations(range(3)):
        assert list(np.transpose(shaped, perm).reshape(-1)) == list(w)


def test_series_rank_one_kernel():
    # depth 0 puts both individuals on one root; every deeper tree has two
    # independent lineages, so the full series is (mu x mu) D, not mu x mu
    mu = [F(1, 5), F(3, 10), F(1, 2)]
    m = MutationKernel([mu] * 3).with_stationary()
    target = apply_selection_average(product_measure(mu, 2))
    assert exact_stationary(m, 2) == target
    assert exact_stationary(m, 2) != product_measure(mu, 2)
    r = invariant_measure_series(m, 2, 1e-4)
    assert tv_distance(r.measure, target) <= r.radius
    diag = np.array([mu[i] if i == j else 0 for i in range(3) for j in range(3)], dtype=object)
    prod = product_measure(mu, 2).weights
    partial = tree_sum(m, 2, r.depth)
    assert list(partial) == list(diag * F(1, 2) + prod * (F(1, 2) - r.tail))


def test_series_errors(kernel, monkeypatch):
    with pytest.raises(ValueError):
        invariant_measure_series(MutationKernel(ROWS), 2, 1e-6)
    with pytest.raises(ValueError):
        invariant_measure_series(kernel, 2, 0.0)
    monkeypatch.setattr(tm, "MAX_PROFILES", 10)
    with pytest.raises(ValueError):
        invariant_measure_series(kernel, 3, 1e-8)
