import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components

from bigraph import oracle, params, theory
from bigraph.errors import Divergent, TooLarge, ValidationError

prob = st.floats(0.0, 1.0)


def brute_force(n, P, root=0):
    """Distributions of L1 and of the root's component size via scipy on every subset."""
    types = np.repeat([0, 1], n)
    nt = len(types)
    pairs = list(itertools.combinations(range(nt), 2))
    L1, rootc = {}, {}
    for mask in itertools.product((0, 1), repeat=len(pairs)):
        w = 1.0
        rows, cols = [], []
        for on, (u, v) in zip(mask, pairs):
            p = P[types[u]][types[v]]
            w *= p if on else 1 - p
            if on:
                rows.append(u)
                cols.append(v)
        A = coo_matrix((np.ones(len(rows)), (rows, cols)), shape=(nt, nt))
        _, lab = connected_components(A, directed=False)
        sizes = np.bincount(lab)
        L1[sizes.max()] = L1.get(sizes.max(), 0.0) + w
        rootc[sizes[lab[root]]] = rootc.get(sizes[lab[root]], 0.0) + w
    return L1, rootc


def test_single_pair():
    d = oracle.enumerate_exact((2,), [[0.3]], "L1")
    assert dict(d.support) == pytest.approx({1: 0.7, 2: 0.3}, abs=1e-15)


def test_complete_graph_point_mass():
    d = oracle.enumerate_exact((3, 2), np.ones((2, 2)), "L1")
    assert [v for v, _ in d.support] == [5]
    assert d.prob(5) == pytest.approx(1.0, abs=1e-12)
    assert d.variance == pytest.approx(0.0, abs=1e-12)


@settings(max_examples=25)
@given(prob, prob, prob, st.sampled_from([(2, 2), (3, 1), (1, 3)]))
def test_matches_brute_force(a, b, c, n):
    P = [[a, b], [b, c]]
    L1, rootc = brute_force(n, P, root=1)
    for stat, want in (("L1", L1), ("root_component", rootc)):
        got = dict(oracle.enumerate_exact(n, P, stat, root=1).support)
        keys = set(got) | {k for k, v in want.items() if v > 0}
        for k in keys:
            assert abs(got.get(k, 0.0) - want.get(k, 0.0)) <= 1e-12


@given(prob, prob, prob, st.sampled_from(["L1", "L2", "comp_count", "root_component"]))
def test_distribution_is_normalised(a, b, c, stat):
    d = oracle.enumerate_exact((3, 2), [[a, b], [b, c]], stat)
    assert abs(d.total() - 1.0) <= 1e-12
    assert all(p >= 0 for _, p in d.support)


@given(prob, prob, prob)
def test_type_swap_symmetry(a, b, c):
    d = oracle.enumerate_exact((3, 2), [[a, b], [b, c]], "L1")
    s = oracle.enumerate_exact((2, 3), [[c, b], [b, a]], "L1")
    assert [v for v, _ in d.support] == [v for v, _ in s.support]
    for (_, p), (_, q) in zip(d.support, s.support):
        assert abs(p - q) <= 1e-12


def test_sL_extremes():
    P = [[0.2, 0.5], [0.5, 0.4]]
    full = oracle.enumerate_exact((3, 2), P, "sL", L=(1, 1))
    empty = oracle.enumerate_exact((3, 2), P, "sL", L=(math.inf, math.inf))
    assert [v for v, _ in full.support] == [5] and [v for v, _ in empty.support] == [0]
    assert full.prob(5) == pytest.approx(1.0, abs=1e-12)


def test_rejections():
    with pytest.raises(TooLarge):
        oracle.enumerate_exact((4, 4), np.full((2, 2), 0.5))
    with pytest.raises(ValidationError):
        oracle.enumerate_exact((3, 2), np.full((2, 2), 0.5), "sL")
    with pytest.raises(ValidationError):
        oracle.enumerate_exact((3, 2), np.full((2, 2), 0.5), "diameter")


def test_extinction_trivial_cases():
    assert oracle.extinction_truncated((5, 5), np.zeros((2, 2)), 0, 1) == 1.0
    assert oracle.extinction_truncated((5, 5), np.full((2, 2), 0.3), 1, 0) == 0.0


def test_extinction_monotone_in_generations():
    n, P = (50, 30), params.ratio_instance((50, 30), 1.4, 0.5)
    vals = [oracle.extinction_truncated(n, P, 0, g) for g in (0, 1, 2, 5, 10, 50, 200, 1000)]
    assert all(b >= a for a, b in zip(vals, vals[1:]))


def test_extinction_subcritical_is_one():
    n = (1000, 1000)
    P = params.ratio_instance(n, 0.8, 0.5)
    assert theory.solve_survival(params.validate(P, n), n).rho == (0.0, 0.0)
    assert abs(oracle.extinction_truncated(n, P, 0, 10_000) - 1.0) <= 1e-10


def test_extinction_supercritical_matches_solver():
    n = (10**5, 10**5)
    P = params.ratio_instance(n, 1.2, 0.5)
    rho = theory.solve_survival(params.validate(P, n), n).rho
    for root in (0, 1):
        assert abs(oracle.extinction_truncated(n, P, root, 10_000) - (1 - rho[root])) <= 1e-8


def test_progeny_series_examples():
    assert np.array_equal(oracle.progeny_series(np.zeros((2, 2)), 50), np.eye(2))
    S = oracle.progeny_series([[0.5, 0.0], [0.0, 0.5]], 10_000)
    assert np.allclose(S, 2 * np.eye(2), rtol=0, atol=1e-15)


def test_progeny_series_matches_closed_form():
    gen = np.random.default_rng(21)
    for _ in range(20):
        H = gen.uniform(0, 1, size=(2, 2))
        H *= gen.uniform(0.05, 0.95) / theory.perron_frobenius(H)
        d = 1 - H[0, 0] - H[1, 1] + H[0, 0] * H[1, 1] - H[0, 1] * H[1, 0]
        e = theory.expected_dual_sizes(theory.DualSpec(pi=H, h=H, d=d)).e
        assert np.max(np.abs(oracle.progeny_series(H, 10**5) - e)) <= 1e-10


@given(st.lists(st.floats(0.0, 0.45), min_size=4, max_size=4), st.integers(0, 200))
def test_progeny_series_nondecreasing_in_T(entries, T):
    H = np.array(entries).reshape(2, 2)
    assert np.all(oracle.progeny_series(H, T + 1) >= oracle.progeny_series(H, T))


def test_progeny_series_divergent():
    with pytest.raises(Divergent):
        oracle.progeny_series([[0.6, 0.5], [0.5, 0.6]], 10**5)
