import numpy as np
import pytest
import sympy as sp
from hypothesis import given, settings, strategies as st

from spectra_rh.cluster import (Seed, cluster_automorphism_kappa, fg_flip_law, flip_law_seed,
                                identity_map, is_identity_exact, monomial_map_iota, mutation_map,
                                poisson_defect, random_torus_points, symbols)
from spectra_rh.errors import PoleOfMap

A2 = Seed(np.array([[0, 1], [-1, 0]]))


def random_skew(rng, n, bound=2):
    A = np.triu(rng.integers(-bound, bound + 1, size=(n, n)), 1)
    return A - A.T


def test_iota_inverts_the_mutated_coordinate():
    m = monomial_map_iota(A2, 0)
    X = np.array([2.0, 3.0])
    assert np.allclose(m(X), [0.5, 6.0])
    xs = symbols(2)
    assert m.exact == (1 / xs[0], xs[0] * xs[1])


def test_iota_identity_off_k_when_pairings_nonpositive():
    seed = Seed(np.array([[0, -1], [1, 0]]))
    X = np.array([2.0, 3.0])
    assert np.allclose(monomial_map_iota(seed, 0)(X)[1], 3.0)


def test_iota_is_monomial():
    rng = np.random.default_rng(3)
    seed = Seed(random_skew(rng, 3))
    m = monomial_map_iota(seed, 1)
    X, Y = random_torus_points(3, 2, rng)
    assert np.allclose(m(X * Y), m(X) * m(Y))


def test_kappa_examples():
    k = cluster_automorphism_kappa(A2, 1)
    assert np.allclose(k(np.array([2.0, 3.0])), [8.0, 3.0])
    assert np.allclose(k(np.array([5.0, 1.0])), [10.0, 1.0])
    zero = Seed(np.zeros((2, 2), dtype=int))
    assert np.allclose(cluster_automorphism_kappa(zero, 1)(np.array([2.0, 3.0])), [2.0, 3.0])


def test_kappa_pole():
    with pytest.raises(PoleOfMap):
        cluster_automorphism_kappa(A2, 1)(np.array([2.0, -1.0]))


def test_pentagon_periodicity_exact():
    m, seed = identity_map(2), A2
    for i in range(10):
        seed, step = mutation_map(seed, i % 2)
        m = m.then(step)
    assert is_identity_exact(m)
    assert (seed.skew == A2.skew).all()


def test_rank_one_mutation_inverts():
    _, m = mutation_map(Seed(np.zeros((1, 1), dtype=int)), 0)
    assert m.exact[0] == 1 / symbols(1)[0]


@pytest.mark.parametrize("n", [1, 2, 3])
def test_mutation_square_exact(n):
    rng = np.random.default_rng(n)
    for _ in range(3):
        seed = Seed(random_skew(rng, n))
        for k in range(n):
            s1, m1 = mutation_map(seed, k)
            _, m2 = mutation_map(s1, k)
            assert is_identity_exact(m1.then(m2))


@pytest.mark.parametrize("n", [4, 6, 8])
def test_mutation_square_numeric(n):
    rng = np.random.default_rng(10 + n)
    seed = Seed(random_skew(rng, n, 1))
    for k in range(n):
        s1, m1 = mutation_map(seed, k)
        _, m2 = mutation_map(s1, k)
        for X in random_torus_points(n, 100, rng):
            assert np.allclose(m2(m1(X)), X, rtol=1e-10)


def test_flip_law_example():
    f = fg_flip_law(np.array([[0, 1], [-1, 0]]), 0)
    assert np.allclose(f(np.array([2.0, 3.0])), [0.5, 9.0])


def test_flip_law_zero_column_is_identity():
    f = fg_flip_law(np.zeros((2, 2), dtype=int), 0)
    assert np.allclose(f(np.array([2.0, 3.0]))[1], 3.0)


@pytest.mark.parametrize("n", [2, 3])
def test_flip_law_matches_mutation(n):
    rng = np.random.default_rng(20 + n)
    for _ in range(4):
        eps = random_skew(rng, n)
        for k in range(n):
            f = fg_flip_law(eps, k)
            _, m = mutation_map(flip_law_seed(eps), k)
            pts = random_torus_points(n, 100, rng)
            for X in pts:
                assert np.allclose(f(X), m(X), rtol=1e-11)
            assert all(sp.simplify(a - b) == 0 for a, b in zip(f.exact, m.exact))


def test_evaluator_matches_exact_form():
    rng = np.random.default_rng(5)
    seed = Seed(random_skew(rng, 3))
    _, m = mutation_map(seed, 2)
    xs = symbols(3)
    X = random_torus_points(3, 1, rng)[0]
    ex = [complex(sp.N(e.subs(dict(zip(xs, X))))) for e in m.exact]
    assert np.allclose(m(X), ex, rtol=1e-12)


@settings(max_examples=30, deadline=None)
@given(st.integers(2, 5), st.integers(0, 10 ** 6))
def test_mutation_is_poisson(n, s):
    rng = np.random.default_rng(s)
    seed = Seed(random_skew(rng, n))
    k = int(rng.integers(n))
    new, m = mutation_map(seed, k)
    X = random_torus_points(n, 1, rng)[0]
    assert poisson_defect(m, seed.skew, new.skew, X) < 1e-8
