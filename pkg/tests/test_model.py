import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from bregpep.model import (
    STAR,
    DiscretePoint,
    DiscreteRepresentation,
    IndexSet,
    PepMatrices,
    ProblemParams,
    bregman_distance,
    gram_from_representation,
    numerical_rank,
    representation_from_gram,
)


def random_rep(N, dim, rng):
    pts = [DiscretePoint(rng.standard_normal(dim), rng.standard_normal(), rng.standard_normal(dim),
                         rng.standard_normal(), rng.standard_normal(dim)) for _ in range(N + 2)]
    return DiscreteRepresentation(ProblemParams(1.0, 1.0, N), tuple(pts))


# ProblemParams / IndexSet

@pytest.mark.parametrize("kw", [dict(L=0, lam=1, N=1), dict(L=1, lam=-1, N=1),
                                dict(L=1, lam=1, N=0), dict(L=1, lam=1, N=1.5)])
def test_params_invalid(kw):
    with pytest.raises(ValueError):
        ProblemParams(**kw)


def test_index_set_star_last():
    I = IndexSet(3)
    assert I.labels == [0, 1, 2, 3, STAR]
    assert I.position(STAR) == 4 and len(I) == 5
    assert I.row(2, 1) == 2 * 5 + 1
    assert len(I.pairs()) == 5 * 4


# bregman_distance

def test_bregman_euclidean():
    assert bregman_distance(4.5, 0.5, [1.0], [3.0], [1.0]) == pytest.approx(2.0, abs=1e-15)


def test_bregman_same_point_zero():
    assert bregman_distance(0.7, 0.7, [5.0, -2.0], [1.0, 2.0], [1.0, 2.0]) == 0.0


def test_bregman_burg():
    val = bregman_distance(-math.log(2), 0.0, [-1.0], [2.0], [1.0])
    assert val == pytest.approx(1 - math.log(2), abs=1e-12)
    assert val == pytest.approx(0.30685, abs=1e-5)


def test_bregman_dimension_mismatch():
    with pytest.raises(ValueError):
        bregman_distance(0, 0, [1.0, 1.0], [1.0], [0.0])


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 2 ** 31), st.integers(1, 4))
def test_bregman_invariant_to_linear_terms(seed, dim):
    rng = np.random.default_rng(seed)
    A = rng.standard_normal((dim, dim))
    A = A @ A.T
    a, c0 = rng.standard_normal(dim), rng.standard_normal()
    x, y = rng.standard_normal(dim), rng.standard_normal(dim)
    h = lambda u: 0.5 * u @ A @ u  # noqa: E731
    d0 = bregman_distance(h(x), h(y), A @ y, x, y)
    d1 = bregman_distance(h(x) + a @ x + c0, h(y) + a @ y + c0, A @ y + a, x, y)
    assert d1 == pytest.approx(d0, abs=1e-10 * (1 + abs(d0)))
    assert d0 >= -1e-12


@settings(max_examples=50, deadline=None)
@given(st.floats(0.05, 20), st.floats(0.05, 20))
def test_bregman_burg_nonnegative(x, y):
    assert bregman_distance(-math.log(x), -math.log(y), [-1 / y], [x], [y]) >= -1e-12


# Gram matrices

def test_gram_single_point():
    p = DiscretePoint([1, 0], 0.0, [0, 1], 0.0, [1, 1])
    rep = DiscreteRepresentation(ProblemParams(1, 1, 1), (p, p, p))
    G = gram_from_representation(rep).G
    n = 3
    sub = G[np.ix_([0, n, 2 * n], [0, n, 2 * n])]
    np.testing.assert_array_equal(sub, [[1, 0, 1], [0, 1, 1], [1, 1, 2]])


def test_gram_zero_vectors():
    z = DiscretePoint([0, 0], 0.0, [0, 0], 0.0, [0, 0])
    rep = DiscreteRepresentation(ProblemParams(1, 1, 1), (z, z, z))
    assert np.all(gram_from_representation(rep).G == 0)


def test_gram_duplicate_points_low_rank():
    rng = np.random.default_rng(3)
    p = DiscretePoint(*[rng.standard_normal(5), 1.0, rng.standard_normal(5), 2.0,
                        rng.standard_normal(5)])
    rep = DiscreteRepresentation(ProblemParams(1, 1, 1), (p, p, p))
    w = np.linalg.eigvalsh(gram_from_representation(rep).G)
    assert np.sum(w > 1e-10) <= 3


def test_gram_layout_blocks():
    rng = np.random.default_rng(0)
    rep = random_rep(2, 4, rng)
    M = gram_from_representation(rep)
    assert M.block(1, 2)[1, 3] == pytest.approx(rep[1].g @ rep[STAR].s)
    assert M.block(0, 0)[0, 2] == pytest.approx(rep[0].x @ rep[2].x)
    np.testing.assert_array_equal(M.F, rep.stacked("f"))


def test_identity_round_trip():
    M = PepMatrices(np.eye(9), np.zeros(3), np.zeros(3))
    rep = representation_from_gram(M)
    assert rep.dim == 9
    G2 = gram_from_representation(rep).G
    assert np.abs(G2 - np.eye(9)).max() < 1e-10


@pytest.mark.parametrize("seed", range(5))
def test_random_round_trip(seed):
    rng = np.random.default_rng(seed)
    rep = random_rep(3, 4, rng)
    M = gram_from_representation(rep)
    M2 = gram_from_representation(representation_from_gram(M))
    assert np.abs(M2.G - M.G).max() <= 1e-8 * (1 + np.abs(M.G).max())
    np.testing.assert_array_equal(M2.F, M.F)
    np.testing.assert_array_equal(M2.H, M.H)


def test_rank_one_round_trip():
    rng = np.random.default_rng(1)
    v = rng.standard_normal(9)
    M = PepMatrices(np.outer(v, v), np.zeros(3), np.zeros(3))
    rep = representation_from_gram(M)
    assert rep.dim == 1
    P = np.concatenate([rep.stacked("x"), rep.stacked("g"), rep.stacked("s")]).ravel()
    np.testing.assert_allclose(np.outer(P, P), np.outer(v, v), atol=1e-12)
    assert numerical_rank(M.G) == 1


def test_not_psd_rejected():
    G = np.eye(9)
    G[0, 0] = -1.0
    with pytest.raises(ValueError, match="not PSD"):
        representation_from_gram(PepMatrices(G, np.zeros(3), np.zeros(3)))


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2 ** 31), st.integers(1, 4), st.integers(1, 12))
def test_round_trip_property(seed, N, r):
    rng = np.random.default_rng(seed)
    n = 3 * (N + 2)
    B = rng.standard_normal((r, n))
    G = B.T @ B
    M = PepMatrices(G, rng.standard_normal(N + 2), rng.standard_normal(N + 2))
    M2 = gram_from_representation(representation_from_gram(M, rank_tol=1e-12))
    assert np.abs(M2.G - M.G).max() <= 1e-8 * (1 + np.abs(G).max())


# invariants and serialization

def test_rep_rejects_nonfinite():
    p = DiscretePoint([0.0], 0.0, [0.0], 0.0, [0.0])
    bad = DiscretePoint([np.nan], 0.0, [0.0], 0.0, [0.0])
    with pytest.raises(ValueError):
        DiscreteRepresentation(ProblemParams(1, 1, 1), (p, bad, DiscretePoint([1.0], 0, [0], 0, [0])))


def test_rep_rejects_coincident_points_with_different_values():
    a = DiscretePoint([0.0], 0.0, [0.0], 0.0, [0.0])
    b = DiscretePoint([0.0], 1.0, [0.0], 0.0, [0.0])
    c = DiscretePoint([1.0], 0.0, [0.0], 0.0, [0.0])
    with pytest.raises(ValueError, match="coincide"):
        DiscreteRepresentation(ProblemParams(1, 1, 1), (a, b, c))


def test_rep_rejects_dimension_mix():
    a = DiscretePoint([0.0], 0.0, [0.0], 0.0, [0.0])
    b = DiscretePoint([0.0, 1.0], 0.0, [0.0, 0.0], 0.0, [0.0, 0.0])
    with pytest.raises(ValueError):
        DiscreteRepresentation(ProblemParams(1, 1, 1), (a, b, a))
    with pytest.raises(ValueError):
        DiscretePoint([0.0, 1.0], 0.0, [0.0], 0.0, [0.0, 0.0])


def test_asymmetric_gram_rejected():
    G = np.zeros((9, 9))
    G[0, 1] = 1.0
    with pytest.raises(ValueError):
        PepMatrices(G, np.zeros(3), np.zeros(3))


def test_json_round_trip():
    rng = np.random.default_rng(7)
    rep = random_rep(2, 3, rng)
    back = DiscreteRepresentation.from_dict(rep.to_dict())
    for a, b in zip(rep.points, back.points):
        np.testing.assert_array_equal(a.x, b.x)
        assert a.f == b.f and a.h == b.h
    assert rep.to_dict()["points"][-1]["index"] == "star"
    M = gram_from_representation(rep)
    M2 = PepMatrices.from_dict(M.to_dict())
    np.testing.assert_array_equal(M.G, M2.G)
    assert M2.params == rep.params
