import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from acsais.errors import ConvergenceError, PreconditionError, ZeroDenominatorError
from acsais.netcore import MultilayerNetwork
from acsais.spectral import (
    classify_scenario,
    dominant_eigenpair,
    psi,
    spectral_radius,
    spectral_triple,
    threshold_perturbation,
)

from conftest import random_layer


def strong_layer(n, p, rng):
    """Random layer with a Hamiltonian cycle underneath, hence irreducible."""
    W = random_layer(n, p, rng)
    order = rng.permutation(n)
    W[order, np.roll(order, -1)] = rng.uniform(0.5, 1.5, n)
    np.fill_diagonal(W, 0)
    return W


def lapack_perron(W):
    vals, vecs = np.linalg.eig(W)
    k = np.argmax(vals.real)
    v = np.abs(vecs[:, k].real)
    lvals, lvecs = np.linalg.eig(W.T)
    u = np.abs(lvecs[:, np.argmax(lvals.real)].real)
    v /= np.linalg.norm(v)
    return vals[k].real, v, u / (u @ v)


def test_swap_matrix():
    pair = dominant_eigenpair(np.array([[0.0, 1.0], [1.0, 0.0]]))
    assert pair.value == pytest.approx(1.0, rel=1e-12)
    assert np.allclose(pair.vector, [1 / math.sqrt(2)] * 2, atol=1e-12)


def test_scaled_swap_matrix():
    assert spectral_radius(np.array([[0.0, 2.0], [2.0, 0.0]])) == pytest.approx(2.0, rel=1e-12)


def test_periodic_cycle_converges():
    n = 6
    W = np.roll(np.eye(n), 1, axis=1)
    t = spectral_triple(W)
    assert t.lambda1 == pytest.approx(1.0, rel=1e-10)
    assert np.allclose(t.v, 1 / math.sqrt(n))


def test_reducible_matrix_rejected():
    with pytest.raises(PreconditionError):
        dominant_eigenpair(np.array([[0.0, 1.0], [0.0, 0.0]]))


def test_non_convergence_carries_residual(rng):
    W = strong_layer(10, 0.3, rng)
    with pytest.raises(ConvergenceError) as info:
        dominant_eigenpair(W, max_iter=2)
    assert info.value.iterations == 2 and info.value.residual > 0
    assert info.value.last_iterate.shape == (10,)


@settings(max_examples=60, deadline=None)
@given(st.integers(2, 25), st.floats(0.05, 0.5), st.integers(0, 2**31))
def test_triple_matches_lapack(n, p, seed):
    W = strong_layer(n, p, np.random.default_rng(seed))
    t = spectral_triple(W)
    lam, v, u = lapack_perron(W)
    assert t.lambda1 == pytest.approx(lam, rel=1e-9)
    assert np.allclose(t.v, v, atol=1e-8)
    assert np.allclose(t.u, u, rtol=1e-7, atol=1e-8)
    assert np.all(t.v > 0) and np.all(t.u > 0)
    assert t.u @ t.v == pytest.approx(1.0, abs=1e-12)
    assert np.linalg.norm(W @ t.v - t.lambda1 * t.v) <= 1e-10 * t.lambda1 * 1.0001
    assert np.linalg.norm(t.u @ W - t.lambda1 * t.u) <= 1e-9 * t.lambda1 * np.linalg.norm(t.u)


def test_psi_identities(rng):
    A, B = strong_layer(12, 0.3, rng), strong_layer(12, 0.3, rng)
    assert psi(A, A) == pytest.approx(1.0, rel=1e-12)
    assert psi(A, 3.0 * A) == pytest.approx(1.0 / 3.0, rel=1e-12)
    assert psi(2.5 * A, B) == pytest.approx(2.5 * psi(A, B), rel=1e-9)


def test_psi_matches_direct_formula(rng):
    A, B = strong_layer(9, 0.4, rng), strong_layer(9, 0.4, rng)
    _, v, u = lapack_perron(A)
    expected = sum(u[i] * v[i] * (A[i] @ v) / (B[i] @ v) for i in range(9))
    assert psi(A, B) == pytest.approx(expected, rel=1e-8)


def test_psi_zero_denominator_names_node():
    A = np.array([[0, 1, 0], [0, 0, 1], [1, 0, 0]], dtype=float)
    B = np.array([[0, 1, 0], [0, 0, 0], [1, 0, 0]], dtype=float)
    with pytest.raises(ZeroDenominatorError) as info:
        psi(A, B)
    assert info.value.node == 1


@settings(max_examples=200, deadline=None)
@given(st.integers(2, 15), st.integers(0, 2**31))
def test_symmetric_psi_lower_bound(n, seed):
    rng = np.random.default_rng(seed)
    A, B = strong_layer(n, 0.4, rng), strong_layer(n, 0.4, rng)
    A, B = A + A.T, B + B.T
    la, lb = spectral_radius(A), spectral_radius(B)
    if la <= lb:
        A, B, la, lb = B, A, lb, la
    if la == lb:
        return
    assert psi(A, B) >= la / lb * (1 - 1e-10)


def test_perturbation_identical_layers(rng):
    W = strong_layer(8, 0.3, rng)
    net = MultilayerNetwork.from_matrices(W, W)
    p = threshold_perturbation(net)
    assert p.slope == pytest.approx(0.0, abs=1e-12)
    assert p.intercept == pytest.approx(1 / spectral_radius(W), rel=1e-12)


def test_perturbation_half_layer(rng):
    W = strong_layer(8, 0.3, rng)
    lam = spectral_radius(W)
    net = MultilayerNetwork.from_matrices(W, 0.5 * W)
    small = threshold_perturbation(net, "small_kappa")
    large = threshold_perturbation(net, "large_kappa")
    assert small.intercept == pytest.approx(1 / lam, rel=1e-10)
    assert small.slope == pytest.approx(1 / lam, rel=1e-9)
    assert large.intercept == pytest.approx(2 / lam, rel=1e-10)
    # closed form (k + a) / ((k + 1) a lam) with a = 1/2 expands to 2/lam - (1/lam) / k
    assert large.slope == pytest.approx(-1 / lam, rel=1e-9)


def test_social_distancing_is_monotone(rng):
    W = strong_layer(15, 0.3, rng)
    A = W * rng.uniform(0.3, 1.0, W.shape)
    rep = classify_scenario(MultilayerNetwork.from_matrices(W, A))
    assert rep.kind == "monotone"
    assert rep.psi_sa > 1 and rep.psi_as < 1
    assert rep.radius_constraint_holds


def test_ties_are_mixed_and_flagged(rng):
    W = strong_layer(6, 0.4, rng)
    rep = classify_scenario(MultilayerNetwork.from_matrices(W, W))
    assert rep.kind == "mixed" and rep.degenerate
    assert "inconclusive" in rep.note


def test_classification_needs_strong_layers():
    W = np.array([[0.0, 1.0], [1.0, 0.0]])
    with pytest.raises(PreconditionError):
        classify_scenario(MultilayerNetwork.from_matrices(W, np.array([[0.0, 1.0], [0.0, 0.0]])))
