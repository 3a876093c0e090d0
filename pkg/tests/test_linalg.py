import math

import numpy as np
import pytest
from hypothesis import example, given, settings, strategies as st

from moddev import linalg

from .helpers import random_hurwitz


def test_mat_exp_identity_at_zero():
    A = np.array([[1.0, 2.0], [3.0, -4.0]])
    np.testing.assert_array_equal(linalg.mat_exp(A, 0.0), np.eye(2))


def test_mat_exp_scalar_against_series():
    series = sum((-1.0) ** k / math.factorial(k) for k in range(30))
    assert abs(linalg.mat_exp([[-1.0]], 1.0)[0, 0] - series) <= 1e-15


def test_mat_exp_nilpotent():
    np.testing.assert_allclose(linalg.mat_exp([[0.0, 1.0], [0.0, 0.0]], 2.0), [[1, 2], [0, 1]],
                               atol=1e-15)


def test_mat_exp_rejects_non_square():
    with pytest.raises(ValueError):
        linalg.mat_exp(np.ones((2, 3)))


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 10_000), st.floats(0.0, 1.0), st.floats(0.0, 1.0))
def test_mat_exp_semigroup(seed, s, t):
    rng = np.random.default_rng(seed)
    A = rng.normal(size=(3, 3))
    A *= 5.0 / max(1.0, np.linalg.norm(A, 2))
    lhs = linalg.mat_exp(A, s) @ linalg.mat_exp(A, t)
    rhs = linalg.mat_exp(A, s + t)
    assert np.max(np.abs(lhs - rhs)) <= 1e-9 * max(1.0, np.max(np.abs(rhs)))


def test_solve_lyapunov_examples():
    assert abs(linalg.solve_lyapunov([[-1.0]], [[1.0]])[0, 0] - 0.5) <= 1e-12
    P = linalg.solve_lyapunov([[0.0, 1.0], [-1.0, -1.0]], np.diag([0.0, 1.0]))
    np.testing.assert_allclose(P, np.diag([0.5, 0.5]), atol=1e-12)
    assert linalg.solve_lyapunov([[-1.0]], [[0.0]])[0, 0] == 0.0


def test_solve_lyapunov_errors():
    with pytest.raises(linalg.NotHurwitzError):
        linalg.solve_lyapunov([[0.0, 1.0], [-1.0, 0.0]], np.eye(2))
    with pytest.raises(ValueError):
        linalg.solve_lyapunov(-np.eye(2), np.eye(3))
    with pytest.raises(ValueError):
        linalg.solve_lyapunov(-np.eye(2), [[1.0, 1.0], [0.0, 1.0]])


@settings(max_examples=60, deadline=None)
@given(st.integers(1, 6), st.integers(0, 10_000))
def test_lyapunov_residual_random(d, seed):
    rng = np.random.default_rng(seed)
    A = random_hurwitz(rng, d)
    Bm = rng.normal(size=(d, d))
    C = Bm @ Bm.T
    P = linalg.solve_lyapunov(A, C)
    assert linalg.is_symmetric(P)
    assert linalg.lyapunov_residual(A, P, C) <= 1e-10 * np.linalg.norm(C)


def test_lyapunov_transposed_form():
    A = np.array([[0.0, 1.0], [-2.0, -0.5]])
    G = np.array([[2.0, 0.3], [0.3, 1.0]])
    Y = linalg.solve_lyapunov(A, G, transpose=True)
    assert np.linalg.norm(A.T @ Y + Y @ A + G) <= 1e-10


def test_covariance_horizon_examples():
    A, B = [[-1.0]], [[1.0]]
    assert abs(linalg.covariance_horizon(A, B, 40.0)[0, 0] - 0.5) <= 1e-10
    assert abs(linalg.covariance_horizon(A, B, 1.0)[0, 0] - (1 - math.exp(-2)) / 2) <= 1e-10
    np.testing.assert_array_equal(linalg.covariance_horizon(-np.eye(2), np.eye(2), 0.0),
                                  np.zeros((2, 2)))
    with pytest.raises(ValueError):
        linalg.covariance_horizon(A, B, -1.0)


def test_covariance_horizon_matches_integral_oracle():
    # P_t = int_0^t e^{sA} B B^T e^{sA^T} ds by Gauss-Legendre quadrature
    A = np.array([[0.0, 1.0], [-1.0, -1.0]])
    B = np.diag([0.0, 1.0])
    t = 3.0
    z, w = np.polynomial.legendre.leggauss(60)
    s = 0.5 * t * (z + 1)
    oracle = sum(0.5 * t * wi * linalg.mat_exp(A, si) @ B @ B.T @ linalg.mat_exp(A, si).T
                 for si, wi in zip(s, w))
    np.testing.assert_allclose(linalg.covariance_horizon(A, B, t), oracle, atol=1e-10)


@settings(max_examples=15, deadline=None)
@given(st.integers(1, 4), st.integers(0, 10_000))
def test_covariance_horizon_monotone_and_limit(d, seed):
    rng = np.random.default_rng(seed)
    A = random_hurwitz(rng, d, margin=0.5)
    B = rng.normal(size=(d, d))
    prev = np.zeros((d, d))
    for t in (0.5, 1.0, 2.0, 4.0):
        Pt = linalg.covariance_horizon(A, B, t)
        assert np.linalg.eigvalsh(Pt - prev).min() >= -1e-10
        prev = Pt
    P = linalg.solve_lyapunov(A, B @ B.T)
    rate = -linalg.spectral_abscissa(A)
    T = 40.0 / rate
    assert np.max(np.abs(linalg.covariance_horizon(A, B, T) - P)) <= 1e-8 * max(1, np.abs(P).max())


def test_pseudo_inverse_examples():
    pi = linalg.pseudo_inverse(np.diag([2.0, 0.0]))
    np.testing.assert_allclose(pi.pinv, np.diag([0.5, 0.0]), atol=1e-15)
    assert pi.rank == 1
    z = linalg.pseudo_inverse(np.zeros((3, 3)))
    assert z.rank == 0 and not z.pinv.any()
    Q = np.array([[2.0, 0.5], [0.5, 1.0]])
    np.testing.assert_allclose(linalg.pseudo_inverse(Q).pinv, np.linalg.solve(Q, np.eye(2)),
                               atol=1e-8)
    with pytest.raises(ValueError):
        linalg.pseudo_inverse([[1.0, 0.5], [0.0, 1.0]])
    with pytest.raises(ValueError):
        linalg.pseudo_inverse(np.eye(2), tol=0.0)


@settings(max_examples=60, deadline=None)
@given(st.integers(1, 5), st.integers(0, 5), st.integers(0, 10_000))
@example(5, 5, 8500)  # condition number about 2.6e8
def test_moore_penrose_identities(d, rank, seed):
    rank = min(rank, d)
    rng = np.random.default_rng(seed)
    F = rng.normal(size=(d, rank))
    Q = F @ F.T
    pi = linalg.pseudo_inverse(Q)
    Qp = pi.pinv
    scale = max(1.0, np.abs(Q).max())
    # evaluating the identities in floating point costs about eps * cond; 1e-8 holds up to cond 1e6
    w = np.abs(np.linalg.eigvalsh(Q))[-rank:] if rank else np.ones(1)
    tol = 1e-8 * max(1.0, float(w.max() / w.min()) / 1e6)
    assert np.max(np.abs(Q @ Qp @ Q - Q)) <= tol * scale
    assert np.max(np.abs(Qp @ Q @ Qp - Qp)) <= tol * max(1.0, np.abs(Qp).max())
    assert np.max(np.abs((Q @ Qp).T - Q @ Qp)) <= tol
    assert np.max(np.abs((Qp @ Q).T - Qp @ Q)) <= tol
    np.testing.assert_allclose(pi.projector @ pi.projector, pi.projector, atol=1e-8)
    assert pi.rank == np.linalg.matrix_rank(Q)


def test_controllability_examples():
    D, ok = linalg.controllability_gramian([[-1.0]], [[1.0]])
    assert ok and D[0, 0] == 1.0
    _, ok = linalg.controllability_gramian(np.random.default_rng(0).normal(size=(3, 3)),
                                           np.zeros((3, 2)))
    assert not ok
    A = np.array([[0.0, 1.0], [-1.0, -1.0]])
    B = np.diag([0.0, 1.0])
    partial = B @ B.T + A.T @ B @ B.T @ A
    np.testing.assert_allclose(partial, [[1.0, 1.0], [1.0, 2.0]])
    D, ok = linalg.controllability_gramian(A, B)
    assert ok
    np.testing.assert_allclose(D, partial)
    with pytest.raises(ValueError):
        linalg.controllability_gramian(A, np.ones((3, 1)))


def test_spectral_abscissa_examples():
    assert linalg.spectral_abscissa([[-1.0]]) == -1.0
    assert abs(linalg.spectral_abscissa([[0.0, 1.0], [-1.0, -1.0]]) + 0.5) <= 1e-14
    assert abs(linalg.spectral_abscissa([[0.0, 1.0], [-1.0, 0.0]])) <= 1e-14
    assert not linalg.is_hurwitz([[0.0, 1.0], [-1.0, 0.0]])


def test_psd_factor_handles_rank_deficiency():
    P = np.array([[1.0, 1.0], [1.0, 1.0]])
    L = linalg.psd_factor(P)
    np.testing.assert_allclose(L @ L.T, P, atol=1e-14)
