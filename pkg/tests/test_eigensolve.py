import math

import mpmath
import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from bdspectra.eigensolve import (SolverError, dense_oracle, sturm_count, top_eigenpairs)
from bdspectra.model import RateModel, rates
from bdspectra.operator import TridiagonalOperator, build_operator, choose_truncation

LOGISTIC = RateModel.logistic(2, 1)
TWO = build_operator(LOGISTIC, 1, 2)  # eigenvalues -7 +- sqrt(21)


def _op(diag, off):
    return TridiagonalOperator(K=1, N=len(diag), diag=np.array(diag, float), offdiag=np.array(off, float))


def test_sturm_counts_two_state():
    assert sturm_count(TWO, 0.0) == 2
    assert sturm_count(TWO, -5.0) == 1
    assert sturm_count(TWO, -12.0) == 0


def test_two_state_quadratic_oracle():
    res = top_eigenpairs(TWO, 2)
    ref = [7 - math.sqrt(21), 7 + math.sqrt(21)]
    assert res.rhos == pytest.approx(ref, rel=1e-14)
    assert dense_oracle(TWO) == pytest.approx([-ref[1], -ref[0]], abs=1e-12)


def test_one_state():
    res = top_eigenpairs(build_operator(LOGISTIC, 1, 1), 1)
    assert res.rhos.tolist() == [4.0]
    assert res.vectors.tolist() == [[1.0]]


def test_dense_oracle_diagonal_fixture():
    op = _op([-3.0, -1.0, -7.0, -2.0], [0.0, 0.0, 0.0])
    assert dense_oracle(op).tolist() == [-7.0, -3.0, -2.0, -1.0]
    assert top_eigenpairs(op, 4).rhos == pytest.approx([1.0, 2.0, 3.0, 7.0], rel=1e-13)


def test_dense_oracle_refuses_large():
    with pytest.raises(ValueError):
        dense_oracle(build_operator(LOGISTIC, 100, 501))


def test_argument_checks():
    with pytest.raises(ValueError):
        top_eigenpairs(TWO, 3)
    with pytest.raises(ValueError):
        top_eigenpairs(TWO, 1, tol=1e-15)


def test_random_tridiagonal_against_oracle():
    rng = np.random.default_rng(5)
    # diagonally dominant, hence negative definite like every generator here
    op = _op(-rng.uniform(7, 10, 50), rng.uniform(0.1, 3, 49))
    res = top_eigenpairs(op, 10)
    ref = dense_oracle(op)[-10:][::-1]
    assert np.max(np.abs(-res.rhos - ref)) <= 1e-10 * op.scale


def _mp_rho0_logistic21(K, N, guess):
    """rho_0 of logistic(2,1) as a root of the continuant det(T + rho I), in 60 digits."""
    lam = [mpmath.mpf(2 * n) for n in range(1, N + 1)]
    mu = [mpmath.mpf(n) * (1 + mpmath.mpf(n) / K) for n in range(1, N + 1)]

    def det(rho):
        p_prev, p = mpmath.mpf(1), rho - (lam[0] + mu[0])
        for i in range(1, N):
            p_prev, p = p, (rho - (lam[i] + mu[i])) * p - lam[i - 1] * mu[i] * p_prev
        return p

    g = mpmath.mpf(guess)
    root = mpmath.findroot(det, (0.9 * g, 1.1 * g), solver="secant", verify=False)
    # a genuine simple root: det changes sign across it
    assert det(root * (1 - mpmath.mpf(10) ** -20)) * det(root * (1 + mpmath.mpf(10) ** -20)) < 0
    return root


def test_ground_eigenvalue_against_multiprecision_continuant():
    K = 40
    op = build_operator(LOGISTIC, K, choose_truncation(LOGISTIC, K))
    rho0 = top_eigenpairs(op, 1).rhos[0]
    with mpmath.workdps(60):
        ref = float(_mp_rho0_logistic21(K, op.N, rho0))
    assert rho0 == pytest.approx(ref, rel=1e-4)
    assert abs(rho0 - ref) <= 1e3 * np.spacing(op.scale)


@pytest.mark.parametrize("K", [30, 400, 1600])
def test_vectors_orthonormal_with_small_residuals(K):
    op = build_operator(LOGISTIC, K, choose_truncation(LOGISTIC, K))
    res = top_eigenpairs(op, 5)
    G = res.vectors @ res.vectors.T
    assert np.max(np.abs(G - np.eye(5))) <= 1e-8
    assert np.all(res.residuals <= 1e-10 * op.scale)
    assert np.all(np.diff(res.rhos) >= 0) and np.all(res.rhos >= 0)


def test_floor_flag_marks_unresolvable_ground_state():
    op = build_operator(LOGISTIC, 400, choose_truncation(LOGISTIC, 400))
    res = top_eigenpairs(op, 2)
    assert res.floor[0] and not res.floor[1]
    op = build_operator(LOGISTIC, 50, choose_truncation(LOGISTIC, 50))
    assert not top_eigenpairs(op, 1).floor[0]


def test_near_degenerate_pair_is_separated():
    # logistic K=1600 carries two numerically equal eigenvalues near 1
    op = build_operator(LOGISTIC, 1600, choose_truncation(LOGISTIC, 1600))
    res = top_eigenpairs(op, 3)
    assert abs(res.rhos[1] - res.rhos[2]) < 1e-9
    assert abs(res.vectors[1] @ res.vectors[2]) < 1e-8


@settings(max_examples=50, deadline=None)
@given(seed=st.integers(0, 2 ** 32 - 1), N=st.integers(1, 40),
       x=st.floats(-50, 5), y=st.floats(-50, 5))
def test_sturm_monotone(seed, N, x, y):
    rng = np.random.default_rng(seed)
    op = _op(-rng.uniform(0.5, 20, N), rng.uniform(0.01, 5, N - 1))
    lo, hi = min(x, y), max(x, y)
    assert sturm_count(op, lo) <= sturm_count(op, hi)
    assert sturm_count(op, 100.0) == N


def test_eigenvector_tail_decay_and_sign():
    # beyond the first n with d/b >= 4 the exact ratios obey |phi(n+1)/phi(n)| <= 1/2;
    # they are computed by the stable backward continued fraction and compared with the
    # solver's vector wherever its entries are above rounding noise
    K = 3
    N0 = choose_truncation(LOGISTIC, K).N
    op = build_operator(LOGISTIC, K, 3 * N0)
    res = top_eigenpairs(op, 3)
    for rho, phi in zip(res.rhos, res.vectors):
        # ratio[i] = phi[i+1] / phi[i] from the rows of (T + rho) phi = 0, last row first
        ratio = np.zeros(op.N - 1)
        nxt = 0.0
        for i in range(op.N - 2, -1, -1):
            extra = op.offdiag[i + 1] * nxt if i + 1 < op.N - 1 else 0.0
            ratio[i] = nxt = -op.offdiag[i] / (op.diag[i + 1] + rho + extra)
        tail = ratio[N0 - 1:]
        assert np.all(np.abs(tail) <= 0.5 + 1e-6)
        assert np.all(np.sign(tail) == np.sign(tail[0]))
        big = np.abs(phi) > 1e-10 * np.abs(phi).max()
        idx = np.flatnonzero(big[:-1] & big[1:])
        assert np.allclose(phi[idx + 1] / phi[idx], ratio[idx], rtol=1e-4)


def test_solver_error_is_runtime_error():
    assert issubclass(SolverError, RuntimeError)
