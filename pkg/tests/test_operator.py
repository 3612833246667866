import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from bdspectra.eigensolve import top_eigenpairs
from bdspectra.model import ModelError, RateModel, rates, rates_at
from bdspectra.operator import (TruncationError, build_operator, choose_truncation,
                                dirichlet_form, potential_profile)

LOGISTIC = RateModel.logistic(2, 1)
MODELS = [LOGISTIC, RateModel.age(2, 1, 0.5), RateModel.smith(2, 1)]


def test_two_state_logistic_entries():
    op = build_operator(LOGISTIC, 1, 2)
    assert op.diag.tolist() == [-4.0, -10.0]
    assert op.offdiag[0] == pytest.approx(math.sqrt(12), rel=1e-15)


def test_single_state():
    op = build_operator(LOGISTIC, 1, 1)
    assert op.diag.tolist() == [-4.0]
    assert op.offdiag.size == 0
    assert op.apply([2.0]).tolist() == [-8.0]


@pytest.mark.parametrize("model", MODELS)
def test_couplings_match_rate_products(model):
    K, N = 13, 60
    op = build_operator(model, K, N)
    for n in range(1, N):
        lam_n, _ = rates_at(model, K, n)
        _, mu_next = rates_at(model, K, n + 1)
        assert op.offdiag[n - 1] == pytest.approx(math.sqrt(lam_n * mu_next), rel=1e-14)
    assert np.all(op.offdiag > 0)
    assert np.all(op.diag < 0)


def test_operator_is_immutable():
    op = build_operator(LOGISTIC, 5, 10)
    with pytest.raises(ValueError):
        op.diag[0] = 1.0


def test_no_overflow_for_huge_rates():
    # lam_n * mu_{n+1} exceeds the double range although each factor does not
    m = RateModel.custom(lambda x: 2 * x ** 30, lambda x: x ** 31)
    N = 300_000
    op = build_operator(m, 1, N)
    assert np.all(np.isfinite(op.offdiag))
    log_ref = 0.5 * (math.log(2) + 30 * math.log(N - 1) + 31 * math.log(N))
    assert math.log(op.offdiag[-1]) == pytest.approx(log_ref, rel=1e-14)
    assert log_ref > 0.5 * math.log(1e308) + 1


def test_choose_truncation_examples():
    assert choose_truncation(LOGISTIC, 10).N == 70
    assert choose_truncation(LOGISTIC, 1).N == 7
    with pytest.raises(TruncationError):
        choose_truncation(LOGISTIC, 0)


@pytest.mark.parametrize("model", MODELS)
def test_truncation_is_minimal(model):
    for K in (3, 17, 100):
        N = choose_truncation(model, K).N
        assert N >= 4 * K * (model.closed_form_fixed_point()) - 1e-9
        x = N / K
        assert model.d(x) >= 4 * model.b(x)
        if N > math.ceil(4 * K * model.closed_form_fixed_point()):
            x = (N - 1) / K
            assert model.d(x) < 4 * model.b(x)


def test_truncation_cap():
    slow = RateModel.custom(lambda x: 2 * x, lambda x: x * (1 + np.log1p(x) / 1e3))
    with pytest.raises(ModelError):
        choose_truncation(slow, 10)


def test_potential_first_entry():
    op = build_operator(LOGISTIC, 1, 5)
    prof = potential_profile(op, LOGISTIC)
    assert prof.V[0] == pytest.approx(4 - math.sqrt(12), rel=1e-14)
    assert np.all(prof.V >= -prof.xi)


def test_potential_floor_is_uniform_in_K():
    xis = []
    for K in (10, 50, 100):
        op = build_operator(LOGISTIC, K, choose_truncation(LOGISTIC, K))
        xis.append(potential_profile(op, LOGISTIC).xi)
    assert max(xis) <= 1.05 * min(xis)


def test_potential_against_direct_formula():
    K, N = 20, 140
    op = build_operator(LOGISTIC, K, N)
    lam, mu = rates(LOGISTIC, K, np.arange(0, N + 2))
    V = potential_profile(op, LOGISTIC).V
    for n in range(1, N + 1):
        ref = lam[n] + mu[n] - math.sqrt(lam[n] * mu[n + 1])
        if n > 1:
            ref -= math.sqrt(lam[n - 1] * mu[n])
        assert V[n - 1] == pytest.approx(ref, rel=1e-12, abs=1e-12 * mu[n])


def test_dirichlet_form_unit_vector():
    op = build_operator(LOGISTIC, 1, 2)
    e1 = np.array([1.0, 0.0])
    assert dirichlet_form(op, e1) == pytest.approx(4.0, rel=1e-15)
    assert dirichlet_form(op, np.zeros(2)) == 0.0


@settings(max_examples=60, deadline=None)
@given(K=st.integers(1, 80), seed=st.integers(0, 2 ** 32 - 1), which=st.integers(0, 2))
def test_dirichlet_identity_random(K, seed, which):
    model = MODELS[which]
    op = build_operator(model, K, choose_truncation(model, K))
    rng = np.random.default_rng(seed)
    a = int(rng.integers(0, op.N - 1))
    b = int(rng.integers(a + 1, op.N))
    phi = np.zeros(op.N)
    phi[a:b] = rng.standard_normal(b - a)
    lhs = dirichlet_form(op, phi)
    assert abs(lhs + op.quadratic(phi)) <= 1e-12 * float(phi @ phi) * op.scale


@pytest.mark.parametrize("K", [10, 50])
def test_quadratic_form_bound(K):
    op = build_operator(LOGISTIC, K, choose_truncation(LOGISTIC, K))
    prof = potential_profile(op, LOGISTIC)
    spec = top_eigenpairs(op, 4)
    lam1, _ = rates_at(LOGISTIC, K, 1)
    _, mu2 = rates_at(LOGISTIC, K, 2)
    for rho, phi, res in zip(spec.rhos, spec.vectors, spec.residuals):
        c = op.offdiag
        lhs = np.sum(c * np.diff(phi) ** 2) + np.sum(np.maximum(1.0, prof.V) * phi ** 2)
        assert lhs <= 1 + rho + prof.xi + res + 0.5 * math.sqrt(lam1 * mu2)


@pytest.mark.parametrize("model", MODELS)
def test_doubling_N_leaves_spectrum(model):
    K = 40
    N = choose_truncation(model, K).N
    a = top_eigenpairs(build_operator(model, K, N), 5)
    b = top_eigenpairs(build_operator(model, K, 2 * N), 5)
    assert np.max(np.abs(a.rhos - b.rhos)) < 1e-10 * a.scale


def test_csv_rows_last_offdiag_empty():
    rows = list(build_operator(LOGISTIC, 1, 3).csv_rows())
    assert rows[0][0] == 1 and rows[-1][2] is None and len(rows) == 3
