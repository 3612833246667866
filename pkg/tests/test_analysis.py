import math

import numpy as np
import pytest
from scipy import integrate

from bdspectra.analysis import (EmbeddingGrid, boundary_distance, certify,
                                compare_boundary_to_branching, compare_bulk_to_hermite,
                                localization_report, max_threads, quasi_eigenvector_boundary,
                                quasi_eigenvector_bulk, solve, spectrum_convergence, window)
from bdspectra.eigensolve import SpectralResult
from bdspectra.limit_spectra import branching_eigenvector, hermite_eigenfunction
from bdspectra.model import RateModel, model_constants

LOGISTIC = RateModel.logistic(2, 1)
LOG_C = model_constants(LOGISTIC)
# s1 = sqrt(2) > s2 = 1, so the first excited state is of boundary type
ROOT2 = RateModel.custom(lambda x: 2 * x, lambda x: x * (1 + x ** math.sqrt(2)))


def _fake_spec(*vectors):
    V = np.array(vectors, dtype=float)
    k = V.shape[0]
    return SpectralResult(rhos=np.zeros(k), vectors=V, residuals=np.zeros(k),
                          floor=np.zeros(k, bool), scale=1.0)


def test_window_examples():
    assert window(100, 1.0) == (21, 0)
    n_l, n_r = window(10 ** 5, 1.0)
    assert n_l == 132
    ref = math.floor(1e5 - 1e5 ** (2 / 3) * math.log(1e5))
    assert n_r == ref


def test_empty_window_report():
    op, spec = solve(LOGISTIC, 100, 2)
    rep = localization_report(op, spec, LOGISTIC, 100, 0)
    assert rep.empty and math.isnan(rep.mid_sup)
    assert rep.mass_left + rep.mass_right == pytest.approx(1.0, abs=1e-12)


def test_embedding_is_an_isometry():
    rng = np.random.default_rng(1)
    u = rng.standard_normal(500)
    for K in (10, 400, 10 ** 5):
        assert EmbeddingGrid(K, 1.0).l2_norm(u) == pytest.approx(np.linalg.norm(u), rel=1e-14)


def test_cell_integrals_against_adaptive_quadrature():
    grid = EmbeddingGrid(50, 1.0)
    f = hermite_eigenfunction(3, LOG_C)
    n = np.array([30, 45, 50, 57, 70])
    got = grid.cell_integrals(f, n)
    h = 0.5 * grid.width
    for g, c in zip(got, grid.x_of_n(n)):
        ref, _ = integrate.quad(f, c - h, c + h, epsabs=1e-15)
        assert g == pytest.approx(ref, abs=1e-14)


def test_sampled_hermite_distance_is_the_step_error():
    # a step function with cell width w sits w ||f'|| / sqrt(12) away from smooth f,
    # and ||psi_n'||^2 = alpha (n + 1/2) for the Hermite functions
    K = 1600
    grid = EmbeddingGrid(K, 1.0)
    f = hermite_eigenfunction(2, LOG_C)
    v = grid.sample(f, 7 * K)
    v /= np.linalg.norm(v)
    spec = _fake_spec(v, -v)
    ref = grid.width * math.sqrt(f.alpha * 2.5 / 12)
    assert compare_bulk_to_hermite(spec, LOG_C, K, 0, 2) == pytest.approx(ref, rel=1e-3)
    assert compare_bulk_to_hermite(spec, LOG_C, K, 1, 2) == pytest.approx(ref, rel=1e-3)
    assert compare_bulk_to_hermite(spec, LOG_C, K, 0, 3) > 1.0


def test_ground_state_is_close_to_gaussian():
    K = 1600
    _, spec = solve(LOGISTIC, K, 1)
    d0 = compare_bulk_to_hermite(spec, LOG_C, K, 0, 0)
    assert d0 <= 0.1
    assert compare_bulk_to_hermite(spec, LOG_C, K, 0, 2) > d0
    flipped = _fake_spec(-spec.vectors[0])
    assert compare_bulk_to_hermite(flipped, LOG_C, K, 0, 0) == pytest.approx(d0, abs=1e-12)


def test_boundary_distance_of_branching_vector_to_itself():
    v = branching_eigenvector(1, 0.5).values(80)
    assert boundary_distance(v, v, 81) == pytest.approx(0.0, abs=1e-7)
    assert boundary_distance(-v, v, 81) == pytest.approx(0.0, abs=1e-7)
    with pytest.raises(ValueError):
        boundary_distance(np.zeros(10), v, 5)


@pytest.mark.parametrize("K,bound", [(1000, 0.1), (10 ** 4, 0.01)])
def test_first_excited_state_is_branching_type(K, bound):
    c = model_constants(ROOT2)
    _, spec = solve(ROOT2, K, 2)
    assert spec.rhos[1] == pytest.approx(1.0, abs=0.05)
    assert compare_boundary_to_branching(spec, c, K, 1, 1) <= bound
    with pytest.raises(ValueError):
        compare_bulk_to_hermite(spec, c, K, 1, 1)
    with pytest.raises(ValueError):
        compare_boundary_to_branching(spec, c, K, 0, 1)


def test_localization_splits_mass():
    K = 10 ** 4
    op, spec = solve(ROOT2, K, 2)
    ground = localization_report(op, spec, ROOT2, K, 0)
    excited = localization_report(op, spec, ROOT2, K, 1)
    assert not ground.empty
    assert ground.kind == "bulk" and excited.kind == "boundary"
    for rep in (ground, excited):
        total = rep.mass_left + rep.mass_right + rep.mass_mid
        assert total == pytest.approx(1.0, abs=1e-12)
        assert rep.mid_sup < 1e-3


def test_certificates_for_quasi_eigenvectors():
    for K in (100, 400):
        op, _ = solve(LOGISTIC, K, 1)
        v, res, rho = quasi_eigenvector_bulk(LOGISTIC, K, 0, op=op)
        assert np.linalg.norm(v) == pytest.approx(1.0, abs=1e-14)
        assert certify(op, rho, res).holds
    op, _ = solve(ROOT2, 1000, 1)
    v, res, rho = quasi_eigenvector_boundary(ROOT2, 1000, 1, op=op)
    cert = certify(op, rho, res)
    assert rho == pytest.approx(1.0, rel=1e-9) and cert.holds and cert.count >= 1


def test_certificate_counts_nothing_in_empty_interval():
    op, spec = solve(LOGISTIC, 50, 3)
    mid = 0.5 * (spec.rhos[0] + spec.rhos[1])
    assert not certify(op, mid, 1e-6).holds
    assert certify(op, float(spec.rhos[0]), 1e-9).count == 1


def test_quasi_residuals_shrink_with_K():
    res = [quasi_eigenvector_bulk(LOGISTIC, K, 1)[1] for K in (100, 400, 1600)]
    assert res[0] > res[1] > res[2]
    with pytest.raises(ValueError):
        quasi_eigenvector_bulk(LOGISTIC, 100, 11)
    with pytest.raises(ValueError):
        quasi_eigenvector_boundary(LOGISTIC, 100, 7)


def test_convergence_report():
    rep = spectrum_convergence(LOGISTIC, [50, 100, 200], 3, threads=1)
    assert rep.table.shape == (4, 3)
    assert rep.etas.etas.tolist() == [0, 1, 1, 2]
    assert np.all(rep.errors[:, -1] < rep.errors[:, 0] + 1e-12)
    assert rep.trend_ok().all()
    rows = list(rep.csv_rows())
    assert len(rows) == 12 and rows[0][:2] == (50, 0)
    assert rep.gaps[-1] == pytest.approx(1.0, abs=0.1)
    with pytest.raises(ValueError):
        spectrum_convergence(LOGISTIC, [100, 50], 2)
    with pytest.raises(ValueError):
        spectrum_convergence(LOGISTIC, [50], 9)


def test_thread_cap_from_environment(monkeypatch):
    monkeypatch.setenv("BD_SPECTRA_THREADS", "3")
    assert max_threads() == 3
    monkeypatch.setenv("BD_SPECTRA_THREADS", "0")
    with pytest.raises(ValueError):
        max_threads()
    monkeypatch.setenv("BD_SPECTRA_THREADS", "many")
    with pytest.raises(ValueError):
        max_threads()
    monkeypatch.delenv("BD_SPECTRA_THREADS")
    assert max_threads() >= 1


def test_thread_count_does_not_change_results():
    a = spectrum_convergence(LOGISTIC, [30, 60], 2, threads=1)
    b = spectrum_convergence(LOGISTIC, [30, 60], 2, threads=2)
    assert a.table.tobytes() == b.table.tobytes()
