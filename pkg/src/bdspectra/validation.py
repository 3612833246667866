"""Acceptance suite shared by ``bd-spectra validate`` and the test-suite.

Each check returns a :class:`CheckResult`; thresholds live here and nowhere else.
"""

from __future__ import annotations

import io as _io
import math
import time
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from . import io
from .analysis import (certify, localization_report, quasi_eigenvector_boundary,
                       quasi_eigenvector_bulk, solve, spectrum_convergence)
from .eigensolve import dense_oracle, top_eigenpairs
from .limit_spectra import (LimitSpectrum, apply_Hstar, apply_M0, branching_eigenvector,
                            hermite_eigenfunction, merge_eta)
from .model import RateModel, model_constants
from .operator import build_operator, choose_truncation, dirichlet_form
from .qsd import pi_weights, qsd_from_ground_state
from .simulate import FromQsd, SimulationConfig, default_t_max, extinction_study

__all__ = ["CheckResult", "CHECKS", "run_all"]

SUITE_SEED = 20240917


@dataclass
class CheckResult:
    name: str
    passed: bool
    detail: dict = field(default_factory=dict)
    seconds: float = 0.0

    def line(self) -> str:
        return f"{'PASS' if self.passed else 'FAIL'} {self.name} ({self.seconds:.1f}s)"


def _timed(name):
    def wrap(fn: Callable[[], tuple]):
        def run() -> CheckResult:
            t0 = time.perf_counter()
            passed, detail = fn()
            return CheckResult(name, bool(passed), detail, time.perf_counter() - t0)
        run.__name__ = fn.__name__
        run.check_name = name
        return run
    return wrap


def _random_model(rng):
    kind = rng.choice(["logistic", "age", "smith"])
    lam = rng.uniform(1.5, 4.0)
    mu = rng.uniform(0.2, lam - 0.3)
    if kind == "logistic":
        return RateModel.logistic(lam, mu)
    if kind == "age":
        return RateModel.age(lam, mu, rng.uniform(0.2, 0.9))
    return RateModel.smith(lam, mu)


@_timed("c01_oracle_equivalence")
def check_oracle():
    rng = np.random.default_rng(SUITE_SEED)
    worst = 0.0
    for _ in range(50):
        model = _random_model(rng)
        K = int(rng.integers(1, 61))
        N = int(rng.integers(2, 301))
        op = build_operator(model, K, N)
        k = min(10, N)
        got = np.sort(-top_eigenpairs(op, k).rhos)
        ref = dense_oracle(op)[-k:]
        worst = max(worst, float(np.max(np.abs(got - ref))) / op.scale)
    return worst <= 1e-10, {"worst_relative_error": worst}


@_timed("c02_dirichlet_identity")
def check_dirichlet():
    rng = np.random.default_rng(SUITE_SEED + 1)
    models = [RateModel.logistic(2, 1), RateModel.age(2, 1, 0.5), RateModel.smith(2, 1)]
    worst = 0.0
    for model in models:
        op = build_operator(model, 50, choose_truncation(model, 50))
        for _ in range(1000):
            a = int(rng.integers(0, op.N - 1))
            b = int(rng.integers(a + 1, op.N))
            phi = np.zeros(op.N)
            phi[a:b] = rng.standard_normal(b - a)
            gap_ = abs(dirichlet_form(op, phi) + op.quadratic(phi))
            worst = max(worst, gap_ / (float(phi @ phi) * op.scale))
    return worst <= 1e-12, {"worst_relative_gap": worst}


@_timed("c03_merged_spectrum")
def check_merge():
    got_l = merge_eta(LimitSpectrum.from_constants(model_constants(RateModel.logistic(2, 1))), 7)
    got_a = merge_eta(LimitSpectrum.from_constants(model_constants(RateModel.age(2, 1, 0.5))), 7)
    ok = (tuple(got_l.etas) == (0, 1, 1, 2, 2, 3, 3)
          and tuple(got_a.etas) == (0, 0.5, 1, 1, 1.5, 2, 2))
    return ok, {"logistic": got_l.etas.tolist(), "age": got_a.etas.tolist()}


@_timed("c04_convergence_ladder")
def check_convergence():
    rep = spectrum_convergence(RateModel.logistic(2, 1), [100, 200, 400, 800, 1600], 4)
    final = rep.errors[:, -1]
    ok = bool(np.all(rep.trend_ok(0.1)) and np.all(final < 0.1))
    return ok, {"final_errors": final.tolist(), "trend_ok": rep.trend_ok(0.1).tolist()}


@_timed("c05_gap_limits")
def check_gaps():
    cases = [(RateModel.logistic(2, 1), 1.0), (RateModel.age(2, 1, 0.5), 0.5),
             (RateModel.smith(2, 1), 0.5)]
    gaps = []
    for model, target in cases:
        _, spec = solve(model, 1600, 2)
        gaps.append((spec.gap, target))
    ok = all(abs(g - t) <= 0.1 * t for g, t in gaps)
    return ok, {"gaps": [g for g, _ in gaps], "targets": [t for _, t in gaps]}


@_timed("c06_mean_extinction")
def check_extinction():
    model = RateModel.logistic(2, 1)
    consts = model_constants(model)
    ratios, floors = [], []
    for K in (30, 40, 50, 60, 70):
        op, spec = solve(model, K, 1)
        q = qsd_from_ground_state(op, spec, pi_weights(model, K, op.N), consts, model)
        ratios.append(q.ratio)
        floors.append(bool(spec.floor[0]))
    dev = [abs(1 - r) for r in ratios]
    trend = all(b <= 1.1 * a for a, b in zip(dev, dev[1:]))
    ok = trend and dev[-1] <= 0.25 and not any(floors)
    return ok, {"ratios": ratios, "floor": floors}


@_timed("c07_hermite_suite")
def check_hermite():
    consts = model_constants(RateModel.logistic(2, 1))
    efs = [hermite_eigenfunction(n, consts) for n in range(11)]
    # independent Gauss-Hermite rule, exact for the degree-20 products here
    y, w = np.polynomial.hermite.hermgauss(64)
    x = y / math.sqrt(efs[0].alpha)
    vals = np.array([ef(x) * np.exp(0.5 * y * y) for ef in efs])
    gram = (vals * w) @ vals.T / math.sqrt(efs[0].alpha)
    orth = float(np.max(np.abs(gram - np.eye(11))))
    xs = np.linspace(-4, 4, 801)
    res = max(float(np.max(np.abs(apply_Hstar(efs[n], xs, consts) + n * consts.s1_step * efs[n](xs))))
              for n in range(4))
    return orth <= 1e-9 and res <= 1e-6, {"orthonormality": orth, "hstar_residual": res}


@_timed("c08_branching_suite")
def check_branching():
    worst = 0.0
    worst_orth = 0.0
    bp0 = 2.0
    for r in (0.3, 0.5, 0.8):
        dp0 = bp0 * r
        vecs = []
        for m in range(1, 7):
            ev = branching_eigenvector(m, r)
            v = ev.values()
            vecs.append(v)
            res = np.linalg.norm(apply_M0(v, bp0, dp0) + m * (bp0 - dp0) * v) / np.linalg.norm(v)
            worst = max(worst, float(res))
        n = max(v.size for v in vecs)
        G = np.array([np.pad(v, (0, n - v.size)) for v in vecs])
        worst_orth = max(worst_orth, float(np.max(np.abs(G @ G.T - np.eye(6)))))
    p2 = branching_eigenvector(2, 0.5).poly
    p2_ok = np.allclose(p2, [-3.0, 1.0], rtol=0, atol=1e-12)
    ok = worst <= 1e-8 and p2_ok and worst_orth <= 1e-9
    return ok, {"m0_residual": worst, "orthogonality": worst_orth, "p2": p2.tolist()}


@_timed("c09_quasi_eigenvectors")
def check_quasi():
    model = RateModel.logistic(2, 1)
    detail = {"bulk": {}, "boundary": {}}
    ok = True
    for kind, Ks, targets, build in (
            ("bulk", (100, 400, 1600), (0, 1, 2), quasi_eigenvector_bulk),
            ("boundary", (100, 1000, 10000), (1, 2), quasi_eigenvector_boundary)):
        for t in targets:
            res_list = []
            for K in Ks:
                op, spec = solve(model, K, 8)
                _, res, rho = build(model, K, t, op)
                cert = certify(op, rho, res)
                near = float(np.min(np.abs(spec.rhos - rho)))
                ok &= cert.holds and near <= res
                res_list.append(res)
            ok &= all(b < a for a, b in zip(res_list, res_list[1:]))
            detail[kind][t] = res_list
    return ok, detail


@_timed("c10_localization")
def check_localization():
    model = RateModel.logistic(2, 1)
    K = 100_000
    op, spec = solve(model, K, 3)
    reps = [localization_report(op, spec, model, K, j, bounds=(132, 75197)) for j in range(3)]
    mid = max(r.mid_sup for r in reps)
    side = min(r.mass_left + r.mass_right for r in reps)
    return mid <= 1e-8 and side >= 1 - 1e-6, {"mid_sup": mid, "min_side_mass": side}


def _study_csv(model, K, cfg):
    st = extinction_study(model, K, cfg)
    buf = _io.StringIO()
    io.write_csv(buf, ["traj", "extinction_time", "censored"], st.csv_rows())
    return st, buf.getvalue()


@_timed("c11_monte_carlo")
def check_monte_carlo():
    model = RateModel.logistic(2, 1)
    K = 20
    op, spec = solve(model, K, 2)
    q = qsd_from_ground_state(op, spec, pi_weights(model, K, op.N))
    cfg = SimulationConfig(seed=42, n_traj=2000, t_max=default_t_max(q.rho0), initial=FromQsd(q))
    st, first = _study_csv(model, K, cfg)
    _, second = _study_csv(model, K, cfg)
    z = abs(st.mean - 1 / q.rho0) / st.stderr
    slope = st.survival_slope()
    slope_err = abs(slope / -q.rho0 - 1)
    ok = z <= 3 and slope_err <= 0.1 and first == second and st.censored_fraction < 1e-3
    return ok, {"z": z, "slope": slope, "rho0": q.rho0, "identical": first == second,
                "censored_fraction": st.censored_fraction}


CHECKS = [check_oracle, check_dirichlet, check_merge, check_convergence, check_gaps,
          check_extinction, check_hermite, check_branching, check_quasi, check_localization,
          check_monte_carlo]


def run_all(report=None) -> list:
    """Run every check; ``report`` is called with each result as it finishes."""
    out = []
    for chk in CHECKS:
        res = chk()
        out.append(res)
        if report is not None:
            report(res)
    return out
