"""Quasi-stationary distribution, reversibility weights and mean extinction time."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .eigensolve import SpectralResult
from .model import ModelConstants, ModelError, RateModel, rates
from .operator import TridiagonalOperator

__all__ = [
    "QsdError",
    "PiWeights",
    "QsdResult",
    "pi_weights",
    "qsd_from_ground_state",
    "mean_extinction_asymptotic",
    "log_mean_extinction_asymptotic",
]

# ground-vector entries below this fraction of the peak may carry either sign
SIGN_NOISE = 1e-8
GROUND_RESIDUAL_MAX = 1e-6


class QsdError(RuntimeError):
    pass


@dataclass(frozen=True)
class PiWeights:
    """log pi_n for n = 1..N; pi_1 = 1/mu_1, pi_n = lam_1...lam_{n-1} / (mu_1...mu_n)."""

    log_pi: np.ndarray

    @property
    def N(self) -> int:
        return self.log_pi.size


@dataclass
class QsdResult:
    K: int
    nu: np.ndarray
    rho0: float
    mean_T_exact: float
    mean_T_asymptotic: float
    ratio: float

    def csv_rows(self):
        for i, v in enumerate(self.nu):
            yield (i + 1, float(v))

    def summary(self) -> dict:
        return {
            "K": self.K,
            "rho0": self.rho0,
            "mean_T_exact": self.mean_T_exact,
            "mean_T_asymptotic": self.mean_T_asymptotic,
            "ratio": self.ratio,
        }

    @property
    def mean_state(self) -> float:
        return float(np.arange(1, self.nu.size + 1) @ self.nu)


def pi_weights(model: RateModel, K: int, N: int) -> PiWeights:
    if N < 1:
        raise ValueError(f"N must be >= 1, got {N}")
    lam, mu = rates(model, K, np.arange(1, N + 1))
    bad = mu <= 0
    bad[1:] |= lam[:-1] <= 0
    zero = np.flatnonzero(bad)
    if zero.size:
        raise ModelError(f"zero rate at n={int(zero[0]) + 1}, K={K}; weights undefined")
    steps = np.empty(N)
    steps[0] = -math.log(mu[0])
    steps[1:] = np.log(lam[:-1]) - np.log(mu[1:])
    return PiWeights(log_pi=np.cumsum(steps))


def log_mean_extinction_asymptotic(consts: ModelConstants, model: RateModel, K: int) -> float:
    """Natural log of the leading-order mean extinction time from the QSD."""
    if K < 2:
        raise ValueError(f"K must be >= 2, got {K}")
    b1 = float(model.b(1.0 / K))
    d1 = float(model.d(1.0 / K))
    if not b1 > d1:
        raise ModelError(f"b(1/K) <= d(1/K) at K={K}: births do not dominate near 0")
    # sqrt(b/d) - sqrt(d/b) = (b - d) / sqrt(b d)
    contrast = (b1 - d1) / (math.sqrt(b1) * math.sqrt(d1))
    return (0.5 * math.log(2 * math.pi) + K * consts.h0
            - math.log(consts.b_star) - math.log(contrast)
            - 0.5 * math.log(K * consts.h2_star))


def mean_extinction_asymptotic(consts: ModelConstants, model: RateModel, K: int) -> float:
    return math.exp(log_mean_extinction_asymptotic(consts, model, K))


def qsd_from_ground_state(op: TridiagonalOperator, spec: SpectralResult, pi: PiWeights,
                          consts: ModelConstants | None = None,
                          model: RateModel | None = None) -> QsdResult:
    """nu_n proportional to sqrt(pi_n) phi_0(n), normalised in log space.

    The asymptotic mean time and ratio are filled in when ``consts`` and
    ``model`` are given and K >= 2, otherwise they are NaN.
    """
    if pi.N != op.N:
        raise ValueError(f"weights cover N={pi.N}, operator has N={op.N}")
    if spec.k < 1:
        raise ValueError("spectral result holds no eigenpair")
    if spec.residuals[0] > GROUND_RESIDUAL_MAX * max(spec.scale, 1.0):
        raise QsdError(f"ground residual {spec.residuals[0]:.3e} too large")
    phi = spec.vectors[0].copy()
    if phi.sum() < 0:
        phi = -phi
    peak = float(np.max(np.abs(phi)))
    bad = np.flatnonzero(phi < -SIGN_NOISE * peak)
    if bad.size:
        raise QsdError(f"ground vector changes sign at n={int(bad[0]) + 1}; solver failure")
    with np.errstate(divide="ignore"):
        log_nu = 0.5 * pi.log_pi + np.log(np.maximum(phi, 0.0))
    log_nu -= log_nu.max()
    nu = np.exp(log_nu)
    nu /= math.fsum(nu)
    rho0 = float(spec.rhos[0])
    mean_exact = 1.0 / rho0 if rho0 > 0 else math.inf
    if consts is not None and model is not None and op.K >= 2:
        mean_asym = mean_extinction_asymptotic(consts, model, op.K)
        ratio = mean_asym / mean_exact
    else:
        mean_asym = ratio = math.nan
    return QsdResult(K=op.K, nu=nu, rho0=rho0, mean_T_exact=mean_exact,
                     mean_T_asymptotic=mean_asym, ratio=ratio)
