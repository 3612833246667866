"""The symmetrised killed generator as a truncated Jacobi matrix.

States ``n = 1..N`` are stored 0-based; the cemetery state 0 is never stored,
so absorption shows up only as the missing coupling below ``n = 1``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .model import ModelError, RateModel, model_constants, rates

__all__ = [
    "TruncationError",
    "TridiagonalOperator",
    "TruncationSpec",
    "PotentialProfile",
    "build_operator",
    "choose_truncation",
    "potential_profile",
    "dirichlet_form",
    "couplings",
]

TAIL_DEATH_RATIO = 4.0
N_CAP = 10 ** 8


class TruncationError(ModelError):
    pass


@dataclass(frozen=True)
class TridiagonalOperator:
    K: int
    N: int
    diag: np.ndarray
    offdiag: np.ndarray

    def __post_init__(self):
        self.diag.setflags(write=False)
        self.offdiag.setflags(write=False)

    @property
    def scale(self) -> float:
        return float(np.max(np.abs(self.diag)))

    def apply(self, v):
        """Matrix-vector product with the truncated operator."""
        v = np.asarray(v, dtype=float)
        out = self.diag * v
        out[:-1] += self.offdiag * v[1:]
        out[1:] += self.offdiag * v[:-1]
        return out

    def quadratic(self, v) -> float:
        v = np.asarray(v, dtype=float)
        return float(v @ self.apply(v))

    def to_dense(self) -> np.ndarray:
        return np.diag(self.diag) + np.diag(self.offdiag, 1) + np.diag(self.offdiag, -1)

    def csv_rows(self):
        for i in range(self.N):
            off = self.offdiag[i] if i < self.N - 1 else None
            yield (i + 1, float(self.diag[i]), None if off is None else float(off))


@dataclass(frozen=True)
class TruncationSpec:
    N: int
    tail_ratio: float


@dataclass(frozen=True)
class PotentialProfile:
    V: np.ndarray
    xi: float


def couplings(lam, mu):
    """sqrt(lam_n * mu_{n+1}) for consecutive pairs, computed without forming the product."""
    return np.sqrt(lam[:-1]) * np.sqrt(mu[1:])


def build_operator(model: RateModel, K: int, trunc) -> TridiagonalOperator:
    """Truncated conjugated generator on states 1..N.

    ``trunc`` is a :class:`TruncationSpec` or a plain integer N.
    """
    N = trunc.N if isinstance(trunc, TruncationSpec) else int(trunc)
    if K < 1:
        raise ModelError(f"K must be >= 1, got {K}")
    if N < 1:
        raise TruncationError(f"truncation size must be >= 1, got {N}")
    n = np.arange(1, N + 1)
    lam, mu = rates(model, K, n)
    diag = -(lam + mu)
    off = couplings(lam, mu)
    if not (np.all(np.isfinite(diag)) and np.all(np.isfinite(off))):
        bad = np.flatnonzero(~np.isfinite(diag))
        raise ModelError(f"overflow in rates at n={int(bad[0]) + 1 if bad.size else N}")
    return TridiagonalOperator(K=int(K), N=N, diag=diag, offdiag=off)


def _tail_ratio(model, K, N):
    lam, mu = rates(model, K, np.arange(N - 1, N + 2))
    num = math.sqrt(lam[1]) * math.sqrt(mu[2])
    left = math.sqrt(lam[0]) * math.sqrt(mu[1]) if N > 1 else 0.0
    return num / (lam[1] + mu[1] - left)


def choose_truncation(model: RateModel, K: int) -> TruncationSpec:
    """Smallest N >= 4 K x* with d(N/K) / b(N/K) >= 4.

    Assumes d/b increases (a standing assumption), so the predicate is
    monotone in N and an integer bisection finds the threshold.
    """
    if K < 1:
        raise TruncationError(f"K must be >= 1, got {K}")
    x_star = model_constants(model).x_star
    n0 = max(2, math.ceil(4 * K * x_star - 1e-9))

    def ok(n):
        x = n / K
        return float(model.d(x)) >= TAIL_DEATH_RATIO * float(model.b(x))

    if ok(n0):
        N = n0
    else:
        lo, hi = n0, 2 * n0
        while not ok(hi):
            lo, hi = hi, 2 * hi
            if lo > N_CAP:
                raise TruncationError(f"truncation exceeds cap {N_CAP} for K={K}")
        while hi - lo > 1:
            mid = (lo + hi) // 2
            if ok(mid):
                hi = mid
            else:
                lo = mid
        N = hi
    if N > N_CAP:
        raise TruncationError(f"truncation N={N} exceeds cap {N_CAP}")
    return TruncationSpec(N=N, tail_ratio=_tail_ratio(model, K, N))


def potential_profile(op: TridiagonalOperator, model: RateModel) -> PotentialProfile:
    """V_n = lam_n + mu_n - sqrt(lam_n mu_{n+1}) - sqrt(lam_{n-1} mu_n) 1{n>1}, n = 1..N."""
    lam, mu = rates(model, op.K, np.arange(1, op.N + 2))
    c = couplings(lam, mu)  # c[i] couples n=i+1 to n=i+2, length N
    V = lam[:-1] + mu[:-1] - c
    V[1:] -= c[:-1]
    xi = max(0.0, -float(V.min()))
    return PotentialProfile(V=V, xi=xi)


def dirichlet_form(op: TridiagonalOperator, phi) -> float:
    """Sum of coupling-weighted squared increments plus the potential energy.

    ``phi`` is treated as zero beyond N. The potential at n=N then only sees
    the couplings stored in ``op``; for phi vanishing at N this agrees with
    :func:`potential_profile`.
    """
    phi = np.asarray(phi, dtype=float)
    if phi.shape != (op.N,):
        raise ValueError(f"phi must have shape ({op.N},)")
    c = op.offdiag
    V = -op.diag.copy()
    V[:-1] -= c
    V[1:] -= c
    dphi = np.diff(phi)
    return float(np.sum(c * dphi * dphi) + np.sum(V * phi * phi))
