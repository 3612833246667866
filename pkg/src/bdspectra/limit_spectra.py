"""Closed-form limit objects.

* the two lattices S1 = s1*Z>=0 (harmonic oscillator near K x*) and
  S2 = s2*Z>0 (binary branching near the origin), and their merge (eta_n);
* Hermite eigenfunctions of the limiting oscillator operator;
* eigenvectors of the limiting branching operator, built from monic
  polynomials orthogonal for q(n) = n r^n.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from .model import ModelConstants

__all__ = [
    "LimitSpectrum",
    "MergedSequence",
    "HermiteEigenfunction",
    "BranchingEigenvector",
    "merge_eta",
    "hermite_eigenfunction",
    "hermite_eval",
    "apply_Hstar",
    "branching_eigenvector",
    "apply_M0",
    "S1_ONLY",
    "S2_ONLY",
    "BOTH_FIRST",
    "BOTH_SECOND",
]

S1_ONLY = "S1only"
S2_ONLY = "S2only"
BOTH_FIRST = "BothFirst"
BOTH_SECOND = "BothSecond"

HERMITE_MAX = 60
BRANCHING_MAX = 12


@dataclass(frozen=True)
class LimitSpectrum:
    s1_step: float
    s2_step: float

    def __post_init__(self):
        if not (self.s1_step > 0 and self.s2_step > 0):
            raise ValueError(f"lattice steps must be positive: {self.s1_step}, {self.s2_step}")

    @classmethod
    def from_constants(cls, consts: ModelConstants) -> "LimitSpectrum":
        return cls(consts.s1_step, consts.s2_step)


@dataclass
class MergedSequence:
    etas: np.ndarray
    tags: list

    def __len__(self):
        return self.etas.size

    def csv_rows(self):
        for i, (e, t) in enumerate(zip(self.etas, self.tags)):
            yield (i, float(e), t)


def _lattice_index(x, step, tol):
    """Integer m with |x - m*step| <= tol*max(1, |x|), or None."""
    m = round(x / step)
    if abs(x - m * step) <= tol * max(1.0, abs(x)):
        return m
    return None


def merge_eta(spec: LimitSpectrum, count: int, tol: float = 1e-9) -> MergedSequence:
    """Nondecreasing merge of S1 and S2; points common to both appear twice.

    From a point in exactly one lattice, step to the next larger point of
    the union; a common point is repeated once before stepping on.
    """
    if count < 1:
        raise ValueError("count must be >= 1")
    s1, s2 = spec.s1_step, spec.s2_step
    etas = [0.0]
    tags = [S1_ONLY]
    while len(etas) < count:
        cur = etas[-1]
        in1 = _lattice_index(cur, s1, tol) is not None
        m2 = _lattice_index(cur, s2, tol)
        in2 = m2 is not None and m2 > 0
        if in1 and in2 and tags[-1] == BOTH_FIRST:
            etas.append(cur)
            tags.append(BOTH_SECOND)
            continue
        # next lattice point strictly above cur on each side
        k1 = math.floor(cur / s1 + tol) + 1
        k2 = max(math.floor(cur / s2 + tol) + 1, 1)
        c1, c2 = k1 * s1, k2 * s2
        if abs(c1 - c2) <= tol * max(1.0, c1):
            etas.append(c1)
            tags.append(BOTH_FIRST)
        elif c1 < c2:
            etas.append(c1)
            tags.append(S1_ONLY)
        else:
            etas.append(c2)
            tags.append(S2_ONLY)
    return MergedSequence(np.array(etas[:count]), tags[:count])


# -- harmonic oscillator ----------------------------------------------------

def _hermite_raw(n, y):
    """Physicists' H_n(y) by H_{k+1} = 2y H_k - 2k H_{k-1}."""
    y = np.asarray(y, dtype=float)
    h_prev = np.zeros_like(y)
    h = np.ones_like(y)
    for k in range(n):
        h_prev, h = h, 2.0 * y * h - 2.0 * k * h_prev
    return h


@lru_cache(maxsize=None)
def _hermite_norm2(n):
    """Integral of exp(-y^2) H_n(y)^2 dy by Gauss-Hermite quadrature (exact for 4n+8 nodes)."""
    y, w = np.polynomial.hermite.hermgauss(4 * n + 8)
    return float(np.sum(w * _hermite_raw(n, y) ** 2))


@dataclass(frozen=True)
class HermiteEigenfunction:
    """exp(-alpha x^2 / 2) H_n(sqrt(alpha) x), scaled to unit L2 norm."""

    n: int
    alpha: float
    norm_const: float = field(default=0.0)

    def __post_init__(self):
        if not 0 <= self.n <= HERMITE_MAX:
            raise ValueError(f"Hermite order must be in [0, {HERMITE_MAX}], got {self.n}")
        if self.alpha <= 0:
            raise ValueError("alpha must be positive")
        if self.norm_const == 0.0:
            # substitute y = sqrt(alpha) x
            norm2 = _hermite_norm2(self.n) / math.sqrt(self.alpha)
            object.__setattr__(self, "norm_const", 1.0 / math.sqrt(norm2))

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        y = math.sqrt(self.alpha) * x
        return self.norm_const * np.exp(-0.5 * y * y) * _hermite_raw(self.n, y)

    @property
    def eigenvalue_step(self) -> float:
        return float(self.n)


def hermite_eigenfunction(n: int, consts: ModelConstants) -> HermiteEigenfunction:
    alpha = consts.s1_step / (2.0 * consts.b_star)
    return HermiteEigenfunction(n, alpha)


def hermite_eval(ef: HermiteEigenfunction, x):
    return ef(x)


def apply_Hstar(f, x, consts: ModelConstants, h: float = 1e-4):
    """Limiting oscillator operator applied to ``f`` at ``x``; f'' by central differences."""
    if not 1e-5 <= h <= 1e-3:
        raise ValueError(f"step h must lie in [1e-5, 1e-3], got {h}")
    x = np.asarray(x, dtype=float)
    s1 = consts.s1_step
    fx = f(x)
    f2 = (f(x + h) - 2.0 * fx + f(x - h)) / (h * h)
    return consts.b_star * f2 - (s1 * s1 / (4.0 * consts.b_star)) * x * x * fx + 0.5 * s1 * fx


# -- branching operator -----------------------------------------------------

def _q_support(m, r):
    """Last n needed so that n^(2m+1) r^n < 1e-20 beyond the peak."""
    p = 2 * m + 1
    n = max(1, int(math.ceil(-p / math.log(r))))  # mode of n^p r^n
    while p * math.log(n) + n * math.log(r) >= math.log(1e-20):
        n = int(n * 1.25) + 1
    return n


@dataclass
class BranchingEigenvector:
    """sqrt(n) r^(n/2) P_m(n), with P_m monic of degree m-1 orthogonal under n r^n.

    ``poly`` holds power-basis coefficients, lowest degree first.
    """

    m: int
    r: float
    poly: np.ndarray
    recurrence: tuple = field(repr=False)
    norm: float = 1.0
    N: int = 0
    support: int = 0

    def poly_values(self, n):
        """P_m(n) by the three-term recurrence (stable form)."""
        n = np.asarray(n, dtype=float)
        a, b = self.recurrence
        p_prev = np.zeros_like(n)
        p = np.ones_like(n)
        for k in range(self.m - 1):
            p_prev, p = p, (n - a[k]) * p - (b[k] * p_prev if k > 0 else 0.0)
        return p

    def raw_values(self, N=None):
        if N is None:
            N = self.N or self.support
        n = np.arange(1, N + 1, dtype=float)
        with np.errstate(under="ignore"):
            w = np.sqrt(n) * np.exp(0.5 * n * math.log(self.r))
        return w * self.poly_values(n)

    def values(self, N=None):
        """Unit-norm (over the full lattice) vector on n = 1..N."""
        return self.raw_values(N) / self.norm

    @property
    def eigenvalue_factor(self) -> int:
        return self.m


def branching_eigenvector(m: int, r: float, N: int = 0) -> BranchingEigenvector:
    """Eigenvector of the branching operator for the m-th point of S2.

    P_m comes from the Stieltjes procedure with inner products under
    q(n) = n r^n summed until n^(2m+1) r^n < 1e-20. ``N`` only sets the default
    length of :meth:`BranchingEigenvector.values`; 0 means the summation range.
    """
    if not 1 <= m <= BRANCHING_MAX:
        raise ValueError(f"m must be in [1, {BRANCHING_MAX}], got {m}")
    if not 0.0 < r <= 0.95:
        raise ValueError(f"r must lie in (0, 0.95], got {r}")
    M = _q_support(m, r)
    n = np.arange(1, M + 1, dtype=float)
    with np.errstate(under="ignore"):
        q = n * np.exp(n * math.log(r))
    # Stieltjes: P_{k+1} = (n - a_k) P_k - b_k P_{k-1}
    a, b = [], []
    p_prev = np.zeros(M)
    p = np.ones(M)
    coef_prev = np.zeros(1)
    coef = np.ones(1)
    norm_prev = 0.0
    norm = float(np.sum(q * p * p))
    for k in range(m - 1):
        ak = float(np.sum(q * n * p * p)) / norm
        bk = norm / norm_prev if k > 0 else 0.0
        a.append(ak)
        b.append(bk)
        p_prev, p = p, (n - ak) * p - bk * p_prev
        new = np.zeros(coef.size + 1)
        new[1:] += coef
        new[:-1] -= ak * coef
        new[:coef_prev.size] -= bk * coef_prev
        coef_prev, coef = coef, new
        norm_prev, norm = norm, float(np.sum(q * p * p))
    # digits lost when evaluating from monomial coefficients
    absval = np.abs(coef) @ np.vander(n, coef.size, increasing=True).T if coef.size > 1 else np.abs(p)
    loss = 0.5 * math.log10(float(np.sum(q * absval * absval)) / norm)
    if loss >= 10:
        raise ValueError(f"moments too ill-conditioned for m={m}, r={r} ({loss:.1f} digits lost)")
    return BranchingEigenvector(m=m, r=float(r), poly=coef, recurrence=(tuple(a), tuple(b)),
                                norm=math.sqrt(norm), N=int(N), support=M)


def apply_M0(v, bp0: float, dp0: float):
    """Limiting branching operator on a finitely supported vector (v[0] is n = 1)."""
    v = np.asarray(v, dtype=float)
    n = np.arange(1, v.size + 1, dtype=float)
    c = np.sqrt(bp0 * dp0 * n[:-1] * n[1:])  # couples n and n+1
    out = -n * (bp0 + dp0) * v
    out[:-1] += c * v[1:]
    out[1:] += c * v[:-1]
    return out
