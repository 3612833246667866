"""Top of the spectrum of a symmetric tridiagonal matrix.

Bisection on Sturm counts locates eigenvalues; inverse iteration recovers the
vectors. A cyclic Jacobi solver on the dense matrix serves as a cross-check
for small sizes.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from numba import njit

from .operator import TridiagonalOperator

__all__ = [
    "SolverError",
    "SpectralResult",
    "sturm_count",
    "top_eigenpairs",
    "dense_oracle",
    "DENSE_MAX",
]

EPS = np.finfo(float).eps
TINY = np.finfo(float).tiny
DEFAULT_TOL = 1e-13
DENSE_MAX = 500
MAX_INVERSE_ITERATIONS = 100
# rho below FLOOR_ULPS * ulp(scale) cannot be told apart from zero
FLOOR_ULPS = 1e3


class SolverError(RuntimeError):
    pass


@dataclass
class SpectralResult:
    """Lowest magnitudes rho_j (eigenvalues -rho_j) with unit eigenvectors.

    ``vectors`` has shape ``(k, N)``; row j pairs with ``rhos[j]``.
    ``floor[j]`` marks rho_j values too small to resolve at this matrix scale.
    """

    rhos: np.ndarray
    vectors: np.ndarray
    residuals: np.ndarray
    floor: np.ndarray
    scale: float

    @property
    def k(self) -> int:
        return self.rhos.size

    @property
    def gap(self) -> float:
        return float(self.rhos[1] - self.rhos[0])

    def csv_rows(self):
        for j in range(self.k):
            yield (j, float(self.rhos[j]), float(self.residuals[j]))


# -- kernels ----------------------------------------------------------------

@njit(cache=True, nogil=True)
def _sturm(diag, off2, x, pivmin):
    n = diag.size
    count = 0
    q = diag[0] - x
    if abs(q) < pivmin:
        q = -pivmin
    if q < 0.0:
        count += 1
    for i in range(1, n):
        q = (diag[i] - x) - off2[i - 1] / q
        if abs(q) < pivmin:
            q = -pivmin
        if q < 0.0:
            count += 1
    return count


@njit(cache=True, nogil=True)
def _bisect(diag, off2, indices, lo0, hi0, pivmin, tol, scale):
    """Bracket eigenvalue number indices[m] (ascending, 0-based) for every m."""
    k = indices.size
    los = np.empty(k)
    his = np.empty(k)
    eps = 2.220446049250313e-16
    for m in range(k):
        i = indices[m]
        lo = lo0
        hi = hi0
        for _ in range(4000):
            mag = max(abs(lo), abs(hi))
            width = hi - lo
            if width <= max(tol * min(scale, mag), 2.0 * eps * mag, pivmin):
                break
            mid = 0.5 * (lo + hi)
            if mid <= lo or mid >= hi:
                break
            if _sturm(diag, off2, mid, pivmin) > i:
                hi = mid
            else:
                lo = mid
        los[m] = lo
        his[m] = hi
    return los, his


@njit(cache=True, nogil=True)
def _gttrf(dl, d, du, pivmin):
    """LU with partial pivoting of a tridiagonal matrix, in place (LAPACK dgttrf layout)."""
    n = d.size
    du2 = np.zeros(max(n - 2, 0))
    swap = np.zeros(n, dtype=np.bool_)
    for i in range(n - 1):
        if abs(d[i]) >= abs(dl[i]):
            if d[i] == 0.0:
                d[i] = pivmin
            fact = dl[i] / d[i]
            dl[i] = fact
            d[i + 1] -= fact * du[i]
        else:
            fact = d[i] / dl[i]
            d[i] = dl[i]
            dl[i] = fact
            temp = du[i]
            du[i] = d[i + 1]
            d[i + 1] = temp - fact * d[i + 1]
            if i < n - 2:
                du2[i] = du[i + 1]
                du[i + 1] = -fact * du[i + 1]
            swap[i] = True
    if d[n - 1] == 0.0:
        d[n - 1] = pivmin
    return du2, swap


@njit(cache=True, nogil=True)
def _gttrs(dl, d, du, du2, swap, b):
    n = d.size
    x = b.copy()
    for i in range(n - 1):
        if not swap[i]:
            x[i + 1] -= dl[i] * x[i]
        else:
            temp = x[i]
            x[i] = x[i + 1]
            x[i + 1] = temp - dl[i] * x[i + 1]
    x[n - 1] /= d[n - 1]
    if n > 1:
        x[n - 2] = (x[n - 2] - du[n - 2] * x[n - 1]) / d[n - 2]
    for i in range(n - 3, -1, -1):
        x[i] = (x[i] - du[i] * x[i + 1] - du2[i] * x[i + 2]) / d[i]
    return x


@njit(cache=True)
def _jacobi_eigenvalues(A):
    A = A.copy()
    n = A.shape[0]
    for sweep in range(200):
        off = 0.0
        tot = 0.0
        for p in range(n):
            tot += A[p, p] * A[p, p]
            for q in range(p + 1, n):
                off += A[p, q] * A[p, q]
        tot += 2.0 * off
        if off <= 1e-34 * tot or off == 0.0:
            break
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = A[p, q]
                if apq == 0.0:
                    continue
                theta = (A[q, q] - A[p, p]) / (2.0 * apq)
                t = 1.0 / (abs(theta) + math.sqrt(theta * theta + 1.0))
                if theta < 0.0:
                    t = -t
                c = 1.0 / math.sqrt(t * t + 1.0)
                s = t * c
                for r in range(n):
                    arp = A[r, p]
                    arq = A[r, q]
                    A[r, p] = c * arp - s * arq
                    A[r, q] = s * arp + c * arq
                for r in range(n):
                    apr = A[p, r]
                    aqr = A[q, r]
                    A[p, r] = c * apr - s * aqr
                    A[q, r] = s * apr + c * aqr
    out = np.empty(n)
    for i in range(n):
        out[i] = A[i, i]
    return np.sort(out)


# -- public API -------------------------------------------------------------

def _pivmin(op):
    off2max = float(np.max(op.offdiag ** 2)) if op.N > 1 else 0.0
    return TINY * max(1.0, off2max)


def _gershgorin(op):
    r = np.zeros(op.N)
    if op.N > 1:
        a = np.abs(op.offdiag)
        r[:-1] += a
        r[1:] += a
    lo = float(np.min(op.diag - r))
    hi = float(np.max(op.diag + r))
    pad = 2 * EPS * max(abs(lo), abs(hi)) + TINY
    return lo - pad, hi + pad


def sturm_count(op: TridiagonalOperator, x: float) -> int:
    """Number of eigenvalues of ``op`` strictly below ``x``."""
    off2 = np.ascontiguousarray(op.offdiag ** 2)
    return int(_sturm(np.ascontiguousarray(op.diag), off2, float(x), _pivmin(op)))


def _bisect_top(op, k, tol):
    off2 = np.ascontiguousarray(op.offdiag ** 2)
    lo, hi = _gershgorin(op)
    idx = np.arange(op.N - 1, op.N - 1 - k, -1, dtype=np.int64)
    los, his = _bisect(np.ascontiguousarray(op.diag), off2, idx, lo, hi,
                       _pivmin(op), float(tol), op.scale)
    return 0.5 * (los + his), his - los


def _factor(op, sigma):
    dl = op.offdiag.copy()
    du = op.offdiag.copy()
    d = op.diag - sigma
    du2, swap = _gttrf(dl, d, du, EPS * max(op.scale, 1.0))
    return dl, d, du, du2, swap


def _inverse_iteration(op, lam, start, basis):
    """Vector for eigenvalue estimate ``lam``; orthogonal to the rows in ``basis``."""
    if op.N == 1:
        return np.ones(1), 0.0
    fac = _factor(op, lam)
    x = start / np.linalg.norm(start)
    target = 4 * EPS * max(op.scale, 1.0)
    best, best_x = math.inf, x
    prev = math.inf
    for it in range(MAX_INVERSE_ITERATIONS):
        y = _gttrs(*fac, x)
        for _ in range(2):
            for v in basis:
                y -= (v @ y) * v
        norm = np.linalg.norm(y)
        if not np.isfinite(norm) or norm == 0.0:
            raise SolverError(f"inverse iteration broke down at eigenvalue {lam!r}")
        x = y / norm
        res = float(np.linalg.norm(op.apply(x) - lam * x))
        if res < best:
            best, best_x = res, x
        if it >= 1 and (res <= target or res > 0.9 * prev):
            break
        prev = res
    if best > 1e-6 * max(op.scale, 1.0):
        raise SolverError(
            f"inverse iteration did not converge for eigenvalue {lam!r} "
            f"(residual {best:.3e}, bracket scale {op.scale:.3e})")
    return best_x, best


def top_eigenpairs(op: TridiagonalOperator, k: int, tol: float = DEFAULT_TOL) -> SpectralResult:
    """The k algebraically largest eigenpairs, reported as ascending rho = -eigenvalue.

    Brackets shrink to ``tol * min(scale, |eigenvalue|)`` (or to float
    resolution), so tiny eigenvalues keep relative accuracy when the Sturm
    counts can resolve them. Eigenvalues closer than ``1e3 * tol * scale``
    form a cluster whose vectors are reorthogonalised against each other.
    """
    if not 1 <= k <= op.N:
        raise ValueError(f"need 1 <= k <= N={op.N}, got k={k}")
    if tol < 1e-14 - 1e-30:
        raise ValueError(f"tol must be >= 1e-14, got {tol}")
    lams, widths = _bisect_top(op, k, tol)
    scale = op.scale
    cluster_gap = 1e3 * tol * scale
    rng = np.random.default_rng(0x5EED)
    vectors = np.empty((k, op.N))
    residuals = np.empty(k)
    cluster_start = 0
    for j in range(k):
        if j > 0 and lams[j - 1] - lams[j] > cluster_gap:
            cluster_start = j
        basis = [vectors[i] for i in range(cluster_start, j)]
        start = rng.uniform(-1.0, 1.0, op.N)
        x, _ = _inverse_iteration(op, lams[j], start, basis)
        i = int(np.argmax(np.abs(x)))
        if x[i] < 0:
            x = -x
        vectors[j] = x
        residuals[j] = np.linalg.norm(op.apply(x) - lams[j] * x)
    rhos = -lams
    floor = rhos < FLOOR_ULPS * np.spacing(scale)
    rhos = np.maximum(rhos, 0.0)
    return SpectralResult(rhos=rhos, vectors=vectors, residuals=residuals,
                          floor=floor, scale=scale)


def dense_oracle(op: TridiagonalOperator) -> np.ndarray:
    """All eigenvalues (ascending) by cyclic Jacobi rotations on the dense matrix."""
    if op.N > DENSE_MAX:
        raise ValueError(f"dense oracle refuses N={op.N} > {DENSE_MAX}")
    return _jacobi_eigenvalues(op.to_dense())
