"""Convergence of the computed spectrum to the merged limit, and eigenvector structure.

Covers the rho_j -> eta_j study, gap estimates, localisation of eigenvectors
away from the window between the boundary layer and the bulk, comparisons
with the limiting eigenfunctions, and quasi-eigenvector residual certificates.
"""

from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .eigensolve import SpectralResult, sturm_count, top_eigenpairs, DEFAULT_TOL
from .limit_spectra import (LimitSpectrum, MergedSequence, branching_eigenvector,
                            hermite_eigenfunction, merge_eta)
from .model import ModelConstants, RateModel, model_constants
from .operator import TridiagonalOperator, build_operator, choose_truncation

__all__ = [
    "ConvergenceReport",
    "LocalizationReport",
    "EmbeddingGrid",
    "Certificate",
    "max_threads",
    "solve",
    "spectrum_convergence",
    "gap",
    "window",
    "localization_report",
    "compare_bulk_to_hermite",
    "boundary_distance",
    "compare_boundary_to_branching",
    "quasi_eigenvector_bulk",
    "quasi_eigenvector_boundary",
    "certify",
]

J_MAX = 8
SIDE_MASS_MIN = 0.5
_GL_NODES, _GL_WEIGHTS = np.polynomial.legendre.leggauss(6)


def max_threads() -> int:
    """Worker cap from ``BD_SPECTRA_THREADS`` (default: CPU count)."""
    raw = os.environ.get("BD_SPECTRA_THREADS")
    if raw:
        try:
            n = int(raw)
        except ValueError:
            raise ValueError(f"BD_SPECTRA_THREADS must be an integer, got {raw!r}") from None
        if n < 1:
            raise ValueError(f"BD_SPECTRA_THREADS must be >= 1, got {n}")
        return n
    return os.cpu_count() or 1


def solve(model: RateModel, K: int, k: int, tol: float = DEFAULT_TOL):
    """Build the truncated operator at K and return ``(op, top k eigenpairs)``."""
    op = build_operator(model, K, choose_truncation(model, K))
    return op, top_eigenpairs(op, min(k, op.N), tol)


def gap(spec: SpectralResult) -> float:
    return spec.gap


# -- convergence --------------------------------------------------------------

@dataclass
class ConvergenceReport:
    """``table[j, i]`` is rho_j at ``K_list[i]``; ``errors`` is |rho_j - eta_j|."""

    model_label: str
    K_list: np.ndarray
    table: np.ndarray
    etas: MergedSequence
    errors: np.ndarray
    floor: np.ndarray
    scales: np.ndarray
    gaps: np.ndarray

    def trend_ok(self, slack: float = 0.1, j=None) -> np.ndarray:
        """Per-j flag: errors nonincreasing along K up to ``slack`` (relative).

        Errors below the solver's floor scale ``1e3 ulp(max|diag|)`` are treated
        as zero, since rho_0 is then indistinguishable from its limit.
        """
        noise = 1e3 * np.spacing(self.scales)
        err = np.where(self.errors <= noise[None, :], 0.0, self.errors)
        ok = np.all(err[:, 1:] <= (1.0 + slack) * err[:, :-1] + noise[None, 1:], axis=1)
        return ok if j is None else ok[j]

    def csv_rows(self):
        for i, K in enumerate(self.K_list):
            for j in range(self.table.shape[0]):
                yield (int(K), j, float(self.table[j, i]), float(self.etas.etas[j]),
                       float(self.errors[j, i]))

    def summary(self) -> dict:
        return {
            "model": self.model_label,
            "K_list": [int(k) for k in self.K_list],
            "etas": [float(e) for e in self.etas.etas],
            "final_errors": [float(e) for e in self.errors[:, -1]],
            "trend_ok": [bool(b) for b in self.trend_ok()],
            "gaps": [float(g) for g in self.gaps],
        }


def spectrum_convergence(model: RateModel, K_list: Sequence[int], j_max: int,
                         tol: float = DEFAULT_TOL, threads: Optional[int] = None) -> ConvergenceReport:
    K_list = [int(k) for k in K_list]
    if not K_list or any(b <= a for a, b in zip(K_list, K_list[1:])):
        raise ValueError(f"K_list must be nonempty and strictly increasing: {K_list}")
    if not 0 <= j_max <= J_MAX:
        raise ValueError(f"j_max must be in [0, {J_MAX}], got {j_max}")
    consts = model_constants(model)
    etas = merge_eta(LimitSpectrum.from_constants(consts), j_max + 1)
    k = max(j_max + 1, 2)
    workers = min(threads or max_threads(), len(K_list))
    with ThreadPoolExecutor(max_workers=workers) as pool:
        results = list(pool.map(lambda K: solve(model, K, k, tol), K_list))
    table = np.column_stack([spec.rhos[: j_max + 1] for _, spec in results])
    floor = np.column_stack([spec.floor[: j_max + 1] for _, spec in results])
    scales = np.array([spec.scale for _, spec in results])
    gaps = np.array([spec.gap for _, spec in results])
    errors = np.abs(table - etas.etas[:, None])
    return ConvergenceReport(model_label=model.describe(), K_list=np.array(K_list), table=table,
                             etas=etas, errors=errors, floor=floor, scales=scales, gaps=gaps)


# -- localisation ---------------------------------------------------------------

def window(K: int, x_star: float) -> tuple[int, int]:
    """(n_l, n_r) = (floor(ln(K)^2), floor(K x* - K^(2/3) ln K))."""
    lk = math.log(K)
    return math.floor(lk * lk), math.floor(K * x_star - K ** (2.0 / 3.0) * lk)


@dataclass
class LocalizationReport:
    K: int
    j: int
    n_l: int
    n_r: int
    mid_sup: float
    mass_left: float
    mass_right: float
    mass_mid: float

    @property
    def empty(self) -> bool:
        return self.n_r <= self.n_l

    @property
    def kind(self) -> str:
        if self.mass_left >= SIDE_MASS_MIN:
            return "boundary"
        if self.mass_right >= SIDE_MASS_MIN:
            return "bulk"
        return "mixed"

    def csv_row(self):
        return (self.K, self.j, self.n_l, self.n_r, self.mid_sup, self.mass_left, self.mass_right)


def _split_masses(phi, n_l, n_r):
    """Squared mass on n < n_l, n > n_r and the window in between (1-based states)."""
    p2 = phi * phi
    n_l_idx = min(max(n_l - 1, 0), phi.size)
    n_r_idx = min(max(n_r, 0), phi.size)
    left = math.fsum(p2[:n_l_idx])
    right = math.fsum(p2[max(n_r_idx, n_l_idx):])
    mid = math.fsum(p2[n_l_idx:max(n_r_idx, n_l_idx)])
    return left, right, mid


def localization_report(op: TridiagonalOperator, spec: SpectralResult, model: RateModel,
                        K: int, j: int, bounds: Optional[tuple[int, int]] = None) -> LocalizationReport:
    """Masses of phi_j left of n_l, right of n_r, and its sup on [n_l, n_r].

    ``bounds`` overrides the default window. An empty window reports
    ``mid_sup`` as NaN.
    """
    if bounds is None:
        n_l, n_r = window(K, model_constants(model).x_star)
    else:
        n_l, n_r = bounds
    phi = spec.vectors[j]
    left, right, mid = _split_masses(phi, n_l, n_r)
    if n_r <= n_l:
        mid_sup = math.nan
        right = math.fsum((phi * phi)[max(n_l - 1, 0):])
        mid = 0.0
    else:
        seg = phi[max(n_l - 1, 0):min(n_r, phi.size)]
        mid_sup = float(np.max(np.abs(seg))) if seg.size else 0.0
    return LocalizationReport(K=int(K), j=int(j), n_l=n_l, n_r=n_r, mid_sup=mid_sup,
                              mass_left=left, mass_right=right, mass_mid=mid)


# -- embeddings and comparisons --------------------------------------------------

@dataclass(frozen=True)
class EmbeddingGrid:
    """Step-function embedding of l2 sequences around K x*.

    State n maps to the cell of width 1/sqrt(K) centred at (n - K x*)/sqrt(K),
    carrying height K^(1/4) u(n); this is an isometry onto L2.
    """

    K: int
    x_star: float

    @property
    def scale(self) -> float:
        return self.K ** 0.25

    @property
    def width(self) -> float:
        return 1.0 / math.sqrt(self.K)

    def x_of_n(self, n):
        return (np.asarray(n, dtype=float) - self.K * self.x_star) / math.sqrt(self.K)

    def heights(self, u):
        return self.scale * np.asarray(u, dtype=float)

    def l2_norm(self, u) -> float:
        h = self.heights(u)
        return math.sqrt(math.fsum(h * h) * self.width)

    def cell_integrals(self, f, n):
        """Integral of ``f`` over each cell, by 6-point Gauss-Legendre."""
        c = self.x_of_n(n)
        half = 0.5 * self.width
        pts = c[:, None] + half * _GL_NODES[None, :]
        return half * (f(pts) @ _GL_WEIGHTS)

    def sample(self, f, N: int):
        """Midpoint projection of ``f`` onto states 1..N: K^(-1/4) f(x_n)."""
        return f(self.x_of_n(np.arange(1, N + 1))) / self.scale


def compare_bulk_to_hermite(spec: SpectralResult, consts: ModelConstants, K: int, j: int,
                            n_target: int) -> float:
    """L2 distance from the embedded phi_j (states n > n_r) to psi_{n_target}, best sign."""
    phi = spec.vectors[j]
    _, n_r = window(K, consts.x_star)
    start = max(n_r, 0)
    tail = phi[start:]
    mass = math.fsum(tail * tail)
    if mass < SIDE_MASS_MIN:
        raise ValueError(f"eigenvector {j} has bulk mass {mass:.3g} < {SIDE_MASS_MIN}; boundary type")
    grid = EmbeddingGrid(K, consts.x_star)
    psi = hermite_eigenfunction(n_target, consts)
    n = np.arange(start + 1, phi.size + 1)
    cross = math.fsum(grid.heights(tail) * grid.cell_integrals(psi, n))
    d2 = 1.0 + mass - 2.0 * abs(cross)
    return math.sqrt(max(d2, 0.0))


def boundary_distance(phi, v, n_l: int) -> float:
    """l2 distance between phi on n < n_l (renormalised) and unit v, best sign."""
    phi = np.asarray(phi, dtype=float)
    v = np.asarray(v, dtype=float)
    head = phi[: max(n_l - 1, 0)]
    norm = math.sqrt(math.fsum(head * head))
    if norm == 0.0:
        raise ValueError("phi has no mass left of n_l")
    head = head / norm
    m = min(head.size, v.size)
    vv = math.fsum(v * v)
    cross = math.fsum(head[:m] * v[:m])
    return math.sqrt(max(1.0 + vv - 2.0 * abs(cross), 0.0))


def compare_boundary_to_branching(spec: SpectralResult, consts: ModelConstants, K: int, j: int,
                                  m_target: int) -> float:
    phi = spec.vectors[j]
    n_l, _ = window(K, consts.x_star)
    head = phi[: max(n_l - 1, 0)]
    mass = math.fsum(head * head)
    if mass < SIDE_MASS_MIN:
        raise ValueError(f"eigenvector {j} has boundary mass {mass:.3g} < {SIDE_MASS_MIN}; bulk type")
    v = branching_eigenvector(m_target, consts.r).values()
    return boundary_distance(phi, v, n_l)


# -- quasi-eigenvectors -------------------------------------------------------------

@dataclass
class Certificate:
    """Interval [rho - residual, rho + residual] and how many eigenvalues it holds."""

    rho: float
    residual: float
    count: int

    @property
    def holds(self) -> bool:
        return self.count >= 1


def certify(op: TridiagonalOperator, rho: float, residual: float) -> Certificate:
    """Sturm count of eigenvalues -rho' with |rho' - rho| <= residual (slightly widened for rounding)."""
    pad = 1e3 * np.spacing(op.scale)
    hi = -rho + residual + pad
    lo = -rho - residual - pad
    count = sturm_count(op, hi) - sturm_count(op, lo)
    return Certificate(rho=rho, residual=residual, count=count)


def _residual(op, v, rho):
    return float(np.linalg.norm(op.apply(v) + rho * v))


def quasi_eigenvector_bulk(model: RateModel, K: int, n_target: int,
                           op: Optional[TridiagonalOperator] = None):
    """Sampled Hermite function as a trial vector; returns ``(v, residual, rho)``."""
    if not 0 <= n_target <= 10:
        raise ValueError(f"n_target must be in [0, 10], got {n_target}")
    consts = model_constants(model)
    if op is None:
        op = build_operator(model, K, choose_truncation(model, K))
    grid = EmbeddingGrid(K, consts.x_star)
    v = grid.sample(hermite_eigenfunction(n_target, consts), op.N)
    v /= np.linalg.norm(v)
    rho = n_target * consts.s1_step
    return v, _residual(op, v, rho), rho


def quasi_eigenvector_boundary(model: RateModel, K: int, m_target: int,
                               op: Optional[TridiagonalOperator] = None):
    """Branching eigenvector padded to N as a trial vector; returns ``(v, residual, rho)``."""
    if not 1 <= m_target <= 6:
        raise ValueError(f"m_target must be in [1, 6], got {m_target}")
    consts = model_constants(model)
    if op is None:
        op = build_operator(model, K, choose_truncation(model, K))
    v = branching_eigenvector(m_target, consts.r).values(op.N)
    v = v / np.linalg.norm(v)
    rho = m_target * consts.s2_step
    return v, _residual(op, v, rho), rho
