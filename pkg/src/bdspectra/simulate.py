"""Exact (Gillespie) simulation of the birth-and-death chain."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Union

import numpy as np
from numba import njit

from .model import RateModel, rates
from .operator import choose_truncation
from .qsd import QsdResult
from .rng import next_uniform, split_seeds

__all__ = [
    "SimulationError",
    "Fixed",
    "FromQsd",
    "SimulationConfig",
    "Trajectory",
    "ExtinctionStats",
    "gillespie_trajectory",
    "sample_initial_from_qsd",
    "sample_initials",
    "extinction_study",
    "default_t_max",
    "rate_table_size",
]

CENSOR_FACTOR = 50.0
BIAS_THRESHOLD = 0.01
TABLE_FACTOR = 4


class SimulationError(RuntimeError):
    pass


@dataclass(frozen=True)
class Fixed:
    n: int

    def __post_init__(self):
        if self.n < 0:
            raise ValueError(f"initial state must be >= 0, got {self.n}")


@dataclass(frozen=True)
class FromQsd:
    qsd: QsdResult


@dataclass(frozen=True)
class SimulationConfig:
    seed: int
    n_traj: int
    t_max: float
    initial: Union[Fixed, FromQsd]
    snapshot_times: tuple = ()

    def __post_init__(self):
        if self.n_traj < 1:
            raise ValueError(f"n_traj must be >= 1, got {self.n_traj}")
        if not self.t_max >= 0 or math.isnan(self.t_max):
            raise ValueError(f"t_max must be >= 0, got {self.t_max}")
        if any(t < 0 for t in self.snapshot_times):
            raise ValueError("snapshot times must be >= 0")


@dataclass
class Trajectory:
    extinction_time: float
    censored: bool
    jumps: int
    max_state: int
    snapshots: np.ndarray


@dataclass
class ExtinctionStats:
    """Extinction times (censored entries hold ``t_max``) and their summaries.

    ``mean`` and ``stderr`` use the uncensored times only; ``bias_flag`` is
    raised when more than 1% of runs were censored.
    """

    times: np.ndarray
    censored: np.ndarray
    mean: float
    stderr: float
    survival_curve: np.ndarray
    censored_fraction: float
    bias_flag: bool
    t_max: float
    snapshots: Optional[np.ndarray] = field(default=None, repr=False)

    def csv_rows(self):
        for i, (t, c) in enumerate(zip(self.times, self.censored)):
            yield (i, float(t), int(c))

    def survival_rows(self):
        for t, s in self.survival_curve:
            yield (float(t), float(s))

    def survival_slope(self, lo: float = 0.25, hi: float = 0.75) -> float:
        """Least-squares slope of log P(T > t) over the quantile band [lo, hi]."""
        t = np.sort(self.times[~self.censored])
        n = self.times.size
        surv = 1.0 - np.arange(1, t.size + 1) / n
        keep = (surv <= 1.0 - lo) & (surv >= 1.0 - hi) & (surv > 0)
        if keep.sum() < 3:
            raise ValueError("too few points in the quantile band")
        slope, _ = np.polyfit(t[keep], np.log(surv[keep]), 1)
        return float(slope)

    def snapshot_distribution(self, i: int, size: Optional[int] = None) -> np.ndarray:
        """Empirical law of X_t given X_t > 0 at snapshot ``i`` (index 0 is state 1)."""
        if self.snapshots is None:
            raise ValueError("study ran without snapshot times")
        states = self.snapshots[:, i]
        alive = states[states > 0]
        size = int(size or max(1, int(self.snapshots.max())))
        counts = np.bincount(alive - 1, minlength=size)[:size].astype(float)
        return counts / max(alive.size, 1)


# -- kernel -----------------------------------------------------------------

@njit(cache=True, nogil=True)
def _run(lam, mu, n0, seed, t_max, snap_t, out_snap):
    """One trajectory; returns (time, censored, jumps, max_state, overflow)."""
    state = np.empty(1, dtype=np.uint64)
    state[0] = seed
    size = lam.size  # lam[n] for n = 0..size-1
    n = n0
    t = 0.0
    jumps = 0
    top = n
    k = 0
    ns = snap_t.size
    while n > 0:
        if n >= size - 1:
            return t, False, jumps, top, True
        total = lam[n] + mu[n]
        dt = -math.log(next_uniform(state)) / total
        if t + dt > t_max:
            while k < ns and snap_t[k] <= t_max:
                out_snap[k] = n
                k += 1
            return t_max, True, jumps, top, False
        while k < ns and snap_t[k] < t + dt:
            out_snap[k] = n
            k += 1
        t += dt
        if next_uniform(state) * total < lam[n]:
            n += 1
            if n > top:
                top = n
        else:
            n -= 1
        jumps += 1
    while k < ns:
        out_snap[k] = 0
        k += 1
    return t, False, jumps, top, False


@njit(cache=True, nogil=True)
def _run_many(lam, mu, n0s, seeds, t_max, snap_t, times, censored, snaps):
    for i in range(n0s.size):
        t, c, _, _, over = _run(lam, mu, n0s[i], seeds[i], t_max, snap_t, snaps[i])
        if over:
            return i
        times[i] = t
        censored[i] = c
    return -1


def rate_table_size(model: RateModel, K: int) -> int:
    return TABLE_FACTOR * choose_truncation(model, K).N


def _table(model, K, size):
    n = np.arange(size)
    lam, mu = rates(model, K, n)
    lam[0] = mu[0] = 0.0
    return np.ascontiguousarray(lam, dtype=float), np.ascontiguousarray(mu, dtype=float)


def gillespie_trajectory(model: RateModel, K: int, initial: int, seed: int, t_max: float,
                         snapshot_times=(), table_size: Optional[int] = None) -> Trajectory:
    """Simulate from ``initial`` on the stream with state ``seed`` until absorption or ``t_max``."""
    if initial < 0:
        raise ValueError(f"initial state must be >= 0, got {initial}")
    size = table_size or max(rate_table_size(model, K), 2 * initial + 2)
    lam, mu = _table(model, K, size)
    snap_t = np.asarray(sorted(snapshot_times), dtype=float)
    snaps = np.zeros(snap_t.size, dtype=np.int64)
    t, c, jumps, top, over = _run(lam, mu, int(initial), np.uint64(int(seed) & (2**64 - 1)),
                                  float(t_max), snap_t, snaps)
    if over:
        raise SimulationError(f"trajectory reached n={size - 1}, the end of the rate table")
    return Trajectory(extinction_time=t, censored=bool(c), jumps=jumps, max_state=top,
                      snapshots=snaps)


def sample_initials(nu, u) -> np.ndarray:
    """Inverse-CDF draws (states start at 1) for an array of uniforms in (0, 1]."""
    cdf = np.cumsum(np.asarray(nu, dtype=float))
    cdf /= cdf[-1]
    idx = np.searchsorted(cdf, np.asarray(u, dtype=float), side="left")
    return np.minimum(idx, cdf.size - 1).astype(np.int64) + 1


def sample_initial_from_qsd(qsd: Union[QsdResult, np.ndarray], seed: int) -> int:
    """One state drawn from the QSD using the first uniform of stream ``seed``."""
    nu = qsd.nu if isinstance(qsd, QsdResult) else qsd
    state = np.array([int(seed) & (2**64 - 1)], dtype=np.uint64)
    return int(sample_initials(nu, [next_uniform(state)])[0])


def default_t_max(rho0: float) -> float:
    return CENSOR_FACTOR / rho0


def extinction_study(model: RateModel, K: int, cfg: SimulationConfig) -> ExtinctionStats:
    """Independent trajectories; trajectory i runs on sub-stream ``mix64(cfg.seed, i)``.

    With a QSD start, the first uniform of each sub-stream picks the initial
    state and the rest drive the jumps.
    """
    seeds = split_seeds(cfg.seed, cfg.n_traj)
    if isinstance(cfg.initial, FromQsd):
        states = seeds.copy()
        n0s = np.empty(cfg.n_traj, dtype=np.int64)
        st = np.empty(1, dtype=np.uint64)
        for i in range(cfg.n_traj):
            st[0] = seeds[i]
            n0s[i] = sample_initials(cfg.initial.qsd.nu, [next_uniform(st)])[0]
            states[i] = st[0]
        seeds = states
        top = int(n0s.max())
    else:
        n0s = np.full(cfg.n_traj, cfg.initial.n, dtype=np.int64)
        top = cfg.initial.n
    size = max(rate_table_size(model, K), 2 * top + 2)
    lam, mu = _table(model, K, size)
    snap_t = np.asarray(sorted(cfg.snapshot_times), dtype=float)
    times = np.empty(cfg.n_traj)
    censored = np.zeros(cfg.n_traj, dtype=np.bool_)
    snaps = np.zeros((cfg.n_traj, snap_t.size), dtype=np.int64)
    bad = _run_many(lam, mu, n0s, seeds, float(cfg.t_max), snap_t, times, censored, snaps)
    if bad >= 0:
        raise SimulationError(f"trajectory {bad} reached n={size - 1}, the end of the rate table")
    done = times[~censored]
    mean = float(done.mean()) if done.size else math.nan
    stderr = float(done.std(ddof=1) / math.sqrt(done.size)) if done.size > 1 else math.nan
    order = np.sort(done)
    surv = 1.0 - np.arange(1, order.size + 1) / cfg.n_traj
    curve = np.column_stack([np.concatenate([[0.0], order]), np.concatenate([[1.0], surv])])
    frac = float(censored.mean())
    return ExtinctionStats(times=times, censored=censored, mean=mean, stderr=stderr,
                           survival_curve=curve, censored_fraction=frac,
                           bias_flag=frac > BIAS_THRESHOLD, t_max=float(cfg.t_max),
                           snapshots=snaps if snap_t.size else None)
