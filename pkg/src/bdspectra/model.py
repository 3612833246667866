"""Population models: birth rate b(x), death rate d(x) and derived constants.

Built-in families (``b``, ``d`` as functions of the density ``x = n/K``):

    logistic   b = lam*x            d = x*(mu + x)
    age        b = lam*x            d = x*(mu + x**theta)      (Ayala-Gilpin-Ehrenfeld)
    smith      b = lam*x/(1 + x)    d = x*(mu + x)/(1 + x)
    custom     user supplied callables

Rates at population size ``n`` for carrying capacity ``K`` are ``K*b(n/K)`` and
``K*d(n/K)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
from scipy import integrate, optimize

__all__ = [
    "ModelError",
    "FixedPointNotFound",
    "IntegrationError",
    "RateModel",
    "ModelConstants",
    "AssumptionCheck",
    "AssumptionReport",
    "rates_at",
    "rates",
    "model_constants",
    "check_assumptions",
    "default_grid",
]

KINDS = ("logistic", "age", "smith", "custom")

# relative step of the central differences used for custom models
FD_STEP = 1e-6
# one-sided quotient step at the origin, where b(0) = d(0) = 0 exactly
ORIGIN_STEP = 1e-14
X_MAX = 1e6


class ModelError(ValueError):
    """Invalid model parameters or a model evaluation failure."""


class FixedPointNotFound(ModelError):
    pass


class IntegrationError(ModelError):
    pass


@dataclass(frozen=True)
class RateModel:
    """A birth/death rate pair.

    Use the constructors :meth:`logistic`, :meth:`age`, :meth:`smith` and
    :meth:`custom` rather than instantiating directly.
    """

    kind: str
    lam: Optional[float] = None
    mu: Optional[float] = None
    theta: Optional[float] = None
    b_func: Optional[Callable] = field(default=None, repr=False, compare=False)
    d_func: Optional[Callable] = field(default=None, repr=False, compare=False)
    label: str = ""

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ModelError(f"unknown model kind {self.kind!r}")
        if self.kind == "custom":
            if not (callable(self.b_func) and callable(self.d_func)):
                raise ModelError("custom model needs callables b and d")
            with np.errstate(all="ignore"):
                b0 = float(self.b_func(0.0))
                d0 = float(self.d_func(0.0))
            if abs(b0) > 1e-12 or abs(d0) > 1e-12:
                raise ModelError(f"custom model must vanish at 0 (b(0)={b0}, d(0)={d0})")
            return
        for name in ("lam", "mu"):
            v = getattr(self, name)
            if v is None or not math.isfinite(v) or v <= 0:
                raise ModelError(f"{self.kind} model needs positive {name}, got {v}")
        if self.kind == "age":
            if self.theta is None or not (0.0 < self.theta < 1.0):
                raise ModelError(f"age model needs theta in (0, 1), got {self.theta}")

    # -- constructors -----------------------------------------------------

    @classmethod
    def logistic(cls, lam: float, mu: float) -> "RateModel":
        return cls("logistic", float(lam), float(mu))

    @classmethod
    def age(cls, lam: float, mu: float, theta: float) -> "RateModel":
        return cls("age", float(lam), float(mu), float(theta))

    @classmethod
    def smith(cls, lam: float, mu: float) -> "RateModel":
        return cls("smith", float(lam), float(mu))

    @classmethod
    def custom(cls, b: Callable, d: Callable, label: str = "custom") -> "RateModel":
        return cls("custom", b_func=b, d_func=d, label=label)

    @classmethod
    def from_config(cls, cfg: dict) -> "RateModel":
        """Build a model from ``{"model": "logistic", "lambda": 2.0, "mu": 1.0}``."""
        cfg = dict(cfg)
        kind = str(cfg.pop("model", cfg.pop("kind", ""))).lower()
        lam = cfg.pop("lambda", None)
        mu = cfg.pop("mu", None)
        theta = cfg.pop("theta", None)
        if cfg:
            raise ModelError(f"unknown model keys: {sorted(cfg)}")
        if kind == "custom":
            raise ModelError("custom models cannot be built from a config file")
        if kind not in KINDS:
            raise ModelError(f"unknown model kind {kind!r}")
        if lam is None:
            raise ModelError("missing model parameter 'lambda'")
        if mu is None:
            raise ModelError("missing model parameter 'mu'")
        if kind == "age":
            if theta is None:
                raise ModelError("missing model parameter 'theta'")
            return cls.age(lam, mu, theta)
        return cls(kind, float(lam), float(mu))

    def describe(self) -> str:
        if self.kind == "custom":
            return self.label or "custom"
        s = f"{self.kind}(lambda={self.lam!r}, mu={self.mu!r}"
        if self.kind == "age":
            s += f", theta={self.theta!r}"
        return s + ")"

    # -- evaluation -------------------------------------------------------

    def b(self, x):
        x = np.asarray(x, dtype=float)
        if self.kind == "custom":
            return np.asarray(self.b_func(x), dtype=float)
        if self.kind == "smith":
            return self.lam * x / (1.0 + x)
        return self.lam * x

    def d(self, x):
        x = np.asarray(x, dtype=float)
        if self.kind == "logistic":
            return x * (self.mu + x)
        if self.kind == "age":
            return x * (self.mu + x ** self.theta)
        if self.kind == "smith":
            return x * (self.mu + x) / (1.0 + x)
        return np.asarray(self.d_func(x), dtype=float)

    def db(self, x):
        """Derivative of b; analytic for built-ins, finite differences otherwise."""
        x = np.asarray(x, dtype=float)
        if self.kind in ("logistic", "age"):
            return np.full_like(x, self.lam)
        if self.kind == "smith":
            return self.lam / (1.0 + x) ** 2
        return _fd_derivative(self.b, x)

    def dd(self, x):
        x = np.asarray(x, dtype=float)
        if self.kind == "logistic":
            return self.mu + 2.0 * x
        if self.kind == "age":
            return self.mu + (1.0 + self.theta) * x ** self.theta
        if self.kind == "smith":
            return (self.mu + 2.0 * x + x * x) / (1.0 + x) ** 2
        return _fd_derivative(self.d, x)

    def closed_form_fixed_point(self) -> Optional[float]:
        if self.kind in ("logistic", "smith"):
            return self.lam - self.mu
        if self.kind == "age":
            return (self.lam - self.mu) ** (1.0 / self.theta)
        return None


def _fd_derivative(f, x):
    """Central differences with relative step; one-sided quotient at the origin."""
    x = np.asarray(x, dtype=float)
    out = np.empty_like(x)
    flat_x = x.reshape(-1)
    flat = out.reshape(-1)
    for i, xi in enumerate(flat_x):
        h = FD_STEP * max(abs(xi), 1.0)
        if xi <= 0.0:
            # f(0) = 0, so f(h)/h carries no cancellation
            flat[i] = float(f(ORIGIN_STEP)) / ORIGIN_STEP
        else:
            h = min(h, xi)  # stay on the domain x >= 0
            flat[i] = (float(f(xi + h)) - float(f(xi - h))) / (2 * h)
    return out


def rates_at(model: RateModel, K: int, n: int) -> tuple[float, float]:
    """Birth and death rates ``(K b(n/K), K d(n/K))`` at population size ``n``."""
    if K < 1:
        raise ModelError(f"K must be >= 1, got {K}")
    if n < 0:
        raise ModelError(f"n must be >= 0, got {n}")
    if n == 0:
        return 0.0, 0.0
    lam, mu = rates(model, K, np.array([n]))
    return float(lam[0]), float(mu[0])


def rates(model: RateModel, K: int, n) -> tuple[np.ndarray, np.ndarray]:
    """Vectorised :func:`rates_at` over an integer array ``n``."""
    if K < 1:
        raise ModelError(f"K must be >= 1, got {K}")
    n = np.asarray(n)
    x = n / float(K)
    with np.errstate(all="ignore"):
        lam = K * model.b(x)
        mu = K * model.d(x)
    bad = ~(np.isfinite(lam) & np.isfinite(mu))
    if np.any(bad):
        i = int(np.flatnonzero(bad.reshape(-1))[0])
        raise ModelError(f"non-finite rate at n={int(n.reshape(-1)[i])}, K={K}")
    return lam, mu


@dataclass(frozen=True)
class ModelConstants:
    bp0: float
    dp0: float
    x_star: float
    bp_star: float
    dp_star: float
    b_star: float
    h2_star: float
    h0: float
    s1_step: float
    s2_step: float

    @property
    def r(self) -> float:
        """Ratio d'(0)/b'(0) governing the branching regime."""
        return self.dp0 / self.bp0

    @property
    def gap_limit(self) -> float:
        return min(self.s1_step, self.s2_step)


def find_fixed_point(model: RateModel, x_max: float = X_MAX) -> float:
    """Positive root of b - d by bisection on a doubling bracket."""
    g = lambda x: float(model.b(x) - model.d(x))
    lo = 1.0
    while g(lo) <= 0.0:
        lo *= 0.5
        if lo < 1e-12:
            raise FixedPointNotFound("b - d is not positive near the origin")
    hi = lo
    while g(hi) >= 0.0:
        hi *= 2.0
        if hi > x_max:
            raise FixedPointNotFound(f"no sign change of b - d on (0, {x_max:g}]")
    return optimize.bisect(g, lo, hi, xtol=1e-300, rtol=4 * np.finfo(float).eps, maxiter=2000)


def model_constants(model: RateModel) -> ModelConstants:
    """Derivatives at 0 and x*, H(0) and H''(x*), and the two lattice steps."""
    report = check_assumptions(model)
    if not report.ok:
        raise ModelError(f"model violates standing assumptions: {report.failures()}")
    x_star = model.closed_form_fixed_point()
    if x_star is None:
        x_star = find_fixed_point(model)
    bp0 = float(model.db(0.0))
    dp0 = float(model.dd(0.0))
    bp_star = float(model.db(x_star))
    dp_star = float(model.dd(x_star))
    b_star = float(model.b(x_star))
    d_star = float(model.d(x_star))
    h2 = dp_star / d_star - bp_star / b_star

    def log_ratio(x):
        return math.log(float(model.b(x)) / float(model.d(x)))

    h0, err = integrate.quad(log_ratio, 0.0, x_star, epsabs=1e-10, epsrel=1e-12, limit=200)
    if not math.isfinite(h0) or err > 1e-8:
        raise IntegrationError(f"quadrature of log(b/d) did not converge (err={err:g})")
    return ModelConstants(
        bp0=bp0, dp0=dp0, x_star=float(x_star), bp_star=bp_star, dp_star=dp_star,
        b_star=b_star, h2_star=h2, h0=h0,
        s1_step=dp_star - bp_star, s2_step=bp0 - dp0,
    )


# -- standing assumptions ---------------------------------------------------

def default_grid() -> np.ndarray:
    return np.logspace(-3, 3, 200)


@dataclass(frozen=True)
class AssumptionCheck:
    name: str
    passed: bool
    first_offender: Optional[float] = None
    required: bool = True
    note: str = ""


@dataclass
class AssumptionReport:
    checks: list

    @property
    def ok(self) -> bool:
        return all(c.passed for c in self.checks if c.required)

    def failures(self, required_only: bool = True) -> list:
        return [c.name for c in self.checks if not c.passed and (c.required or not required_only)]

    def __getitem__(self, name: str) -> AssumptionCheck:
        for c in self.checks:
            if c.name == name:
                return c
        raise KeyError(name)


def _first_violation(x, ok):
    bad = np.flatnonzero(~ok)
    return None if bad.size == 0 else float(x[bad[0]])


def _nondecreasing(x, y, rtol=1e-12):
    """Mask over x[1:] of points where y did not decrease (with relative slack)."""
    dy = np.diff(y)
    return x[1:], dy >= -rtol * np.maximum(np.abs(y[1:]), 1e-300)


def check_assumptions(model: RateModel, grid=None) -> AssumptionReport:
    """Sampled check of the standing assumptions. Heuristic, not a proof.

    ``per_capita_increasing`` (b/x and d/x nondecreasing) is reported but not
    required: the Smith family breaks it while meeting every property the
    spectral analysis relies on (increasing rates, increasing log(d/b)).
    """
    x = default_grid() if grid is None else np.asarray(grid, dtype=float)
    if x.size == 0 or np.any(np.diff(x) <= 0):
        raise ModelError("grid must be nonempty and increasing")
    checks = []
    with np.errstate(all="ignore"):
        b = model.b(x)
        d = model.d(x)
        b0 = float(model.b(0.0))
        d0 = float(model.d(0.0))
    checks.append(AssumptionCheck("vanish_at_zero", abs(b0) <= 1e-12 and abs(d0) <= 1e-12,
                                  None if abs(b0) <= 1e-12 and abs(d0) <= 1e-12 else 0.0))
    pos = (b > 0) & (d > 0) & np.isfinite(b) & np.isfinite(d)
    checks.append(AssumptionCheck("positive", bool(pos.all()), _first_violation(x, pos)))

    xs, okb = _nondecreasing(x, b)
    _, okd = _nondecreasing(x, d)
    checks.append(AssumptionCheck("rates_increasing", bool((okb & okd).all()),
                                  _first_violation(xs, okb & okd)))
    _, okb = _nondecreasing(x, b / x)
    _, okd = _nondecreasing(x, d / x)
    checks.append(AssumptionCheck("per_capita_increasing", bool((okb & okd).all()),
                                  _first_violation(xs, okb & okd), required=False))
    with np.errstate(all="ignore"):
        lr = np.log(d / b)
    _, ok = _nondecreasing(x, lr)
    ok &= np.isfinite(lr[1:])
    checks.append(AssumptionCheck("log_d_over_b_increasing", bool(ok.all()), _first_violation(xs, ok)))

    tail = max(2, x.size // 10)
    ratio = b[-tail:] / d[-tail:]
    # sampled trend only: b/d falling over the last tenth of the grid, deaths ahead
    ok_tail = bool(np.all(np.diff(ratio) < 0) and ratio[-1] < 1.0)
    checks.append(AssumptionCheck("births_vanish_relative", ok_tail,
                                  None if ok_tail else float(x[-1])))

    bp0 = float(model.db(0.0))
    dp0 = float(model.dd(0.0))
    ok0 = bp0 > dp0 > 0
    checks.append(AssumptionCheck("repulsive_origin", ok0, None if ok0 else 0.0,
                                  note=f"b'(0)={bp0:.6g}, d'(0)={dp0:.6g}"))

    sign = np.sign(b - d)
    nz = sign != 0  # a grid point exactly at x* is not a crossing of its own
    xs_nz, sign = x[nz], sign[nz]
    changes = np.flatnonzero(np.diff(sign) != 0)
    unique = changes.size == 1 and sign[0] > 0 and sign[-1] < 0
    checks.append(AssumptionCheck("unique_fixed_point", bool(unique),
                                  None if unique else (float(xs_nz[changes[1]]) if changes.size > 1 else float(x[-1]))))
    if unique:
        xs_ = model.closed_form_fixed_point()
        if xs_ is None:
            try:
                xs_ = find_fixed_point(model)
            except FixedPointNotFound:
                xs_ = None
        stable = xs_ is not None and float(model.dd(xs_)) > float(model.db(xs_))
        checks.append(AssumptionCheck("stable_fixed_point", bool(stable),
                                      None if stable else xs_))

    with np.errstate(all="ignore"):
        gb = np.abs(np.log(b[-tail:])) / x[-tail:]
        gd = np.abs(np.log(d[-tail:])) / x[-tail:]
    # |log rate| / x must be falling over the tail (it tends to 0 for subexponential rates)
    ok_sub = bool(np.all(np.isfinite(gb)) and np.all(np.isfinite(gd))
                  and gb[-1] <= gb[0] and gd[-1] <= gd[0])
    checks.append(AssumptionCheck("subexponential_growth", ok_sub, None if ok_sub else float(x[-1])))
    return AssumptionReport(checks)
