"""Closed-form rate constants for the polynomial-bonus bandit, plus the
Monte Carlo machinery (bias curves, tail frequencies, log-log fits) used to
check them empirically."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Mapping, Sequence

import numpy as np

from .bandit import RewardProcess, UcbParams, replica_seeds, run_bandit_replicas
from .errors import ResourceError

SEARCH_CAP = 10 ** 8


@dataclass
class InstanceInfo:
    R: float
    mu: np.ndarray
    delta_star: Callable[[int], float] = field(default=lambda n: 0.0)

    def __post_init__(self):
        self.mu = np.asarray(self.mu, dtype=float)

    @classmethod
    def from_process(cls, proc: RewardProcess) -> "InstanceInfo":
        if proc.declared_mu is None:
            raise ValueError("process has no declared limit means")
        return cls(proc.R, proc.declared_mu, proc.delta_star)

    @property
    def K(self) -> int:
        return len(self.mu)

    @property
    def i_star(self) -> int:
        return int(np.argmax(self.mu))

    @property
    def mu_star(self) -> float:
        return float(self.mu.max())

    @property
    def gaps(self) -> np.ndarray:
        return self.mu_star - self.mu

    @property
    def delta_min(self) -> float:
        g = np.delete(self.gaps, self.i_star)
        if len(g) == 0 or g.min() <= 0:
            raise ValueError("rate formulas need a unique optimal arm (Δ_min > 0)")
        return float(g.min())


def phi(n: int, delta: float, p: UcbParams) -> float:
    """``n**eta * (beta/delta)**(1/xi)``."""
    return math.exp(p.eta * math.log(n) + (math.log(p.beta) - math.log(delta)) / p.xi)


def _ceil(x: float) -> int:
    # ceil() of a power computed through exp/log; absorbs the last-ulp error
    return max(1, math.ceil(x * (1 - 1e-12)))


def a_threshold(delta_i: float, t: int, p: UcbParams) -> int:
    """Play count beyond which a sub-optimal arm's index rarely exceeds ``mu*``."""
    if not delta_i > 0:
        raise ValueError("gap must be positive")
    if t < 1:
        raise ValueError("t must be at least 1")
    log_base = math.log(2 / delta_i) + math.log(p.beta) / p.xi + (p.alpha / p.xi) * math.log(t)
    return _ceil(math.exp(log_base / (1 - p.eta)))


def suboptimal_play_bound(delta_i: float, n: int, p: UcbParams) -> float:
    """Upper bound on the expected number of plays of a sub-optimal arm with gap ``delta_i``."""
    if not p.alpha > 2:
        raise ValueError("the sub-optimal play bound needs alpha > 2")
    if not delta_i > 0:
        raise ValueError("gap must be positive")
    lead = (2 / delta_i * p.beta ** (1 / p.xi)) ** (1 / (1 - p.eta))
    return lead * n ** (p.alpha / (p.xi * (1 - p.eta))) + 2 / (p.alpha - 2) + 1


def convergence_bound(info: InstanceInfo, p: UcbParams, n: int) -> float:
    """Bound on ``|E[X̄_n] - mu*|``: drift of the best arm plus sub-optimal plays at the smallest gap."""
    return abs(info.delta_star(n)) + 2 * info.R * (info.K - 1) * suboptimal_play_bound(info.delta_min, n, p) / n


def r0(info: InstanceInfo, p: UcbParams, n: int) -> float:
    """Deviation scale ``n**eta + 2R(K-1)(3 + A(n))`` of the intermediate concentration step."""
    return n ** p.eta + 2 * info.R * (info.K - 1) * (3 + a_threshold(info.delta_min, n, p))


@dataclass(frozen=True)
class ConcentrationConstants:
    eta_prime: float
    xi_prime: float
    beta_prime: float
    N_p: int
    N_p_prime: int
    c1: float
    c2: float


def _first_true(pred: Callable[[int], bool], cap: int = SEARCH_CAP) -> int:
    # doubling probe, then bisection; assumes pred stays true once it holds
    t = 1
    while not pred(t):
        t *= 2
        if t > cap:
            raise ResourceError(f"search for the threshold time exceeded {cap}")
    lo, hi = t // 2, t
    while hi - lo > 1:
        mid = (lo + hi) // 2
        if pred(mid):
            hi = mid
        else:
            lo = mid
    return hi


def _pow(base: float, e: float) -> float:
    try:
        return math.pow(base, e)
    except OverflowError:
        return math.inf


def concentration_constants(info: InstanceInfo, p: UcbParams, cap: int = SEARCH_CAP) -> ConcentrationConstants:
    """Concentration constants ``(eta', xi', beta')`` the bandit average inherits, one level up."""
    R, K, a, xi, eta, beta = info.R, info.K, p.alpha, p.xi, p.eta, p.beta
    dmin = info.delta_min

    def A(t):
        return a_threshold(dmin, t, p)

    n_p = _first_true(lambda t: t >= A(t), cap)
    n_pp = _first_true(lambda t: t >= A(t) and 2 * R * A(t) >= t ** eta + 2 * R * (4 * K - 3), cap)
    eta_prime = a / (xi * (1 - eta))
    c1 = 2 * R * K * (2 / dmin * beta ** (1 / xi)) ** (1 / (1 - eta))
    c2 = 2 * R * (n_pp - 1) ** (1 - eta_prime)
    tail = 2 * (K - 1) / ((a - 1) * _pow(1 + A(n_pp), a - 1))
    beta_prime = max(c2, 2 * _pow(c1, a - 1) * max(beta, tail))
    return ConcentrationConstants(eta_prime, a - 1, beta_prime, n_p, n_pp, c1, c2)


# --------------------------------------------------------------------------
# Monte Carlo estimators


@dataclass(frozen=True)
class PowerLawFit:
    slope: float
    intercept: float
    r2: float


def fit_power_law(x, y) -> PowerLawFit:
    """Least squares of ``log y`` on ``log x``."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.shape != y.shape or x.size < 3:
        raise ValueError("need at least three (x, y) points")
    if np.any(x <= 0) or np.any(y <= 0):
        raise ValueError("power-law fit needs positive x and y")
    lx, ly = np.log(x), np.log(y)
    slope, intercept = np.polyfit(lx, ly, 1)
    resid = ly - (slope * lx + intercept)
    ss_tot = float(np.sum((ly - ly.mean()) ** 2))
    r2 = 1.0 - float(np.sum(resid ** 2)) / ss_tot if ss_tot > 0 else 1.0
    return PowerLawFit(float(slope), float(intercept), r2)


@dataclass(frozen=True)
class TailFit:
    window: tuple[float, float]
    points: int
    fit: PowerLawFit


@dataclass(frozen=True)
class TailEstimate:
    """Empirical ``P(n·X̄_n - n·mu* >= n**eta' · z)`` (upper) and the mirrored lower tail."""

    z: np.ndarray
    p_upper: np.ndarray
    p_lower: np.ndarray
    M: int
    n: int
    eta_prime: float

    @property
    def se_upper(self) -> np.ndarray:
        return np.sqrt(self.p_upper * (1 - self.p_upper) / self.M)

    @property
    def se_lower(self) -> np.ndarray:
        return np.sqrt(self.p_lower * (1 - self.p_lower) / self.M)

    def fit(self, tail: str = "upper", min_count: int = 20) -> TailFit | None:
        """Log-log slope over the z-window where at least ``min_count`` replicas exceed; None if < 3 points."""
        p = self.p_upper if tail == "upper" else self.p_lower
        keep = p * self.M >= min_count
        if keep.sum() < 3:
            return None
        z = self.z[keep]
        return TailFit((float(z[0]), float(z[-1])), int(keep.sum()), fit_power_law(z, p[keep]))


def estimate_tail(xbar, n: int, mu_star: float | None, eta_prime: float, z_grid: Sequence[float]) -> TailEstimate:
    if mu_star is None:
        raise ValueError("tail estimation needs the limit mean mu*")
    z = np.asarray(z_grid, dtype=float)
    if z.ndim != 1 or np.any(z < 1) or np.any(np.diff(z) <= 0):
        raise ValueError("z grid must be increasing and >= 1")
    xbar = np.asarray(xbar, dtype=float)
    dev = (n * xbar - n * mu_star) / n ** eta_prime
    up = (dev[None, :] >= z[:, None]).mean(axis=1)
    lo = (dev[None, :] <= -z[:, None]).mean(axis=1)
    return TailEstimate(z, up, lo, len(xbar), n, eta_prime)


def bandit_tail(proc: RewardProcess, p: UcbParams, n: int, M: int, seed: int, z_grid, eta_prime: float | None = None) -> TailEstimate:
    """Replicate the bandit ``M`` times and estimate both deviation tails at horizon ``n``."""
    if proc.declared_mu is None:
        raise ValueError("tail estimation needs the limit mean mu*")
    if eta_prime is None:
        eta_prime = p.alpha / (p.xi * (1 - p.eta))
    rec = run_bandit_replicas(proc, p, replica_seeds(seed, M), [n])
    return estimate_tail(rec.xbar[n], n, float(np.max(proc.declared_mu)), eta_prime, z_grid)


@dataclass(frozen=True)
class BiasPoint:
    n: int
    abs_bias: float
    se: float


def bias_curve(samples: Mapping[int, np.ndarray], target: float) -> list[BiasPoint]:
    """``|mean - target|`` and the standard error of the mean at each horizon."""
    out = []
    for n in sorted(samples):
        x = np.asarray(samples[n], dtype=float)
        se = float(x.std(ddof=1) / math.sqrt(len(x))) if len(x) > 1 else 0.0
        out.append(BiasPoint(n, abs(float(x.mean()) - target), se))
    return out
