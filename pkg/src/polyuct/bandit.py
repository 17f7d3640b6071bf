"""Non-stationary multi-arm bandit with a polynomial exploration bonus.

The index of arm ``i`` after ``t`` total plays, ``s = T_i`` of them on arm
``i``, is

    U = mean_i + beta**(1/xi) * t**(alpha/xi) / s**(1 - eta)

and an unplayed arm has an infinite index.  Ties go to the lowest arm index.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .errors import ConfigError
from .streams import replica_seed, uniform

_REL_SLACK = 1e-12


@dataclass(frozen=True)
class UcbParams:
    """Bonus parameters ``(alpha, beta, xi, eta)`` for one bandit (or one tree level).

    With ``strict=True`` (the default) the convergence conditions are enforced:
    ``beta > 1``, ``alpha > 2`` and ``xi*eta*(1-eta) <= alpha < xi*(1-eta)``.
    ``strict=False`` keeps only the conditions the bonus formula itself needs,
    which is handy for hand-checkable toy values such as ``beta = 1``.
    """

    alpha: float
    beta: float
    xi: float
    eta: float
    strict: bool = field(default=True, compare=False)

    def __post_init__(self):
        if not (self.xi > 0 and math.isfinite(self.xi)):
            raise ConfigError(f"xi must be positive, got {self.xi}")
        if not self.alpha > 0:
            raise ConfigError(f"alpha must be positive, got {self.alpha}")
        if not self.beta > 0:
            raise ConfigError(f"beta must be positive, got {self.beta}")
        if not 0.5 <= self.eta < 1:
            raise ConfigError(f"eta must lie in [1/2, 1), got {self.eta}")
        if self.strict:
            self.check_convergence_conditions()

    def check_convergence_conditions(self) -> None:
        a, xi, eta = self.alpha, self.xi, self.eta
        if not self.beta > 1:
            raise ConfigError(f"beta must exceed 1, got {self.beta}")
        if not a > 2:
            raise ConfigError(f"alpha must exceed 2, got {a}")
        lo, hi = xi * eta * (1 - eta), xi * (1 - eta)
        if a < lo * (1 - _REL_SLACK) or not a < hi:
            raise ConfigError(
                f"need xi*eta*(1-eta) <= alpha < xi*(1-eta), i.e. {lo:g} <= {a:g} < {hi:g}"
            )

    @property
    def log_coef(self) -> float:
        return math.log(self.beta) / self.xi

    def numerator(self, t: int) -> float:
        """``beta**(1/xi) * t**(alpha/xi)``, evaluated through logarithms."""
        if t <= 0:
            return 0.0
        try:
            return math.exp(self.log_coef + (self.alpha / self.xi) * math.log(t))
        except OverflowError:
            return math.inf

    def denominator(self, s: int) -> float:
        """``s**(1 - eta)``; zero for ``s = 0``."""
        if s <= 0:
            return 0.0
        return math.exp((1.0 - self.eta) * math.log(s))

    def numerator_table(self, n: int) -> np.ndarray:
        return np.array([self.numerator(t) for t in range(n + 1)])

    def denominator_table(self, n: int) -> np.ndarray:
        return np.array([self.denominator(s) for s in range(n + 1)])


def bonus(t: int, s: int, p: UcbParams) -> float:
    """Exploration bonus ``B_{t,s}``; ``+inf`` when ``s == 0``.

    Computed as ``numerator(t) / denominator(s)`` so that the scalar and the
    vectorised replica paths divide identical table entries.
    """
    if s <= 0:
        return math.inf
    return p.numerator(t) / p.denominator(s)


def log_bonus_baseline(t: int, s: int, c: float) -> float:
    """Classical UCT bonus ``c * sqrt(log t / s)``, ``+inf`` for ``s == 0``."""
    if s <= 0:
        return math.inf
    return c * math.sqrt(math.log(t) / s)


# --------------------------------------------------------------------------
# reward processes


class RewardProcess:
    """Base class for per-arm reward sequences.

    Subclasses implement :meth:`draw`, a deterministic map from
    ``(arm, visit, u)`` to a reward in ``[-R, R]`` where ``visit`` is the
    0-based number of earlier plays of that arm and ``u`` is uniform on
    [0, 1).  All three arguments may be numpy arrays of a common shape.
    """

    K: int
    R: float
    declared_mu: np.ndarray | None = None

    def draw(self, arm, visit, u):
        raise NotImplementedError

    def sample(self, arm, visit, seed):
        """Reward for the ``visit``-th play of ``arm`` in the stream seeded by ``seed``."""
        out = self.draw(arm, visit, uniform(seed, arm, visit))
        return float(out) if np.ndim(out) == 0 else out

    def delta_star(self, n: int) -> float:
        """Drift ``mu_{i*,n} - mu_{i*}`` of the optimal arm's running mean."""
        return 0.0


class BernoulliArms(RewardProcess):
    def __init__(self, means: Sequence[float]):
        self.p = np.asarray(means, dtype=float)
        if self.p.ndim != 1 or not np.all((self.p >= 0) & (self.p <= 1)):
            raise ConfigError("Bernoulli means must be a vector in [0, 1]")
        self.K = len(self.p)
        self.R = 1.0
        self.declared_mu = self.p.copy()

    def draw(self, arm, visit, u):
        return (np.asarray(u) < self.p[arm]).astype(np.float64)


class UniformArms(RewardProcess):
    """I.i.d. arms uniform on ``[mean - half_width, mean + half_width]``."""

    def __init__(self, means: Sequence[float], half_width: float):
        self.mu = np.asarray(means, dtype=float)
        if half_width < 0:
            raise ConfigError("half_width must be non-negative")
        self.hw = float(half_width)
        self.K = len(self.mu)
        self.R = float(np.max(np.abs(self.mu))) + self.hw
        self.declared_mu = self.mu.copy()

    def draw(self, arm, visit, u):
        return self.mu[arm] + self.hw * (2.0 * np.asarray(u) - 1.0)


class DeterministicArms(RewardProcess):
    def __init__(self, values: Sequence[float]):
        self.values = np.asarray(values, dtype=float)
        self.K = len(self.values)
        self.R = float(np.max(np.abs(self.values))) or 1.0
        self.declared_mu = self.values.copy()

    def draw(self, arm, visit, u):
        return self.values[arm] + 0.0 * np.asarray(u)


class DriftingArms(RewardProcess):
    """Arms whose running mean drifts as ``mu_i + c_i * n**(eta - 1)``.

    The ``n``-th play (1-based) has mean ``mu_i + c_i*(n**eta - (n-1)**eta)``
    plus uniform noise of half-width ``noise``; the cumulative mean after ``n``
    plays is then exactly ``mu_i + c_i * n**(eta-1)``.
    """

    def __init__(self, mu: Sequence[float], c: Sequence[float] | float, eta: float, noise: float = 0.0):
        self.mu = np.asarray(mu, dtype=float)
        self.c = np.broadcast_to(np.asarray(c, dtype=float), self.mu.shape).copy()
        if not 0 < eta < 1:
            raise ConfigError("drift exponent eta must lie in (0, 1)")
        self.eta = float(eta)
        self.noise = float(noise)
        self.K = len(self.mu)
        self.R = float(np.max(np.abs(self.mu)) + np.max(np.abs(self.c)) + self.noise)
        self.declared_mu = self.mu.copy()

    def draw(self, arm, visit, u):
        v = np.asarray(visit, dtype=float)
        step = (v + 1.0) ** self.eta - v ** self.eta
        return self.mu[arm] + self.c[arm] * step + self.noise * (2.0 * np.asarray(u) - 1.0)

    def delta_star(self, n: int) -> float:
        i = int(np.argmax(self.mu))
        return float(self.c[i] * n ** (self.eta - 1.0))


# --------------------------------------------------------------------------
# policy and runs


@dataclass
class BanditState:
    K: int
    t: int = 0
    counts: list[int] = field(default_factory=list)
    sums: list[float] = field(default_factory=list)
    actions: list[int] | None = None
    running: float = 0.0  # play-order sum, so X̄_n matches a time-ordered accumulation

    def __post_init__(self):
        if self.K < 1:
            raise ConfigError("a bandit needs at least one arm")
        if not self.counts:
            self.counts = [0] * self.K
            self.sums = [0.0] * self.K

    def update(self, arm: int, reward: float) -> None:
        self.counts[arm] += 1
        self.sums[arm] += reward
        self.running += reward
        self.t += 1
        if self.actions is not None:
            self.actions.append(arm)

    def mean(self, arm: int) -> float:
        return self.sums[arm] / self.counts[arm]

    def total(self) -> float:
        return self.running


def select_arm(state: BanditState, p: UcbParams) -> int:
    best, best_val = 0, -math.inf
    num = p.numerator(state.t)
    for i in range(state.K):
        s = state.counts[i]
        if s == 0:
            return i
        val = state.sums[i] / s + num / p.denominator(s)
        if val > best_val:
            best, best_val = i, val
    return best


@dataclass
class RunRecord:
    seed: int
    n: int
    xbar: float
    counts: tuple[int, ...]
    actions: tuple[int, ...] | None = None

    def csv_row(self) -> list:
        return [self.seed, self.n, repr(self.xbar), *self.counts]

    @staticmethod
    def csv_header(K: int) -> list[str]:
        return ["seed", "n", "xbar", *[f"T_{i}" for i in range(K)]]


def run_bandit(proc: RewardProcess, p: UcbParams, n: int, seed: int, record_actions: bool = False) -> RunRecord:
    """Play ``n`` rounds of the polynomial-bonus UCB policy."""
    if n < 1:
        raise ConfigError("n must be at least 1")
    state = BanditState(proc.K, actions=[] if record_actions else None)
    for _ in range(n):
        arm = select_arm(state, p)
        state.update(arm, proc.sample(arm, state.counts[arm], seed))
    return RunRecord(
        seed=seed,
        n=n,
        xbar=state.total() / n,
        counts=tuple(state.counts),
        actions=tuple(state.actions) if record_actions else None,
    )


@dataclass
class ReplicaRecord:
    """Replicated runs; ``xbar[c]`` and ``counts[c]`` are indexed by checkpoint ``c``."""

    seeds: np.ndarray
    checkpoints: tuple[int, ...]
    xbar: dict[int, np.ndarray]
    counts: dict[int, np.ndarray]

    def records(self, n: int) -> list[RunRecord]:
        return [
            RunRecord(int(s), n, float(x), tuple(int(c) for c in row))
            for s, x, row in zip(self.seeds, self.xbar[n], self.counts[n])
        ]


def replica_seeds(seed: int, M: int) -> np.ndarray:
    return np.array([replica_seed(seed, r) for r in range(M)], dtype=np.uint64)


def run_bandit_replicas(
    proc: RewardProcess,
    p: UcbParams,
    seeds: Iterable[int] | np.ndarray,
    checkpoints: Sequence[int],
) -> ReplicaRecord:
    """Run one bandit per seed in lockstep, recording ``X̄_n`` and ``T_i(n)`` at each checkpoint.

    Each replica is bit-identical to ``run_bandit(proc, p, n, seed)``.
    """
    seeds = np.asarray(list(seeds) if not isinstance(seeds, np.ndarray) else seeds, dtype=np.uint64)
    cps = tuple(sorted(set(int(c) for c in checkpoints)))
    if not cps or cps[0] < 1:
        raise ConfigError("checkpoints must be positive")
    n = cps[-1]
    M, K = len(seeds), proc.K
    num = p.numerator_table(n)
    den = p.denominator_table(n)
    T = np.zeros((M, K), dtype=np.int64)
    S = np.zeros((M, K))
    total = np.zeros(M)
    rows = np.arange(M)
    xbar, counts = {}, {}
    want = set(cps)
    for t in range(n):
        unplayed = T == 0
        with np.errstate(divide="ignore", invalid="ignore"):
            idx = S / T + num[t] / den[T]
        idx[unplayed] = np.inf
        arm = np.argmax(idx, axis=1)
        visit = T[rows, arm]
        r = proc.draw(arm, visit, uniform(seeds, arm, visit))
        S[rows, arm] += r
        total += r
        T[rows, arm] += 1
        if t + 1 in want:
            xbar[t + 1] = total / (t + 1)
            counts[t + 1] = T.copy()
    return ReplicaRecord(seeds, cps, xbar, counts)
