"""Deterministic, continuous-state, discounted MDPs on ``[0, 1]^d``.

States are float64 arrays of shape ``(d,)``; every callable on an MDP also
accepts a batch of shape ``(..., d)`` together with broadcastable action,
visit and seed arrays.  Reward draws are keyed by ``(seed, state hash,
action, visit index)`` so they are reproducible regardless of visit order.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Callable

import numpy as np

from .errors import ConfigError, ResourceError
from .streams import state_hash, uniform

DEFAULT_VI_BUDGET = 1 << 20

Transition = Callable[[np.ndarray, np.ndarray], np.ndarray]
RewardMean = Callable[[np.ndarray, np.ndarray], np.ndarray]
RewardSampler = Callable[..., np.ndarray]


@dataclass(frozen=True)
class DeterministicMdp:
    """An MDP with deterministic transitions and bounded stochastic rewards.

    ``reward_sampler(s, a, visit, seed)`` returns the reward of the
    ``visit``-th draw at ``(s, a)`` in the stream seeded by ``seed``.
    ``v_star`` and ``lipschitz`` are only known for benchmark instances.
    """

    d: int
    K: int
    transition: Transition
    reward_mean: RewardMean
    reward_sampler: RewardSampler
    gamma: float
    Rmax: float
    v_star: Callable[[np.ndarray], np.ndarray] | None = None
    lipschitz: float | None = None
    name: str = "custom"

    def __post_init__(self):
        if self.d < 1 or self.K < 1:
            raise ConfigError("need d >= 1 and K >= 1")
        # gamma = 0 is allowed so a one-level tree reduces to a bandit
        if not 0 <= self.gamma < 1:
            raise ConfigError(f"gamma must lie in [0, 1), got {self.gamma}")
        if not self.Rmax > 0:
            raise ConfigError("Rmax must be positive")

    @property
    def vmax(self) -> float:
        return self.Rmax / (1.0 - self.gamma)

    def with_sampler(self, sampler: RewardSampler) -> "DeterministicMdp":
        return replace(self, reward_sampler=sampler)


@dataclass(frozen=True)
class ValueOracle:
    """A bounded state-value estimate used at the leaves of the search tree."""

    evaluate: Callable[[np.ndarray], np.ndarray]
    declared_bound: float
    declared_error: float | None = None

    def __call__(self, s) -> np.ndarray:
        return self.evaluate(np.asarray(s, dtype=float))


def check_state(mdp: DeterministicMdp, s) -> np.ndarray:
    s = np.asarray(s, dtype=float)
    if s.shape[-1:] != (mdp.d,):
        raise ValueError(f"state must have trailing dimension {mdp.d}, got shape {s.shape}")
    if np.any((s < 0) | (s > 1)):
        raise ValueError("state coordinates must lie in [0, 1]")
    return s


def transition(mdp: DeterministicMdp, s, a: int) -> np.ndarray:
    """``s∘a`` with argument checking."""
    if not 0 <= int(a) < mdp.K or int(a) != a:
        raise ValueError(f"action index {a} out of range for K={mdp.K}")
    return mdp.transition(check_state(mdp, s), np.asarray(a))


def value_iteration(mdp: DeterministicMdp, v0, h: int, s, budget: int = DEFAULT_VI_BUDGET) -> float:
    """Exact ``h``-step Bellman backup of ``v0`` at ``s`` using mean rewards.

    Expands the full depth-``h`` transition tree below ``s`` (``K**h``
    leaves), evaluates ``v0`` at the leaves in one batch and backs up.
    """
    if h < 0:
        raise ValueError("h must be non-negative")
    if mdp.K ** h > budget:
        raise ResourceError(f"value iteration needs K^h = {mdp.K ** h} nodes, budget is {budget}")
    s = check_state(mdp, s)
    if h == 0:
        return float(np.asarray(v0(s)))
    actions = np.arange(mdp.K)
    frontier = s.reshape(1, mdp.d)
    rewards = []
    for _ in range(h):
        parents = np.repeat(frontier, mdp.K, axis=0)
        acts = np.tile(actions, len(frontier))
        rewards.append(np.asarray(mdp.reward_mean(parents, acts), dtype=float))
        frontier = mdp.transition(parents, acts)
    values = np.asarray(v0(frontier), dtype=float)
    for r in reversed(rewards):
        values = (r + mdp.gamma * values).reshape(-1, mdp.K).max(axis=1)
    return float(values[0])


# --------------------------------------------------------------------------
# benchmark instances


def _uniform_noise_sampler(mean_fn: RewardMean, noise: float, rmax: float) -> RewardSampler:
    def sample(s, a, visit, seed):
        mean = mean_fn(s, a)
        if noise == 0:
            return mean
        u = uniform(seed, state_hash(s), a, visit)
        return np.clip(mean + noise * (2.0 * u - 1.0), -rmax, rmax)

    return sample


def _doubling_value(x, gamma):
    return 1.0 / (1.0 - gamma) - (1.0 - x) / (1.0 - gamma / 2.0)


def make_benchmark(name: str, gamma: float, noise: float = 0.0) -> DeterministicMdp:
    """Benchmark MDPs with closed-form optimal values.

    ``"doubling-1d"``: ``d = 1``, ``K = 2``, ``s∘0 = s/2``, ``s∘1 = (s+1)/2``,
    mean reward ``s``.  Always moving right is optimal and
    ``V*(s) = 1/(1-γ) - (1-s)/(1-γ/2)``, which is ``1/(1-γ/2)``-Lipschitz.

    ``"grid-2d"``: ``d = 2``, ``K = 4``; action ``a`` has bits
    ``(a & 1, a >> 1)`` and halves the distance of each coordinate to the
    corresponding bit.  Mean reward is the coordinate average, so
    ``V*(s) = (V1(s_1) + V1(s_2)) / 2`` with ``V1`` the 1-d value above; its
    Euclidean Lipschitz constant is ``1/((1-γ/2)·sqrt(2))``.

    Rewards are the mean plus uniform noise on ``[-noise, noise]``, clipped
    to ``Rmax = 1 + noise``.
    """
    if not 0 < gamma < 1:
        raise ConfigError(f"gamma must lie in (0, 1), got {gamma}")
    if not 0 <= noise <= 1:
        raise ConfigError(f"noise must lie in [0, 1], got {noise}")
    rmax = 1.0 + noise
    if name == "doubling-1d":
        def step(s, a):
            return (s + np.asarray(a, dtype=float)[..., None]) / 2.0

        def mean(s, a):
            return s[..., 0] + 0.0 * np.asarray(a, dtype=float)

        def v_star(s):
            return _doubling_value(np.asarray(s, dtype=float)[..., 0], gamma)

        d, K, lip = 1, 2, 1.0 / (1.0 - gamma / 2.0)
    elif name == "grid-2d":
        def step(s, a):
            a = np.asarray(a)
            bits = np.stack([a & 1, (a >> 1) & 1], axis=-1).astype(float)
            return (s + bits) / 2.0

        def mean(s, a):
            return (s[..., 0] + s[..., 1]) / 2.0 + 0.0 * np.asarray(a, dtype=float)

        def v_star(s):
            s = np.asarray(s, dtype=float)
            return (_doubling_value(s[..., 0], gamma) + _doubling_value(s[..., 1], gamma)) / 2.0

        d, K, lip = 2, 4, 1.0 / ((1.0 - gamma / 2.0) * math.sqrt(2.0))
    else:
        raise ValueError(f"unknown benchmark {name!r}; choose 'doubling-1d' or 'grid-2d'")
    return DeterministicMdp(
        d=d,
        K=K,
        transition=step,
        reward_mean=mean,
        reward_sampler=_uniform_noise_sampler(mean, noise, rmax),
        gamma=gamma,
        Rmax=rmax,
        v_star=v_star,
        lipschitz=lip,
        name=name,
    )


def bandit_mdp(proc, gamma: float = 0.0) -> DeterministicMdp:
    """Single-state MDP whose action rewards are the arms of a bandit process.

    Rewards ignore the state and reuse the bandit's own ``(arm, visit)``
    stream, so a depth-1 search with ``gamma = 0`` replays the bandit exactly.
    """
    mu = proc.declared_mu if proc.declared_mu is not None else np.zeros(proc.K)

    def step(s, a):
        return s + 0.0 * np.asarray(a, dtype=float)[..., None]

    def mean(s, a):
        return np.asarray(mu)[a] + 0.0 * s[..., 0]

    def sample(s, a, visit, seed):
        return proc.sample(a, visit, seed)

    return DeterministicMdp(
        d=1, K=proc.K, transition=step, reward_mean=mean, reward_sampler=sample,
        gamma=gamma, Rmax=proc.R, name="bandit",
    )


# --------------------------------------------------------------------------
# oracles


def zero_oracle(bound: float = 1.0) -> ValueOracle:
    return ValueOracle(lambda s: np.zeros(np.shape(s)[:-1]), declared_bound=bound)


def constant_oracle(value: float) -> ValueOracle:
    return ValueOracle(lambda s: np.full(np.shape(s)[:-1], float(value)), declared_bound=abs(value) or 1.0)


def vstar_oracle(mdp: DeterministicMdp) -> ValueOracle:
    if mdp.v_star is None:
        raise ValueError(f"MDP {mdp.name!r} has no closed-form optimal value")
    return ValueOracle(mdp.v_star, declared_bound=mdp.vmax, declared_error=0.0)


def perturbed_oracle(mdp: DeterministicMdp, eps: float, freq: int = 3) -> ValueOracle:
    """``V* + eps * sin(2π·freq·mean(s))``; sup-norm error exactly ``eps`` on a fine grid."""
    v = mdp.v_star
    if v is None:
        raise ValueError(f"MDP {mdp.name!r} has no closed-form optimal value")

    def evaluate(s):
        s = np.asarray(s, dtype=float)
        return v(s) + eps * np.sin(2.0 * np.pi * freq * s.mean(axis=-1))

    return ValueOracle(evaluate, declared_bound=mdp.vmax + eps, declared_error=eps)


def grid(d: int, per_dim: int) -> np.ndarray:
    """Uniform tensor grid on ``[0, 1]^d`` with ``per_dim`` points per axis, shape ``(per_dim**d, d)``."""
    axis = np.linspace(0.0, 1.0, per_dim)
    mesh = np.meshgrid(*([axis] * d), indexing="ij")
    return np.stack([m.ravel() for m in mesh], axis=-1)
