"""Iterated search + regression: sample states, improve their values by tree
search on top of the previous value estimate, fit a ball-averaging regressor.

The per-iteration schedule follows ``λ = (ε/Vmax)^(1/L)``:

    H_ℓ = ceil(log_γ(λ/8)),   δ_ℓ = 3·Vmax/(4·C') · λ^ℓ,
    n_ℓ = κ · (8 / (Vmax·λ^ℓ))^(1/(1-η)),

and ``m_ℓ`` is the regressor's sample-size requirement at radius ``δ_ℓ``,
capped at a desk-scale budget.
"""
from __future__ import annotations

import math
import time
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .cover import NnModel, build_cover, fit, orthant_volume_constant, sample_size
from .errors import ConfigError, ResourceError
from .mcts import min_leaf_xi, run_mcts, run_mcts_batch, schedule_params
from .mdp import DeterministicMdp, grid, zero_oracle
from .streams import stream_key, uniform

_STATES, _SEARCH = 1, 2
_CEIL_SLACK = 1e-9


def _ceil(x: float) -> int:
    # keeps values like 4.000000000000001 (from λ = 0.125**(1/3)) at 4
    return math.ceil(x - _CEIL_SLACK * max(1.0, abs(x)))


def _per_level(value, L: int, name: str):
    if value is None:
        return [None] * L
    if np.isscalar(value):
        return [value] * L
    value = list(value)
    if len(value) != L:
        raise ConfigError(f"{name} override needs {L} entries, got {len(value)}")
    return value


@dataclass
class PipelineConfig:
    mdp: DeterministicMdp
    epsilon: float
    L: int
    eta: float = 0.5
    xi_H: float | None = None
    beta: float = math.e
    C_prime: float | None = None
    C_d: float | None = None
    kappa: float = 1.0
    m_cap: int = 2000
    m: Sequence[int] | int | None = None
    n: Sequence[int] | int | None = None
    delta: Sequence[float] | float | None = None
    H: Sequence[int] | int | None = None
    seed: int = 0
    grid_size: int = 200
    max_transitions: int | None = None

    def __post_init__(self):
        vmax = self.mdp.vmax
        if self.L < 1:
            raise ConfigError("L must be at least 1")
        if not 0 < self.epsilon < vmax:
            raise ConfigError(f"epsilon must lie in (0, Vmax={vmax:g}) so that lambda < 1")
        if not 0.5 <= self.eta < 1:
            raise ConfigError("eta must lie in [1/2, 1)")
        if self.kappa <= 0 or self.m_cap < 1:
            raise ConfigError("kappa and m_cap must be positive")
        if self.C_prime is None:
            if self.mdp.lipschitz is None:
                raise ConfigError("C_prime is required when the MDP has no known Lipschitz constant")
            self.C_prime = 4.0 * (self.mdp.lipschitz + 1.0)
        if self.C_d is None:
            self.C_d = orthant_volume_constant(self.mdp.d)

    @property
    def lam(self) -> float:
        return (self.epsilon / self.mdp.vmax) ** (1.0 / self.L)


@dataclass(frozen=True)
class ScheduleRow:
    ell: int
    H: int
    delta: float
    n: int
    m: int
    n_raw: float
    m_required: int

    @property
    def m_capped(self) -> bool:
        return self.m < self.m_required


def derive_schedule(cfg: PipelineConfig) -> list[ScheduleRow]:
    vmax, lam, g = cfg.mdp.vmax, cfg.lam, cfg.mdp.gamma
    if g == 0:
        raise ConfigError("the pipeline needs gamma > 0")
    delta1 = 3 * vmax / (4 * cfg.C_prime) * lam
    if cfg.delta is None and not delta1 < 1:
        raise ConfigError(f"delta_1 = {delta1:g} >= 1; C_prime must exceed {3 * vmax * lam / 4:g}")
    over_h = _per_level(cfg.H, cfg.L, "H")
    over_d = _per_level(cfg.delta, cfg.L, "delta")
    over_n = _per_level(cfg.n, cfg.L, "n")
    over_m = _per_level(cfg.m, cfg.L, "m")
    rows = []
    for ell in range(1, cfg.L + 1):
        h = over_h[ell - 1] or max(1, _ceil(math.log(lam / 8) / math.log(g)))
        delta = over_d[ell - 1] or 3 * vmax / (4 * cfg.C_prime) * lam ** ell
        if not 0 < delta < 1:
            raise ConfigError(f"delta_{ell} = {delta:g} must lie in (0, 1)")
        n_raw = cfg.kappa * (8 / (vmax * lam ** ell)) ** (1 / (1 - cfg.eta))
        n = int(over_n[ell - 1] or _ceil(n_raw))
        m_req = sample_size(delta, cfg.mdp.d, vmax, cfg.C_d)
        m = int(over_m[ell - 1] or min(m_req, cfg.m_cap))
        rows.append(ScheduleRow(ell, int(h), float(delta), n, m, n_raw, m_req))
    return rows


@dataclass
class IterationReport:
    ell: int
    m: int
    n: int
    delta: float
    H: int
    sup_error: float | None
    seconds: float
    model: NnModel = field(repr=False)

    @property
    def transitions(self) -> int:
        return self.m * self.n * self.H

    def csv_row(self) -> list:
        err = "" if self.sup_error is None else repr(self.sup_error)
        return [self.ell, self.m, self.n, repr(self.delta), self.H, err, self.transitions, f"{self.seconds:.3f}"]

    CSV_HEADER = ["ell", "m", "n", "delta", "H", "sup_error", "transitions", "seconds"]


class BudgetExceeded(ResourceError):
    def __init__(self, msg: str, reports: list[IterationReport]):
        super().__init__(msg)
        self.reports = reports


def sup_grid_error(mdp: DeterministicMdp, oracle, per_dim: int = 200) -> float | None:
    if mdp.v_star is None:
        return None
    pts = grid(mdp.d, per_dim)
    return float(np.max(np.abs(np.asarray(oracle(pts)) - mdp.v_star(pts))))


def sample_states(seed: int, ell: int, m: int, d: int) -> np.ndarray:
    i = np.arange(m, dtype=np.uint64)[:, None]
    k = np.arange(d, dtype=np.uint64)[None, :]
    return uniform(seed, _STATES, ell, i, k)


def search_seeds(seed: int, ell: int, m: int) -> np.ndarray:
    return np.array([stream_key(seed, _SEARCH, ell, i) for i in range(m)], dtype=np.uint64)


def improve_values(mdp, oracle, states, sched, n, seeds) -> np.ndarray:
    """Tree-search estimates at every state; dense lockstep batches when the tree is small."""
    if mdp.K ** sched.H <= 4096:
        return run_mcts_batch(mdp, oracle, states, sched, [n], seeds)[n]
    return np.array([run_mcts(mdp, oracle, s, sched, n, int(sd))[0] for s, sd in zip(states, seeds)])


def run_pipeline(cfg: PipelineConfig) -> list[IterationReport]:
    mdp = cfg.mdp
    vmax = mdp.vmax
    oracle = zero_oracle(vmax)
    reports: list[IterationReport] = []
    for row in derive_schedule(cfg):
        if cfg.max_transitions is not None and row.m * row.n * row.H > cfg.max_transitions:
            raise BudgetExceeded(
                f"iteration {row.ell} needs {row.m * row.n * row.H} transitions, budget is {cfg.max_transitions}",
                reports,
            )
        t0 = time.perf_counter()
        xi_H = cfg.xi_H if cfg.xi_H is not None else default_leaf_xi(row.H, cfg.eta)
        sched = schedule_params(row.H, xi_H, cfg.eta, cfg.beta)
        states = sample_states(cfg.seed, row.ell, row.m, mdp.d)
        labels = improve_values(mdp, oracle, states, sched, row.n, search_seeds(cfg.seed, row.ell, row.m))
        model = fit(build_cover(mdp.d, row.delta), states, labels, clip=vmax)
        reports.append(IterationReport(
            row.ell, row.m, row.n, row.delta, row.H,
            sup_grid_error(mdp, model, cfg.grid_size), time.perf_counter() - t0, model,
        ))
        oracle = model
    return reports


def default_leaf_xi(H: int, eta: float) -> float:
    """A leaf exponent 10% above the smallest admissible one, rounded up to an integer."""
    return float(math.ceil(1.1 * min_leaf_xi(H, eta)))


class RewardCounter:
    """Wraps an MDP's reward sampler and counts every reward drawn."""

    def __init__(self, mdp: DeterministicMdp):
        self.count = 0
        inner = mdp.reward_sampler

        def sampler(s, a, visit, seed):
            out = inner(s, a, visit, seed)
            self.count += int(np.size(out))
            return out

        self.mdp = mdp.with_sampler(sampler)
