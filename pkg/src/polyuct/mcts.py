"""Fixed-depth Monte Carlo tree search with a polynomial exploration bonus.

Each simulation walks from the root to depth ``H``.  At a node of depth
``h`` the action maximises

    (q(s,a) + γ·ṽ(s∘a)) / N(s∘a) + β^(1/ξ)·N(s)^(α/ξ) / N(s∘a)^(1-η)

with the level-``h+1`` parameters; an unvisited child has an infinite index.
The leaf is scored once by the value oracle and the discounted return is
added to the cumulative value of every node on the path.  The estimate is
the root's cumulative value divided by the number of simulations.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .bandit import UcbParams
from .errors import ConfigError, ResourceError
from .mdp import DeterministicMdp, ValueOracle, check_state, value_iteration


@dataclass(frozen=True)
class ParamSchedule:
    """Per-level bonus parameters; ``levels[h-1]`` drives selection out of depth ``h-1``."""

    levels: tuple[UcbParams, ...]

    @property
    def H(self) -> int:
        return len(self.levels)

    def level(self, h: int) -> UcbParams:
        return self.levels[h - 1]


def min_leaf_xi(H: int, eta: float) -> float:
    """Smallest leaf ``xi`` for which the recursion still gives ``alpha_1 > 2`` (strict bound)."""
    k = eta * (1 - eta)
    return (2 + sum(k ** j for j in range(1, H))) / k ** H


def schedule_params(H: int, xi_H: float, eta: float = 0.5, beta: float | Sequence[float] = math.e) -> ParamSchedule:
    """Build the per-level schedule from the leaf exponent ``xi_H``.

    The leaf uses ``alpha_H = xi_H·eta·(1-eta)``; going up,
    ``xi_h = alpha_{h+1} - 1`` and ``alpha_h = eta·(1-eta)·(alpha_{h+1} - 1)``.
    ``beta`` is a scalar or one value per level (level 1 first).
    """
    if H < 1:
        raise ConfigError("depth H must be at least 1")
    if not xi_H > 0:
        raise ConfigError("xi_H must be positive")
    if not 0.5 <= eta < 1:
        raise ConfigError(f"eta must lie in [1/2, 1), got {eta}")
    betas = [float(beta)] * H if np.isscalar(beta) else [float(b) for b in beta]
    if len(betas) != H:
        raise ConfigError(f"expected {H} beta values, got {len(betas)}")
    k = eta * (1 - eta)
    alphas, xis = [0.0] * H, [0.0] * H
    xis[H - 1] = float(xi_H)
    alphas[H - 1] = xi_H * k
    for h in range(H - 2, -1, -1):
        xis[h] = alphas[h + 1] - 1
        alphas[h] = k * (alphas[h + 1] - 1)
    if not alphas[0] > 2:
        raise ConfigError(
            f"xi_H too small for this depth: alpha_1 = {alphas[0]:g} is not > 2; "
            f"need xi_H > {min_leaf_xi(H, eta):g}"
        )
    return ParamSchedule(tuple(UcbParams(alphas[h], betas[h], xis[h], eta) for h in range(H)))


def value_bounds(H: int, gamma: float, rmax: float, oracle_bound: float) -> list[float]:
    """``R̃max`` per depth ``0..H``: ``R̃max(H) = oracle bound``, ``R̃max(h-1) = Rmax + γ·R̃max(h)``."""
    out = [0.0] * (H + 1)
    out[H] = oracle_bound
    for h in range(H - 1, -1, -1):
        out[h] = rmax + gamma * out[h + 1]
    return out


@dataclass
class SearchTree:
    """Arena of nodes; node 0 is the root and children sit in K-wide slots.

    Edge statistics ``q`` are stored on the child node the edge leads to.
    For leaves (depth ``H``) ``v_tilde`` stays zero and ``leaf_value`` holds
    the cached oracle evaluation.
    """

    K: int
    H: int
    gamma: float
    state: list[np.ndarray] = field(default_factory=list)
    depth: list[int] = field(default_factory=list)
    parent: list[int] = field(default_factory=list)
    action: list[int] = field(default_factory=list)
    children: list[list[int]] = field(default_factory=list)
    N: list[int] = field(default_factory=list)
    v_tilde: list[float] = field(default_factory=list)
    q: list[float] = field(default_factory=list)
    leaf_value: list[float] = field(default_factory=list)
    root_visits: int = 0
    checkpoints: dict[int, float] = field(default_factory=dict)

    def add_node(self, state, parent: int, action: int, leaf_value: float = 0.0) -> int:
        idx = len(self.depth)
        self.state.append(state)
        self.depth.append(0 if parent < 0 else self.depth[parent] + 1)
        self.parent.append(parent)
        self.action.append(action)
        self.children.append([-1] * self.K)
        self.N.append(0)
        self.v_tilde.append(0.0)
        self.q.append(0.0)
        self.leaf_value.append(leaf_value)
        if parent >= 0:
            self.children[parent][action] = idx
        return idx

    def __len__(self) -> int:
        return len(self.depth)

    def visits(self, u: int) -> int:
        return self.root_visits if u == 0 else self.N[u]

    def cumulative_value(self, u: int) -> float:
        if self.depth[u] == self.H:
            return self.N[u] * self.leaf_value[u]
        return self.v_tilde[u]

    def path(self, u: int) -> tuple[int, ...]:
        acts = []
        while u > 0:
            acts.append(self.action[u])
            u = self.parent[u]
        return tuple(reversed(acts))

    def estimate(self) -> float:
        return self.v_tilde[0] / self.root_visits

    def violations(self, rmax: float, oracle_bound: float, rel_tol: float = 1e-9) -> list[str]:
        """Check visit conservation, value bounds and backup consistency; return problems found."""
        bad = []
        bounds = value_bounds(self.H, self.gamma, rmax, oracle_bound)
        for u in range(len(self)):
            kids = [c for c in self.children[u] if c >= 0]
            n_u = self.visits(u)
            if self.depth[u] < self.H:
                if n_u and sum(self.N[c] for c in kids) != n_u:
                    bad.append(f"node {self.path(u)}: child visits do not sum to {n_u}")
                if n_u:
                    mean = self.v_tilde[u] / n_u
                    if abs(mean) > bounds[self.depth[u]] * (1 + rel_tol):
                        bad.append(f"node {self.path(u)}: mean value {mean} outside ±{bounds[self.depth[u]]}")
                    terms = [self.q[c] + self.gamma * self.cumulative_value(c) for c in kids]
                    scale = sum(abs(x) for x in terms) + abs(self.v_tilde[u])
                    if abs(self.v_tilde[u] - sum(terms)) > rel_tol * max(scale, 1.0):
                        bad.append(f"node {self.path(u)}: v_tilde inconsistent with children")
            elif abs(self.leaf_value[u]) > bounds[self.H] * (1 + rel_tol):
                bad.append(f"leaf {self.path(u)}: oracle value outside ±{bounds[self.H]}")
        return bad

    def write_csv(self, path) -> None:
        """One row per node: path, depth, N, v_tilde, leaf value and the K outgoing edge values."""
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["path", "depth", "N", "v_tilde", "leaf_value", *[f"q_{a}" for a in range(self.K)]])
            for u in range(len(self)):
                qs = [repr(self.q[c]) if c >= 0 else "" for c in self.children[u]]
                w.writerow([
                    "/".join(map(str, self.path(u))), self.depth[u], self.visits(u),
                    repr(self.cumulative_value(u)),
                    repr(self.leaf_value[u]) if self.depth[u] == self.H else "", *qs,
                ])


def _select(tree: SearchTree, u: int, p: UcbParams) -> int:
    kids = tree.children[u]
    num = p.numerator(tree.visits(u))
    g = tree.gamma
    best, best_val = 0, -math.inf
    for a in range(tree.K):
        c = kids[a]
        if c < 0 or tree.N[c] == 0:
            return a
        n_c = tree.N[c]
        val = (tree.q[c] + g * tree.cumulative_value(c)) / n_c + num / p.denominator(n_c)
        if val > best_val:
            best, best_val = a, val
    return best


def run_mcts(
    mdp: DeterministicMdp,
    oracle: ValueOracle,
    root,
    sched: ParamSchedule,
    n: int,
    seed: int,
    max_nodes: int | None = None,
    checkpoints: Sequence[int] = (),
) -> tuple[float, SearchTree]:
    """Run ``n`` simulations from ``root``; returns the root estimate and the tree.

    ``tree.checkpoints`` maps each requested ``k <= n`` to the estimate after
    ``k`` simulations, which equals the output of a ``k``-simulation run.
    """
    if n < 1:
        raise ConfigError("n must be at least 1")
    H = sched.H
    root = check_state(mdp, root)
    limit = n * H + 1 if max_nodes is None else max_nodes
    tree = SearchTree(mdp.K, H, mdp.gamma)
    tree.add_node(root, -1, -1)
    g = mdp.gamma
    want = set(int(c) for c in checkpoints)
    levels = sched.levels
    rewards = [0.0] * H
    path = [0] * (H + 1)
    for sim in range(n):
        u = 0
        for h in range(H):
            a = _select(tree, u, levels[h])
            c = tree.children[u][a]
            if c < 0:
                if len(tree) >= limit:
                    raise ResourceError(f"search tree exceeded its node budget of {limit}")
                s_next = mdp.transition(tree.state[u], np.asarray(a))
                leaf = float(np.asarray(oracle(s_next))) if h + 1 == H else 0.0
                c = tree.add_node(s_next, u, a, leaf)
            rewards[h] = float(mdp.reward_sampler(tree.state[u], a, tree.N[c], seed))
            path[h + 1] = c
            u = c
        ret = tree.leaf_value[u]
        for h in range(H - 1, -1, -1):
            ret = rewards[h] + g * ret
            tree.v_tilde[path[h]] += ret
            c = path[h + 1]
            tree.N[c] += 1
            tree.q[c] += rewards[h]
        tree.root_visits += 1
        if sim + 1 in want:
            tree.checkpoints[sim + 1] = tree.v_tilde[0] / (sim + 1)
    return tree.estimate(), tree


DEFAULT_BATCH_CELLS = 1 << 26


def run_mcts_batch(
    mdp: DeterministicMdp,
    oracle: ValueOracle,
    roots,
    sched: ParamSchedule,
    checkpoints: Sequence[int],
    seeds,
    max_cells: int = DEFAULT_BATCH_CELLS,
) -> dict[int, np.ndarray]:
    """Run one search per ``(root, seed)`` pair in lockstep on preallocated complete trees.

    Returns ``{k: estimates after k simulations}`` for every checkpoint.  Each
    entry is bit-identical to ``run_mcts`` with the same root and seed; the
    dense layout only pays off for small ``K**H``.
    """
    roots = check_state(mdp, roots)
    if roots.ndim == 1:
        roots = roots[None, :]
    seeds = np.asarray(seeds, dtype=np.uint64)
    m, K, H, g = len(roots), mdp.K, sched.H, mdp.gamma
    if seeds.shape != (m,):
        raise ValueError("need exactly one seed per root")
    cps = sorted(set(int(c) for c in checkpoints))
    if not cps or cps[0] < 1:
        raise ConfigError("checkpoints must be positive")
    n = cps[-1]
    n_nodes = (K ** (H + 1) - 1) // (K - 1) if K > 1 else H + 1
    if m * n_nodes * mdp.d > max_cells:
        raise ResourceError(f"dense batch needs {m * n_nodes * mdp.d} cells, budget is {max_cells}")

    # node u's child via action a is u*K + a + 1
    states = np.empty((m, n_nodes, mdp.d))
    states[:, 0] = roots
    first_leaf = n_nodes - K ** H
    for u in range(first_leaf):
        for a in range(K):
            states[:, u * K + a + 1] = mdp.transition(states[:, u], np.full(m, a))
    leaf_val = np.zeros((m, n_nodes))
    leaf_val[:, first_leaf:] = np.asarray(oracle(states[:, first_leaf:]), dtype=float)

    N = np.zeros((m, n_nodes), dtype=np.int64)
    vt = np.zeros((m, n_nodes))
    q = np.zeros((m, n_nodes))
    rows = np.arange(m)
    rows_k = rows[:, None]
    offs = np.arange(K) + 1
    nums = [p.numerator_table(n) for p in sched.levels]
    dens = [p.denominator_table(n) for p in sched.levels]
    out = {}
    want = set(cps)
    nodes = np.zeros((H + 1, m), dtype=np.int64)
    rewards = np.zeros((H, m))
    for sim in range(n):
        u = nodes[0]
        for h in range(H):
            ch = u[:, None] * K + offs
            n_c = N[rows_k, ch]
            n_u = np.full(m, sim) if h == 0 else N[rows, u]
            cum = n_c * leaf_val[rows_k, ch] if h + 1 == H else vt[rows_k, ch]
            with np.errstate(divide="ignore", invalid="ignore"):
                val = (q[rows_k, ch] + g * cum) / n_c + nums[h][n_u][:, None] / dens[h][n_c]
            val[n_c == 0] = np.inf
            a = np.argmax(val, axis=1)
            c = ch[rows, a]
            rewards[h] = mdp.reward_sampler(states[rows, u], a, N[rows, c], seeds)
            nodes[h + 1] = c
            u = c
        ret = leaf_val[rows, u]
        for h in range(H - 1, -1, -1):
            ret = rewards[h] + g * ret
            vt[rows, nodes[h]] += ret
            c = nodes[h + 1]
            N[rows, c] += 1
            q[rows, c] += rewards[h]
        if sim + 1 in want:
            out[sim + 1] = vt[:, 0] / (sim + 1)
    return out


def mcts_target(mdp: DeterministicMdp, oracle: ValueOracle, root, H: int, **kw) -> float:
    """The value search converges to: the ``H``-step Bellman backup of the oracle at ``root``."""
    return value_iteration(mdp, oracle, H, root, **kw)
