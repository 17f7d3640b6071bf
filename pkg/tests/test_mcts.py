from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from polyuct.bandit import BernoulliArms, DeterministicArms, UcbParams, UniformArms, run_bandit
from polyuct.errors import ConfigError, ResourceError
from polyuct.mcts import (
    ParamSchedule,
    mcts_target,
    min_leaf_xi,
    run_mcts,
    run_mcts_batch,
    schedule_params,
)
from polyuct.mdp import bandit_mdp, constant_oracle, grid, make_benchmark, perturbed_oracle, vstar_oracle, zero_oracle


class TestSchedule:
    def test_two_levels(self):
        sch = schedule_params(2, 40, 0.5)
        top, leaf = sch.level(1), sch.level(2)
        assert leaf.alpha == pytest.approx(10) and leaf.xi == 40
        assert top.xi == pytest.approx(9) and top.alpha == pytest.approx(2.25)
        assert top.eta == leaf.eta == 0.5

    def test_single_level(self):
        assert schedule_params(1, 40).level(1).alpha == pytest.approx(10)

    def test_too_small_leaf_exponent(self):
        with pytest.raises(ConfigError, match=r"xi_H too small.*need xi_H > 36"):
            schedule_params(2, 36, 0.5)

    @pytest.mark.parametrize("H", [1, 2, 3, 4])
    def test_min_leaf_xi_is_the_boundary(self, H):
        x = min_leaf_xi(H, 0.5)
        schedule_params(H, x * 1.001)
        with pytest.raises(ConfigError):
            schedule_params(H, x)

    def test_per_level_beta(self):
        sch = schedule_params(2, 40, beta=[2.0, 3.0])
        assert [p.beta for p in sch.levels] == [2.0, 3.0]


BENCH = make_benchmark("doubling-1d", 0.5, noise=0.5)
SCHED2 = schedule_params(2, 40)


class TestRunMcts:
    def test_single_forced_path(self):
        mdp = bandit_mdp(DeterministicArms([0.3]), gamma=0.5)
        sch = ParamSchedule((UcbParams(10, math.e, 40, 0.5),))
        est, _ = run_mcts(mdp, constant_oracle(2.0), [0.0], sch, 1, seed=0)
        assert est == pytest.approx(0.3 + 0.5 * 2.0)

    @pytest.mark.parametrize("H,oracle", [(1, "vstar"), (2, "zero"), (3, "perturbed")])
    def test_tree_invariants(self, H, oracle):
        o = {"vstar": vstar_oracle(BENCH), "zero": zero_oracle(BENCH.vmax), "perturbed": perturbed_oracle(BENCH, 0.5)}[oracle]
        sched = schedule_params(H, math.ceil(1.1 * min_leaf_xi(H, 0.5)))
        _, tree = run_mcts(BENCH, o, [0.37], sched, 700, seed=5)
        assert tree.violations(BENCH.Rmax, o.declared_bound) == []
        assert len(tree) <= 700 * H + 1
        assert tree.root_visits == 700

    def test_node_budget(self):
        with pytest.raises(ResourceError):
            run_mcts(BENCH, vstar_oracle(BENCH), [0.5], SCHED2, 100, seed=1, max_nodes=3)

    @given(st.integers(0, 2 ** 63), st.floats(0, 1))
    def test_seeded_determinism(self, seed, root):
        a, _ = run_mcts(BENCH, vstar_oracle(BENCH), [root], SCHED2, 60, seed)
        b, _ = run_mcts(BENCH, vstar_oracle(BENCH), [root], SCHED2, 60, seed)
        assert a == b

    def test_checkpoints_equal_shorter_runs(self):
        _, tree = run_mcts(BENCH, vstar_oracle(BENCH), [0.5], SCHED2, 300, 8, checkpoints=[50, 300])
        assert tree.checkpoints[50] == run_mcts(BENCH, vstar_oracle(BENCH), [0.5], SCHED2, 50, 8)[0]

    def test_batch_matches_scalar(self):
        roots = np.random.default_rng(0).random((6, 1))
        seeds = np.arange(100, 106, dtype=np.uint64)
        for oracle in (vstar_oracle(BENCH), perturbed_oracle(BENCH, 0.3)):
            out = run_mcts_batch(BENCH, oracle, roots, SCHED2, [40, 400], seeds)
            for i in range(6):
                _, tree = run_mcts(BENCH, oracle, roots[i], SCHED2, 400, int(seeds[i]), checkpoints=[40, 400])
                assert out[40][i] == tree.checkpoints[40]
                assert out[400][i] == tree.checkpoints[400]

    def test_batch_on_grid_benchmark(self):
        mdp = make_benchmark("grid-2d", 0.5, noise=0.2)
        roots = np.random.default_rng(3).random((3, 2))
        seeds = np.array([1, 2, 3], dtype=np.uint64)
        out = run_mcts_batch(mdp, vstar_oracle(mdp), roots, SCHED2, [200], seeds)[200]
        ref = [run_mcts(mdp, vstar_oracle(mdp), r, SCHED2, 200, int(s))[0] for r, s in zip(roots, seeds)]
        assert out.tolist() == ref


class TestBanditReduction:
    @pytest.mark.parametrize("seed", [0, 1, 99, 2 ** 40 + 3])
    @pytest.mark.parametrize("proc", [BernoulliArms([0.6, 0.4]), UniformArms([0.2, 0.5, 0.45], 0.5)])
    def test_gamma_zero_depth_one(self, seed, proc):
        p = UcbParams(10, math.e, 40, 0.5)
        est, tree = run_mcts(bandit_mdp(proc), zero_oracle(), [0.0], ParamSchedule((p,)), 400, seed)
        rec = run_bandit(proc, p, 400, seed)
        assert est == rec.xbar
        assert tuple(tree.N[c] for c in tree.children[0]) == rec.counts


class TestTarget:
    def test_vstar_fixed_point(self):
        mdp = make_benchmark("doubling-1d", 0.5)
        for H in (1, 3):
            assert mcts_target(mdp, vstar_oracle(mdp), [0.2], H) == pytest.approx(float(mdp.v_star(np.array([0.2]))))

    def test_zero_oracle_one_step(self):
        mdp = make_benchmark("doubling-1d", 0.5)
        assert mcts_target(mdp, zero_oracle(), [0.5], 1) == pytest.approx(0.5)

    @pytest.mark.parametrize("H", [1, 2, 3])
    def test_oracle_error_contracts(self, H):
        mdp = make_benchmark("doubling-1d", 0.5)
        o = perturbed_oracle(mdp, 0.5)
        for s in grid(1, 50):
            assert abs(mcts_target(mdp, o, s, H) - float(mdp.v_star(s))) <= mdp.gamma ** H * 0.5 + 1e-9
