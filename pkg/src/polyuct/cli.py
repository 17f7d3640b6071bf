"""``polyuct run --config exp.json``: config-driven experiments that write CSV artifacts.

A config is a JSON object with ``command`` (one of bandit, mcts, nn,
pipeline, tail, constants), a 64-bit ``seed``, a ``replicas`` count and a
parameter block named after the command.  Exit codes: 0 success, 2 invalid
configuration, 3 resource limit hit.
"""
from __future__ import annotations

import argparse
import csv
import hashlib
import io
import json
import math
import os
import sys
import tempfile
import time
from concurrent.futures import ProcessPoolExecutor
from importlib import metadata
from pathlib import Path

import numpy as np

from . import bandit as bd
from . import diagnostics as dg
from .cover import build_cover, fit
from .errors import ConfigError, ResourceError
from .mcts import mcts_target, run_mcts, run_mcts_batch, schedule_params
from .mdp import constant_oracle, grid, make_benchmark, perturbed_oracle, vstar_oracle, zero_oracle
from .pipeline import IterationReport, PipelineConfig, run_pipeline
from .streams import replica_seed, uniform

COMMANDS = ("bandit", "mcts", "nn", "pipeline", "tail", "constants")
SEED_ENV = "POLYUCT_SEED"
_BATCH_NODE_LIMIT = 4096


def tool_version() -> str:
    try:
        return metadata.version("polyuct")
    except metadata.PackageNotFoundError:
        return "unknown"


# --------------------------------------------------------------------------
# config helpers


def _need(block: dict, key: str, where: str):
    if key not in block:
        raise ConfigError(f"{where}: missing required field {key!r}")
    return block[key]


def _seed(value) -> int:
    try:
        seed = int(value)
    except (TypeError, ValueError):
        raise ConfigError(f"seed must be an integer, got {value!r}") from None
    if not 0 <= seed < 2 ** 64:
        raise ConfigError("seed must fit in 64 unsigned bits")
    return seed


def load_config(path) -> dict:
    try:
        cfg = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    if not isinstance(cfg, dict):
        raise ConfigError("config must be a JSON object")
    cmd = _need(cfg, "command", "config")
    if cmd not in COMMANDS:
        raise ConfigError(f"unknown command {cmd!r}; expected one of {', '.join(COMMANDS)}")
    if not isinstance(_need(cfg, cmd, "config"), dict):
        raise ConfigError(f"block {cmd!r} must be an object")
    cfg["seed"] = _seed(_need(cfg, "seed", "config"))
    env = os.environ.get(SEED_ENV)
    if env:
        cfg["seed"] = _seed(env)
    return cfg


def config_hash(cfg: dict) -> str:
    return hashlib.sha256(json.dumps(cfg, sort_keys=True, separators=(",", ":")).encode()).hexdigest()


def make_process(block: dict) -> bd.RewardProcess:
    kind = _need(block, "kind", "arms")
    if kind == "bernoulli":
        return bd.BernoulliArms(_need(block, "means", "arms"))
    if kind == "uniform":
        return bd.UniformArms(_need(block, "means", "arms"), _need(block, "half_width", "arms"))
    if kind == "deterministic":
        return bd.DeterministicArms(_need(block, "values", "arms"))
    if kind == "drifting":
        return bd.DriftingArms(_need(block, "mu", "arms"), _need(block, "c", "arms"), _need(block, "eta", "arms"), block.get("noise", 0.0))
    raise ConfigError(f"unknown arm kind {kind!r}")


def make_params(block: dict) -> bd.UcbParams:
    return bd.UcbParams(
        alpha=float(_need(block, "alpha", "params")),
        beta=float(_need(block, "beta", "params")),
        xi=float(_need(block, "xi", "params")),
        eta=float(_need(block, "eta", "params")),
    )


def make_mdp(block: dict):
    return make_benchmark(_need(block, "benchmark", "mdp"), float(_need(block, "gamma", "mdp")), float(block.get("noise", 0.0)))


def make_oracle(block: dict | None, mdp):
    block = block or {"kind": "vstar"}
    kind = _need(block, "kind", "oracle")
    if kind == "vstar":
        return vstar_oracle(mdp)
    if kind == "zero":
        return zero_oracle(mdp.vmax)
    if kind == "constant":
        return constant_oracle(float(_need(block, "value", "oracle")))
    if kind == "perturbed":
        return perturbed_oracle(mdp, float(_need(block, "eps", "oracle")), int(block.get("freq", 3)))
    raise ConfigError(f"unknown oracle kind {kind!r}")


def _horizons(block: dict, where: str) -> list[int]:
    hs = [int(h) for h in _need(block, "horizons", where)]
    if not hs or min(hs) < 1:
        raise ConfigError(f"{where}: horizons must be positive integers")
    return sorted(set(hs))


def _replicas(cfg: dict) -> int:
    m = int(cfg.get("replicas", 1))
    if m < 1:
        raise ConfigError("replicas must be at least 1")
    return m


# --------------------------------------------------------------------------
# output


class Artifacts:
    """Collects CSV tables in memory and commits each with an atomic rename."""

    def __init__(self, out_dir: Path):
        self.out_dir = out_dir
        self.written: list[str] = []

    def table(self, name: str, header, rows) -> None:
        buf = io.StringIO(newline="")
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)
        self.put(name, buf.getvalue())

    def put(self, name: str, text: str) -> None:
        self.out_dir.mkdir(parents=True, exist_ok=True)
        fd, tmp = tempfile.mkstemp(dir=self.out_dir, prefix=f".{name}.", suffix=".tmp")
        try:
            with os.fdopen(fd, "w", newline="") as fh:
                fh.write(text)
            os.replace(tmp, self.out_dir / name)
        except BaseException:
            if os.path.exists(tmp):
                os.unlink(tmp)
            raise
        self.written.append(name)

    def put_via(self, name: str, writer) -> None:
        # for objects that know how to write themselves to a path
        self.out_dir.mkdir(parents=True, exist_ok=True)
        fd, tmp = tempfile.mkstemp(dir=self.out_dir, prefix=f".{name}.", suffix=".tmp")
        os.close(fd)
        try:
            writer(tmp)
            os.replace(tmp, self.out_dir / name)
        except BaseException:
            if os.path.exists(tmp):
                os.unlink(tmp)
            raise
        self.written.append(name)


def _tail_rows(te: dg.TailEstimate):
    return [
        [repr(float(z)), repr(float(pu)), repr(float(pl)), repr(float(su)), repr(float(sl))]
        for z, pu, pl, su, sl in zip(te.z, te.p_upper, te.p_lower, te.se_upper, te.se_lower)
    ]


TAIL_HEADER = ["z", "p_hat_upper", "p_hat_lower", "se_upper", "se_lower"]
RATE_HEADER = ["n", "abs_bias", "se"]


def _rate_rows(points):
    return [[pt.n, repr(pt.abs_bias), repr(pt.se)] for pt in points]


# --------------------------------------------------------------------------
# commands


def cmd_bandit(cfg: dict, art: Artifacts, threads: int, dump_tree: bool) -> None:
    block = cfg["bandit"]
    proc = make_process(_need(block, "arms", "bandit"))
    p = make_params(_need(block, "params", "bandit"))
    hs = _horizons(block, "bandit")
    tail = block.get("tail")
    if proc.declared_mu is None:
        raise ConfigError("bandit: arms must declare limit means")
    M = _replicas(cfg)
    cps = hs + ([int(_need(tail, "n", "tail"))] if tail else [])
    rec = bd.run_bandit_replicas(proc, p, bd.replica_seeds(cfg["seed"], M), cps)
    mu_star = float(np.max(proc.declared_mu))
    art.table("rate.csv", RATE_HEADER, _rate_rows(dg.bias_curve({n: rec.xbar[n] for n in hs}, mu_star)))
    if tail:
        n = int(tail["n"])
        te = dg.estimate_tail(rec.xbar[n], n, mu_star, float(tail.get("eta_prime", p.alpha / (p.xi * (1 - p.eta)))), tail.get("z_grid", _default_z()))
        art.table("tail.csv", TAIL_HEADER, _tail_rows(te))
    n_last = hs[-1]
    art.table("runs.csv", bd.RunRecord.csv_header(proc.K), [r.csv_row() for r in rec.records(n_last)])


def _default_z() -> list[float]:
    return [1.0 + 0.25 * i for i in range(21)]


def cmd_tail(cfg: dict, art: Artifacts, threads: int, dump_tree: bool) -> None:
    block = cfg["tail"]
    proc = make_process(_need(block, "arms", "tail"))
    p = make_params(_need(block, "params", "tail"))
    n = int(_need(block, "n", "tail"))
    eta_prime = block.get("eta_prime")
    te = dg.bandit_tail(proc, p, n, _replicas(cfg), cfg["seed"], block.get("z_grid", _default_z()), eta_prime)
    art.table("tail.csv", TAIL_HEADER, _tail_rows(te))
    rows = []
    for side in ("upper", "lower"):
        f = te.fit(side, int(block.get("min_count", 20)))
        if f is None:
            rows.append([side, "", "", "", 0])
        else:
            rows.append([side, repr(f.window[0]), repr(f.window[1]), repr(f.fit.slope), f.points])
    art.table("tail_fit.csv", ["tail", "z_lo", "z_hi", "slope", "points"], rows)


def _mcts_setup(block: dict):
    mdp = make_mdp(_need(block, "mdp", "mcts"))
    oracle = make_oracle(block.get("oracle"), mdp)
    H = int(_need(block, "H", "mcts"))
    sched = schedule_params(H, float(_need(block, "xi_H", "mcts")), float(block.get("eta", 0.5)), float(block.get("beta", math.e)))
    root = np.asarray(_need(block, "root", "mcts"), dtype=float).reshape(mdp.d)
    return mdp, oracle, sched, root


def _mcts_chunk(block: dict, seeds: list[int], hs: list[int]) -> list[list[float]]:
    mdp, oracle, sched, root = _mcts_setup(block)
    out = []
    for s in seeds:
        _, tree = run_mcts(mdp, oracle, root, sched, hs[-1], s, checkpoints=hs)
        out.append([tree.checkpoints[h] for h in hs])
    return out


def cmd_mcts(cfg: dict, art: Artifacts, threads: int, dump_tree: bool) -> None:
    block = cfg["mcts"]
    mdp, oracle, sched, root = _mcts_setup(block)
    hs = _horizons(block, "mcts")
    M = _replicas(cfg)
    seeds = [replica_seed(cfg["seed"], r) for r in range(M)]
    target = mcts_target(mdp, oracle, root, sched.H)
    if mdp.K ** sched.H <= _BATCH_NODE_LIMIT:
        est = run_mcts_batch(mdp, oracle, np.repeat(root[None, :], M, axis=0), sched, hs, np.array(seeds, dtype=np.uint64))
    else:
        chunks = [seeds[i::threads] for i in range(threads)]
        if threads > 1:
            with ProcessPoolExecutor(threads) as ex:
                parts = list(ex.map(_mcts_chunk, [block] * threads, chunks, [hs] * threads))
        else:
            parts = [_mcts_chunk(block, seeds, hs)]
        vals = np.empty((M, len(hs)))
        for i, part in enumerate(parts):
            vals[i::len(parts)] = part
        est = {h: vals[:, j] for j, h in enumerate(hs)}
    art.table("rate.csv", RATE_HEADER, _rate_rows(dg.bias_curve(est, target)))
    if dump_tree:
        _, tree = run_mcts(mdp, oracle, root, sched, hs[-1], seeds[0])
        art.put_via("tree.csv", tree.write_csv)


def cmd_nn(cfg: dict, art: Artifacts, threads: int, dump_tree: bool) -> None:
    block = cfg["nn"]
    mdp = make_mdp(_need(block, "mdp", "nn"))
    if mdp.v_star is None:
        raise ConfigError("nn: benchmark must have a closed-form value for labels")
    delta = float(_need(block, "delta", "nn"))
    m = int(_need(block, "m", "nn"))
    if m < 1:
        raise ConfigError("nn: m must be positive")
    cover = build_cover(mdp.d, delta)
    i = np.arange(m, dtype=np.uint64)[:, None]
    k = np.arange(mdp.d, dtype=np.uint64)[None, :]
    states = uniform(cfg["seed"], 0, i, k)
    model = fit(cover, states, mdp.v_star(states), clip=mdp.vmax)
    pts = grid(mdp.d, int(block.get("grid_size", 200)))
    err = float(np.max(np.abs(model(pts) - mdp.v_star(pts))))
    art.put_via("nn_model.csv", model.write_csv)
    art.table("nn_report.csv", ["d", "delta", "K", "m", "sup_error"], [[mdp.d, repr(delta), cover.K_count, m, repr(err)]])


def cmd_pipeline(cfg: dict, art: Artifacts, threads: int, dump_tree: bool) -> None:
    block = dict(cfg["pipeline"])
    mdp = make_mdp(_need(block, "mdp", "pipeline"))
    keys = ("eta", "xi_H", "beta", "C_prime", "C_d", "kappa", "m_cap", "m", "n", "delta", "H", "grid_size", "max_transitions")
    extra = {k: block[k] for k in keys if k in block}
    pc = PipelineConfig(mdp=mdp, epsilon=float(_need(block, "epsilon", "pipeline")), L=int(_need(block, "L", "pipeline")), seed=cfg["seed"], **extra)
    reports = run_pipeline(pc)
    art.table("pipeline_report.csv", IterationReport.CSV_HEADER, [r.csv_row() for r in reports])


def cmd_constants(cfg: dict, art: Artifacts, threads: int, dump_tree: bool) -> None:
    block = cfg["constants"]
    proc = make_process(_need(block, "arms", "constants"))
    p = make_params(_need(block, "params", "constants"))
    info = dg.InstanceInfo.from_process(proc)
    c = dg.concentration_constants(info, p)
    rows = [[k, repr(float(v)) if isinstance(v, float) else v] for k, v in vars(c).items()]
    for n in block.get("horizons", []):
        n = int(n)
        rows.append([f"convergence_bound@{n}", repr(dg.convergence_bound(info, p, n))])
        rows.append([f"r0@{n}", repr(dg.r0(info, p, n))])
    art.table("constants.csv", ["name", "value"], rows)


HANDLERS = {
    "bandit": cmd_bandit, "mcts": cmd_mcts, "nn": cmd_nn,
    "pipeline": cmd_pipeline, "tail": cmd_tail, "constants": cmd_constants,
}


def run(config_path, out_dir, threads: int | None = None, dump_tree: bool = False) -> int:
    t0 = time.perf_counter()
    try:
        cfg = load_config(config_path)
        threads = threads or os.cpu_count() or 1
        if threads < 1:
            raise ConfigError("--threads must be positive")
        if dump_tree and cfg["command"] != "mcts":
            raise ConfigError("--dump-tree only applies to the mcts command")
        art = Artifacts(Path(out_dir))
        HANDLERS[cfg["command"]](cfg, art, threads, dump_tree)
    except (ConfigError, ValueError, TypeError) as exc:
        print(f"polyuct: invalid configuration: {exc}", file=sys.stderr)
        return 2
    except ResourceError as exc:
        print(f"polyuct: resource limit: {exc}", file=sys.stderr)
        return 3
    art.table("manifest.csv", ["key", "value"], [
        ["command", cfg["command"]],
        ["config_sha256", config_hash(cfg)],
        ["seed", cfg["seed"]],
        ["version", tool_version()],
        ["files", ";".join(art.written)],
        ["wall_seconds", f"{time.perf_counter() - t0:.3f}"],
    ])
    return 0


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(prog="polyuct", description="Run polynomial-bonus UCT experiments from JSON configs.")
    sub = ap.add_subparsers(dest="action", required=True)
    r = sub.add_parser("run", help="run one experiment from a JSON config")
    r.add_argument("config_pos", nargs="?", metavar="CONFIG")
    r.add_argument("--config", dest="config")
    r.add_argument("--threads", type=int, default=None, help="worker processes (default: CPU count)")
    r.add_argument("--out", default=".", help="output directory")
    r.add_argument("--dump-tree", action="store_true", help="mcts only: write tree.csv for replica 0")
    args = ap.parse_args(argv)
    path = args.config or args.config_pos
    if path is None:
        ap.error("a config file is required")
    return run(path, args.out, args.threads, args.dump_tree)


if __name__ == "__main__":
    sys.exit(main())
