"""Fixed-radius ball cover of ``[0, 1]^d`` and the ball-averaging regressor."""
from __future__ import annotations

import csv
import itertools
import math
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, ResourceError

DEFAULT_CENTER_BUDGET = 1 << 20
_CHUNK = 1 << 16
# tolerance on squared distances; grid centres like 1 - δi/2 carry rounding error
_D2_SLACK = 1e-12


def grid_offsets(delta: float) -> np.ndarray:
    """Sorted, de-duplicated ``{δi/2} ∪ {1 - δi/2}`` for ``0 <= i <= floor(2/δ)``."""
    top = math.floor(2.0 / delta + 1e-9)
    i = np.arange(top + 1)
    vals = np.concatenate([delta * i / 2.0, 1.0 - delta * i / 2.0])
    return np.unique(np.round(vals, 12))


@dataclass(frozen=True)
class BallCover:
    d: int
    delta: float
    centers: np.ndarray  # (K_count, d), lexicographic order

    @property
    def K_count(self) -> int:
        return len(self.centers)


def build_cover(d: int, delta: float, max_centers: int = DEFAULT_CENTER_BUDGET) -> BallCover:
    if d < 1:
        raise ConfigError("dimension must be at least 1")
    if not 0 < delta <= 1:
        raise ConfigError(f"delta must lie in (0, 1], got {delta}")
    q = grid_offsets(delta)
    if len(q) ** d > max_centers:
        raise ResourceError(f"cover needs {len(q) ** d} centres, budget is {max_centers}")
    centers = np.array(list(itertools.product(q, repeat=d)), dtype=float).reshape(-1, d)
    return BallCover(d, float(delta), centers)


def ball_index(cover: BallCover, s):
    """Index of the first centre (in canonical order) within ``delta`` of each state."""
    s = np.asarray(s, dtype=float)
    if s.shape[-1:] != (cover.d,):
        raise ValueError(f"state must have trailing dimension {cover.d}")
    flat = s.reshape(-1, cover.d)
    out = np.empty(len(flat), dtype=np.int64)
    r2 = cover.delta ** 2 + _D2_SLACK
    for lo in range(0, len(flat), _CHUNK):
        pts = flat[lo:lo + _CHUNK]
        d2 = np.zeros((len(pts), cover.K_count))
        for k in range(cover.d):
            d2 += (pts[:, k, None] - cover.centers[None, :, k]) ** 2
        inside = d2 <= r2
        j = np.argmax(inside, axis=1)
        if not inside[np.arange(len(pts)), j].all():
            raise RuntimeError("state not covered by any ball")
        out[lo:lo + _CHUNK] = j
    if s.ndim == 1:
        return int(out[0])
    return out.reshape(s.shape[:-1])


class NnModel:
    """Piecewise-constant regressor: the average label of the state's ball, 0 for an empty ball.

    Predictions are clipped to ``[-clip, clip]`` when ``clip`` is given.  The
    model is a value oracle: calling it evaluates :meth:`predict`.
    """

    declared_error = None

    def __init__(self, cover: BallCover, sums: np.ndarray, counts: np.ndarray, clip: float | None = None, declared_bound: float | None = None):
        self.cover = cover
        self.sums = np.asarray(sums, dtype=float)
        self.counts = np.asarray(counts, dtype=np.int64)
        self.clip = clip
        means = np.zeros(cover.K_count)
        nz = self.counts > 0
        means[nz] = self.sums[nz] / self.counts[nz]
        if clip is not None:
            means = np.clip(means, -clip, clip)
        self._means = means
        if declared_bound is None:
            declared_bound = float(np.max(np.abs(means))) if nz.any() else 0.0
        self.declared_bound = declared_bound

    def predict(self, s):
        j = ball_index(self.cover, s)
        return self._means[j] if np.ndim(j) else float(self._means[j])

    __call__ = predict

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow([*[f"c{k}" for k in range(self.cover.d)], "count", "sum"])
            for c, n, s in zip(self.cover.centers, self.counts, self.sums):
                w.writerow([*map(repr, c.tolist()), int(n), repr(float(s))])


def fit(cover: BallCover, states, labels, clip: float | None = None) -> NnModel:
    """Aggregate labels per ball.  ``clip`` (typically ``Vmax``) also becomes the declared bound."""
    labels = np.asarray(labels, dtype=float).ravel()
    states = np.asarray(states, dtype=float).reshape(len(labels), cover.d) if len(labels) else np.zeros((0, cover.d))
    if np.any((states < 0) | (states > 1)):
        raise ValueError("sample states must lie in [0, 1]^d")
    j = ball_index(cover, states) if len(labels) else np.zeros(0, dtype=np.int64)
    sums = np.bincount(j, weights=labels, minlength=cover.K_count)
    counts = np.bincount(j, minlength=cover.K_count)
    return NnModel(cover, sums, counts, clip=clip, declared_bound=clip)


def load_model(path, delta: float, clip: float | None = None) -> NnModel:
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    d = len(rows[0]) - 2
    cover = build_cover(d, delta)
    body = rows[1:]
    centers = np.array([[float(x) for x in r[:d]] for r in body]).reshape(-1, d)
    if centers.shape != cover.centers.shape or not np.allclose(centers, cover.centers, atol=1e-12):
        raise ValueError("model file does not match the cover for this delta")
    counts = np.array([int(r[d]) for r in body])
    sums = np.array([float(r[d + 1]) for r in body])
    return NnModel(cover, sums, counts, clip=clip, declared_bound=clip)


def orthant_volume_constant(d: int) -> float:
    """Volume of one orthant of the unit ``d``-ball: a lower bound on ``vol(ball ∩ [0,1]^d) / δ^d``."""
    return math.pi ** (d / 2) / math.gamma(d / 2 + 1) / 2 ** d


def sample_size(delta: float, d: int, vmax: float, c_d: float | None = None) -> int:
    """Samples needed for the sup-norm guarantee of the ball-averaging regressor.

    ``ceil(32 · max(1, Vmax²/δ²) · δ^-d · log(K/δ) / C_d)`` with ``K`` the
    number of balls in the cover.
    """
    c_d = orthant_volume_constant(d) if c_d is None else c_d
    k = len(grid_offsets(delta)) ** d
    return math.ceil(32 * max(1.0, vmax ** 2 / delta ** 2) / c_d * delta ** (-d) * math.log(k / delta))
