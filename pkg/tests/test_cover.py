from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, strategies as st

from polyuct.cover import (
    ball_index,
    build_cover,
    fit,
    load_model,
    orthant_volume_constant,
    sample_size,
)
from polyuct.errors import ConfigError, ResourceError


class TestCover:
    def test_half_radius_line(self):
        c = build_cover(1, 0.5)
        assert c.centers[:, 0].tolist() == [0, 0.25, 0.5, 0.75, 1]
        assert c.K_count == 5

    def test_square(self):
        assert build_cover(2, 0.5).K_count == 25

    def test_unit_radius(self):
        assert build_cover(1, 1.0).centers[:, 0].tolist() == [0, 0.5, 1]

    def test_lexicographic(self):
        c = build_cover(2, 0.5).centers
        assert [tuple(r) for r in c] == sorted(tuple(r) for r in c)

    def test_rejects_bad_delta(self):
        with pytest.raises(ConfigError):
            build_cover(1, 0)
        with pytest.raises(ConfigError):
            build_cover(1, 1.5)

    def test_center_budget(self):
        with pytest.raises(ResourceError):
            build_cover(3, 0.01, max_centers=1000)

    @pytest.mark.parametrize("d", [1, 2])
    @pytest.mark.parametrize("delta", [0.5, 0.25, 0.125])
    def test_coverage(self, d, delta):
        c = build_cover(d, delta)
        pts = np.random.default_rng(int(d / delta)).random((10_000, d))
        j = ball_index(c, pts)
        dist = np.linalg.norm(pts - c.centers[j], axis=1)
        assert np.all(dist <= delta + 1e-9)

    def test_first_covering_ball(self):
        c = build_cover(1, 0.5)
        assert c.centers[ball_index(c, [0.3])][0] == 0.0
        assert c.centers[ball_index(c, [1.0])][0] == 0.5

    def test_center_membership(self):
        c = build_cover(2, 0.25)
        for k in range(0, c.K_count, 7):
            j = ball_index(c, c.centers[k])
            assert np.linalg.norm(c.centers[j] - c.centers[k]) <= 0.25


class TestRegressor:
    def test_average(self):
        c = build_cover(1, 0.5)
        m = fit(c, [[0.1], [0.05]], [1.0, 3.0])
        assert m.predict([0.1]) == 2.0

    def test_empty_ball_is_zero(self):
        c = build_cover(1, 0.5)
        m = fit(c, [[0.1]], [1.0])
        assert m.predict([0.2]) == 1.0
        assert m.predict([0.9]) == 0.0

    def test_constant_labels(self):
        c = build_cover(2, 0.25)
        pts = np.random.default_rng(0).random((3000, 2))
        m = fit(c, pts, np.full(3000, 0.4))
        out = m(np.random.default_rng(1).random((500, 2)))
        assert np.all(np.isclose(out, 0.4, rtol=1e-12) | (out == 0.0))

    def test_clipping(self):
        c = build_cover(1, 0.5)
        assert fit(c, [[0.0]], [10.0], clip=2.0).predict([0.0]) == 2.0

    def test_idempotent(self):
        c = build_cover(1, 0.25)
        m = fit(c, np.random.default_rng(4).random((50, 1)), np.arange(50.0))
        pts = np.linspace(0, 1, 33)[:, None]
        assert np.array_equal(m(pts), m(pts))

    @given(st.floats(0, 1), st.floats(0, 1))
    def test_piecewise_constant(self, a, b):
        c = build_cover(1, 0.125)
        m = fit(c, np.random.default_rng(5).random((400, 1)), np.random.default_rng(6).random(400))
        if ball_index(c, [a]) == ball_index(c, [b]):
            assert m.predict([a]) == m.predict([b])

    def test_count_conservation(self):
        c = build_cover(2, 0.25)
        m = fit(c, np.random.default_rng(2).random((777, 2)), np.ones(777))
        assert m.counts.sum() == 777

    def test_states_must_be_in_box(self):
        with pytest.raises(ValueError):
            fit(build_cover(1, 0.5), [[1.2]], [0.0])

    def test_csv_roundtrip(self, tmp_path):
        c = build_cover(2, 0.5)
        pts = np.random.default_rng(8).random((90, 2))
        m = fit(c, pts, pts.sum(axis=1), clip=5.0)
        m.write_csv(tmp_path / "m.csv")
        back = load_model(tmp_path / "m.csv", 0.5, clip=5.0)
        q = np.random.default_rng(9).random((200, 2))
        assert np.array_equal(back(q), m(q))


class TestSampleSize:
    def test_orthant_constants(self):
        assert orthant_volume_constant(1) == pytest.approx(1.0)
        assert orthant_volume_constant(2) == pytest.approx(np.pi / 4)

    def test_formula(self):
        # d=1, delta=1/8: K=17 balls, Vmax=2
        expect = np.ceil(32 * 256 * 8 * np.log(17 * 8))
        assert sample_size(0.125, 1, 2.0) == expect
