import math

import mpmath
import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from accnn.density import (
    GaussianSpec,
    PointAnnotation,
    count_from_density,
    gaussian_kernel,
    ground_truth_density,
    mae,
)


def naive_density(width, height, points, sigma, radius):
    """Per-pixel double loop over the image for every point, each point clipped and renormalised."""
    out = np.zeros((height, width))
    for p in points:
        col, row = int(math.floor(p.x)), int(math.floor(p.y))
        vals = {}
        for i in range(height):
            for j in range(width):
                if abs(i - row) <= radius and abs(j - col) <= radius:
                    vals[i, j] = math.exp(-((i - row) ** 2 + (j - col) ** 2) / (2 * sigma**2))
        total = math.fsum(vals.values())
        for (i, j), v in vals.items():
            out[i, j] += v / total
    return out


class TestKernel:
    def test_near_delta(self):
        k = gaussian_kernel(GaussianSpec(0.2, 1))
        assert k.shape == (3, 3)
        e1, e2 = math.exp(-12.5), math.exp(-25.0)
        assert k[1, 1] == pytest.approx(1 / (1 + 4 * e1 + 4 * e2), rel=1e-14)
        assert k[1, 1] > 0.9999 and k[0, 1] < 1e-5
        assert k.sum() == pytest.approx(1.0, abs=1e-12)

    @given(st.floats(0.1, 10), st.integers(0, 5))
    def test_normalised_and_symmetric(self, sigma, extra):
        spec = GaussianSpec(sigma, math.ceil(3 * sigma) + extra)
        k = gaussian_kernel(spec)
        assert abs(k.sum() - 1) <= 1e-12
        assert np.array_equal(k, k[::-1, :]) and np.array_equal(k, k[:, ::-1]) and np.array_equal(k, k.T)

    def test_center_matches_extended_precision(self):
        mpmath.mp.dps = 40
        total = mpmath.fsum(
            mpmath.exp(-mpmath.mpf(dx * dx + dy * dy) / 8) for dx in range(-6, 7) for dy in range(-6, 7)
        )
        expected = float(1 / total)
        assert gaussian_kernel(GaussianSpec(2.0, 6))[6, 6] == pytest.approx(expected, rel=1e-13)

    def test_default_radius(self):
        assert GaussianSpec(2.5).radius == 8

    @pytest.mark.parametrize("sigma", [0.0, -1.0, math.nan])
    def test_bad_sigma(self, sigma):
        with pytest.raises(ValueError):
            GaussianSpec(sigma)

    def test_radius_too_small(self):
        with pytest.raises(ValueError, match="radius"):
            GaussianSpec(3.0, 5)


class TestGroundTruth:
    def test_empty(self):
        d = ground_truth_density(20, 10, [], GaussianSpec(3))
        assert d.shape == (10, 20) and not d.any()

    @pytest.mark.parametrize("sigma", [0.5, 2, 3, 5, 8])
    def test_single_center_point(self, sigma):
        d = ground_truth_density(31, 31, [PointAnnotation(15.5, 15.5)], GaussianSpec(sigma))
        assert abs(d.sum() - 1) <= 1e-6

    def test_border_points_against_naive(self):
        pts = [
            PointAnnotation(0.3, 12.0),
            PointAnnotation(20.0, 29.6),
            PointAnnotation(10.0, 10.0),
            PointAnnotation(5.5, 22.1),
            PointAnnotation(29.9, 0.5),
        ]
        d = ground_truth_density(30, 30, pts, GaussianSpec(3))
        ref = naive_density(30, 30, pts, 3.0, 9)
        assert abs(d.sum() - 5) <= 1e-6
        assert np.allclose(d, ref, rtol=0, atol=1e-12)

    def test_without_renormalisation_loses_mass_at_border(self):
        d = ground_truth_density(30, 30, [PointAnnotation(0.0, 0.0)], GaussianSpec(3), renormalize=False)
        assert 0.2 < d.sum() < 0.35

    def test_point_outside(self):
        pts = [PointAnnotation(1, 1), PointAnnotation(10, 3), PointAnnotation(-0.1, 2)]
        with pytest.raises(ValueError, match=r"\[1, 2\]"):
            ground_truth_density(10, 10, pts, GaussianSpec(1))

    @settings(max_examples=30, deadline=None)
    @given(st.data())
    def test_mass_and_linearity(self, data):
        w = data.draw(st.integers(4, 60))
        h = data.draw(st.integers(4, 60))
        point = st.builds(
            PointAnnotation,
            st.floats(0, w, exclude_max=True),
            st.floats(0, h, exclude_max=True),
        )
        a = data.draw(st.lists(point, max_size=15))
        b = data.draw(st.lists(point, max_size=15))
        spec = GaussianSpec(data.draw(st.sampled_from([1.0, 2.0, 3.5])))
        da = ground_truth_density(w, h, a, spec)
        db = ground_truth_density(w, h, b, spec)
        dab = ground_truth_density(w, h, a + b, spec)
        assert abs(dab.sum() - len(a) - len(b)) <= 1e-6
        assert np.allclose(dab, da + db, rtol=0, atol=1e-9)
        assert (dab >= 0).all()

    def test_translation_equivariance(self):
        spec = GaussianSpec(2)
        d0 = ground_truth_density(40, 40, [PointAnnotation(15.2, 14.7)], spec)
        d1 = ground_truth_density(40, 40, [PointAnnotation(18.2, 19.7)], spec)
        assert np.array_equal(np.roll(d0, (5, 3), axis=(0, 1)), d1)


class TestCount:
    def test_zero(self):
        assert count_from_density(np.zeros((5, 5))) == 0

    def test_points(self):
        pts = [PointAnnotation(x, y) for x, y in [(1, 1), (5, 5), (9.9, 0), (3, 7)]]
        assert count_from_density(ground_truth_density(10, 10, pts, GaussianSpec(2))) == pytest.approx(4, abs=1e-6)

    def test_kahan_oracle(self):
        rng = np.random.default_rng(0)
        d = rng.random((200, 300)) * 10.0 ** rng.integers(-8, 3, size=(200, 300))
        total, comp = 0.0, 0.0
        for v in d.ravel():
            y = v - comp
            t = total + y
            comp = (t - total) - y
            total = t
        assert count_from_density(d) == pytest.approx(total, rel=1e-9)


class TestMAE:
    def test_identity(self):
        assert mae([1.5, 2, 3], [1.5, 2, 3]) == 0

    def test_two_elements(self):
        assert mae([3, 5], [4, 7]) == 1.5

    def test_random_vs_direct(self):
        rng = np.random.default_rng(1)
        p, t = rng.normal(50, 20, 100), rng.normal(50, 20, 100)
        direct = sum(abs(a - b) for a, b in zip(p.tolist(), t.tolist())) / 100
        assert mae(p, t) == pytest.approx(direct, rel=1e-12)

    @pytest.mark.parametrize("p,t", [([], []), ([1], [1, 2])])
    def test_bad_lengths(self, p, t):
        with pytest.raises(ValueError):
            mae(p, t)

    @given(st.lists(st.tuples(st.floats(-1e6, 1e6), st.floats(-1e6, 1e6)), min_size=1))
    def test_properties(self, pairs):
        p, t = zip(*pairs)
        assert mae(p, t) >= 0
        assert mae(p, t) == mae(t, p)
        assert mae(p, p) == 0


def test_annotation_rejects_bad_size():
    with pytest.raises(ValueError):
        PointAnnotation(1, 1, 0.0)
