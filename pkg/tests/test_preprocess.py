import numpy as np
import pytest

from charm.neurocore import EPS_STD, make_rng
from charm.preprocess import ChannelStats, fit_normalizer, normalize, window


class TestFitNormalizer:
    def test_population_std(self):
        stats = fit_normalizer([np.array([[0.0], [2.0]])])
        assert stats.means[0] == 1.0
        assert stats.stds[0] == 1.0

    def test_constant_channel_clamped(self):
        stats = fit_normalizer([np.array([[5.0], [5.0], [5.0]])])
        assert stats.means[0] == 5.0
        assert stats.stds[0] == EPS_STD

    def test_channels_independent(self):
        stats = fit_normalizer([np.array([[0.0, 10.0], [2.0, 10.0]])])
        np.testing.assert_allclose(stats.means, [1.0, 10.0])

    def test_pools_across_segments(self):
        stats = fit_normalizer([np.array([[0.0]]), np.array([[2.0]])])
        assert stats.means[0] == 1.0

    def test_empty_rejected(self):
        with pytest.raises(ValueError):
            fit_normalizer([])


class TestNormalize:
    def test_arithmetic(self):
        stats = ChannelStats(np.array([1.0]), np.array([1.0]))
        np.testing.assert_allclose(
            normalize(np.array([[0.0], [2.0]]), stats), [[-1.0], [1.0]])

    def test_fixed_point(self):
        rng = make_rng(0)
        x = rng.normal(size=(500, 3))
        x = (x - x.mean(axis=0)) / x.std(axis=0)
        stats = fit_normalizer([x])
        np.testing.assert_allclose(normalize(x, stats), x, atol=1e-12)

    def test_constant_channel_maps_to_zero(self):
        x = np.full((4, 1), 7.0)
        out = normalize(x, fit_normalizer([x]))
        np.testing.assert_array_equal(out, 0.0)

    def test_dimension_mismatch(self):
        stats = ChannelStats(np.zeros(2), np.ones(2))
        with pytest.raises(ValueError):
            normalize(np.zeros((3, 4)), stats)

    def test_fit_then_normalize_standardizes(self):
        rng = make_rng(1)
        x = rng.normal(loc=3.0, scale=2.5, size=(400, 5))
        out = normalize(x, fit_normalizer([x]))
        assert np.abs(out.mean(axis=0)).max() < 1e-9
        np.testing.assert_allclose(out.std(axis=0), 1.0, atol=1e-6)


class TestWindow:
    def test_full_scale_count(self):
        assert window(np.zeros((2560, 18)), 16).shape == (160, 16, 18)

    def test_single_window(self):
        x = make_rng(2).normal(size=(16, 3))
        w = window(x, 16)
        assert w.shape == (1, 16, 3)
        np.testing.assert_array_equal(w[0], x)

    def test_trailing_samples_dropped(self):
        w = window(np.arange(66).reshape(33, 2), 16)
        assert w.shape == (2, 16, 2)

    def test_window_then_flatten_reproduces_prefix(self):
        x = make_rng(3).normal(size=(50, 4))
        w = window(x, 8)
        np.testing.assert_array_equal(w.reshape(-1, 4), x[:48])

    def test_too_short_rejected(self):
        with pytest.raises(ValueError):
            window(np.zeros((5, 2)), 16)
