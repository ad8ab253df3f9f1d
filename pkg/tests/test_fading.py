"""Fading generator and channel-correlation statistics."""

import numpy as np
import pytest
from scipy.stats import kurtosis

from fadetrack.fading import (
    FadingConfig,
    clarke_autocorrelation,
    correlation_factors,
    empirical_autocorrelation,
    generate_fading,
)


def bessel_j0_series(x: float) -> float:
    """Independent power-series oracle: J0(x) = sum (-1)^k (x/2)^(2k) / (k!)^2."""
    total, term, k = 0.0, 1.0, 0
    while abs(term) > 1e-18:
        total += term
        k += 1
        term *= -((x / 2.0) ** 2) / k**2
    return total


class TestClarkeAutocorrelation:
    def test_zero_lag_is_one(self):
        for rate in (0.0, 0.003, 0.01, 0.2):
            assert clarke_autocorrelation(rate, 0) == 1.0

    def test_small_rate_lag_one(self):
        expected = bessel_j0_series(2 * np.pi * 0.01)  # 0.9990133
        assert expected == pytest.approx(0.99901, abs=1e-5)
        assert clarke_autocorrelation(0.01, 1) == pytest.approx(expected, abs=1e-5)

    def test_rate_point_one_lag_four(self):
        # Oracle value of J0(0.8*pi); approximately -0.054960.
        expected = bessel_j0_series(0.8 * np.pi)
        assert expected == pytest.approx(-0.0549604, abs=1e-6)
        assert clarke_autocorrelation(0.1, 4) == pytest.approx(expected, abs=1e-4)

    def test_bounded(self):
        values = [clarke_autocorrelation(0.07, m) for m in range(0, 60)]
        assert all(-1.0 <= v <= 1.0 for v in values)

    def test_negative_lag_rejected(self):
        with pytest.raises(ValueError):
            clarke_autocorrelation(0.01, -1)


class TestGenerateFading:
    def test_zero_doppler_freezes_channel(self):
        seq = generate_fading(FadingConfig(normalized_doppler=0.0, seed=7), 100)
        assert np.allclose(seq.gains, seq.gains[:, :1], rtol=0, atol=1e-12)

    def test_deterministic_given_seed(self):
        cfg = FadingConfig(normalized_doppler=0.01, num_paths=3, seed=7)
        a = generate_fading(cfg, 400)
        b = generate_fading(cfg, 400)
        assert np.array_equal(a.gains, b.gains)

    def test_paths_differ(self):
        seq = generate_fading(FadingConfig(0.01, num_paths=2, seed=1), 50)
        assert not np.allclose(seq.gains[0], seq.gains[1])

    def test_lag_one_autocorrelation_matches_model(self):
        seq = generate_fading(FadingConfig(0.01, seed=7), 1_000_000)
        emp = empirical_autocorrelation(seq.gains[0], 1).real
        assert emp == pytest.approx(bessel_j0_series(0.02 * np.pi), abs=0.01)

    def test_zero_length_rejected(self):
        with pytest.raises(ValueError):
            generate_fading(FadingConfig(0.01, seed=1), 0)

    def test_empty_profile_rejected(self):
        with pytest.raises(ValueError):
            FadingConfig(0.01, num_paths=2, power_profile=())

    def test_profile_must_sum_to_one(self):
        with pytest.raises(ValueError):
            FadingConfig(0.01, num_paths=2, power_profile=(0.7, 0.2))

    def test_path_power_matches_profile(self):
        profile = (0.6, 0.4)
        seq = generate_fading(
            FadingConfig(0.02, num_paths=2, power_profile=profile, seed=3), 200_000)
        for path, power in enumerate(profile):
            sample = np.mean(np.abs(seq.gains[path]) ** 2)
            # Standard error of |h|^2 under Rayleigh fading is power/sqrt(T)
            # inflated by the sample correlation; 3 SE with a generous factor.
            assert abs(sample - power) < 3 * 10 * power / np.sqrt(200_000)


@pytest.fixture(scope="module")
def long_sequence():
    return generate_fading(FadingConfig(0.01, seed=7), 1_000_000)


class TestStatisticalInvariants:
    def test_autocorrelation_lags(self, long_sequence):
        g = long_sequence.gains[0]
        for lag in (1, 2, 5):
            emp = empirical_autocorrelation(g, lag).real
            assert emp == pytest.approx(clarke_autocorrelation(0.01, lag), abs=0.01)

    def test_zero_mean(self, long_sequence):
        g = long_sequence.gains[0]
        assert abs(np.mean(g)) < 4.0 / np.sqrt(g.size)

    def test_marginal_near_gaussian(self, long_sequence):
        k = kurtosis(long_sequence.gains[0].real, fisher=False)
        assert 2.8 <= k <= 3.2


class TestCorrelationFactors:
    def test_static_channel_fully_correlated(self):
        profile = (0.5, 0.3, 0.2)
        seq = generate_fading(
            FadingConfig(0.0, num_paths=3, power_profile=profile, seed=2), 10)
        assert correlation_factors(seq, 5) == (0.5, 0.5, 0.5)

    def test_small_rate_values(self):
        seq = generate_fading(FadingConfig(0.01, seed=4), 10)
        f1, f2, f3 = correlation_factors(seq, 4)
        assert f1 == pytest.approx(0.99901, abs=1e-4)
        assert f2 == pytest.approx(0.99606, abs=1e-4)
        assert f3 == pytest.approx(0.99901, abs=1e-4)

    def test_factors_nearly_equal_at_slow_fading(self):
        seq = generate_fading(FadingConfig(0.01, seed=4), 10)
        f1, f2, f3 = correlation_factors(seq, 3)
        assert abs(f1 - f2) < 0.005
        assert abs(f1 - f3) < 0.005

    def test_index_invariant(self):
        seq = generate_fading(FadingConfig(0.015, seed=9), 600)
        assert correlation_factors(seq, 2) == correlation_factors(seq, 599)

    def test_index_out_of_range(self):
        seq = generate_fading(FadingConfig(0.01, seed=1), 10)
        with pytest.raises(ValueError):
            correlation_factors(seq, 1)
        with pytest.raises(ValueError):
            correlation_factors(seq, 10)
