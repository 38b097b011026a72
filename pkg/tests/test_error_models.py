import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import integrate, stats

from cmmkit.error_models import (
    AngleDistribution,
    GapSet,
    InvalidDistributionError,
    NoiseModel,
    angle_gaps,
    gap_pdf_asymptotic,
    gap_pdf_circle_exact,
    gap_pdf_uniform_exact,
    read_angle_histogram,
    sample_angles,
    sample_noncommon,
    write_angle_histogram,
)

TWO_PI = 2 * math.pi


class TestNoiseModel:
    def test_zero_sigma_gives_zero_vectors(self):
        model = NoiseModel.constant(0.0, 5)
        draws = sample_noncommon(model, 5, seed=1)
        assert draws.shape == (5, 2)
        assert np.all(draws == 0.0)

    def test_component_variance(self):
        model = NoiseModel.constant(0.3, 1_000_000)
        draws = sample_noncommon(model, 1_000_000, seed=2)
        var = draws.var(axis=0)
        assert np.all(np.abs(var - 0.09) / 0.09 < 0.005)

    def test_seed_determinism(self):
        model = NoiseModel((0.1, 0.5, 1.0))
        a = sample_noncommon(model, 3, 42, 7)
        b = sample_noncommon(model, 3, 42, 7)
        assert np.array_equal(a, b)
        c = sample_noncommon(model, 3, 43, 7)
        assert not np.array_equal(a, c)

    def test_negative_sigma_rejected(self):
        with pytest.raises(ValueError):
            NoiseModel((-0.1,))

    def test_size_mismatch(self):
        with pytest.raises(ValueError):
            sample_noncommon(NoiseModel.constant(1.0, 3), 4, seed=0)


class TestSampleAngles:
    def test_uniform_ks(self):
        draws = sample_angles(AngleDistribution.uniform(), 1_000_000, seed=3)
        assert np.all(np.diff(draws) >= 0)
        stat = stats.kstest(draws / TWO_PI, "uniform").statistic
        assert stat < 0.01

    def test_orthogonal_counts_binomial(self):
        n = 40_000
        draws = sample_angles(AngleDistribution.orthogonal(), n, seed=4)
        for d in (0.0, math.pi / 2, math.pi, 3 * math.pi / 2):
            count = int((draws == d).sum())
            # Binomial(n, 1/4): five sigma band
            sd = math.sqrt(n * 0.25 * 0.75)
            assert abs(count - n / 4) < 5 * sd

    def test_fourier_density_at_zero(self):
        eps = 1.0 / (4 * math.pi)
        dist = AngleDistribution.single_mode(eps)
        draws = sample_angles(dist, 1_000_000, seed=5)
        width = 0.1
        frac = ((draws < width / 2) | (draws > TWO_PI - width / 2)).mean()
        density = frac / width
        assert abs(density - 1.0 / math.pi) / (1.0 / math.pi) < 0.03

    def test_fourier_zero_coefficients_match_uniform(self):
        a = sample_angles(AngleDistribution.fourier([0.0]), 100_000, seed=6)
        b = sample_angles(AngleDistribution.uniform(), 100_000, seed=7)
        assert stats.ks_2samp(a, b).pvalue > 0.01

    def test_negative_density_rejected(self):
        with pytest.raises(InvalidDistributionError):
            AngleDistribution.single_mode(0.5)  # density dips below zero

    def test_empirical_sampling_and_roundtrip(self, tmp_path):
        centers = [(k + 0.5) * TWO_PI / 8 for k in range(8)]
        probs = [0.5, 0.5, 0, 0, 0, 0, 0, 0]
        dist = AngleDistribution.empirical(centers, probs)
        draws = sample_angles(dist, 10_000, seed=8)
        assert draws.max() < 2 * TWO_PI / 8
        path = tmp_path / "hist.csv"
        write_angle_histogram(path, dist)
        back = read_angle_histogram(path)
        assert back.bin_centers == dist.bin_centers
        assert back.bin_probs == dist.bin_probs


class TestAngleGaps:
    def test_orthogonal_gaps(self):
        gaps = angle_gaps([0.0, math.pi / 2, math.pi, 3 * math.pi / 2]).gaps
        assert np.allclose(gaps, math.pi / 2)

    def test_two_angles(self):
        gaps = angle_gaps([0.0, math.pi]).gaps
        assert np.allclose(gaps, [math.pi, math.pi])

    def test_mean_gap(self):
        draws = sample_angles(AngleDistribution.uniform(), 1000, seed=9)
        gaps = angle_gaps(draws).gaps
        assert abs(gaps.mean() - TWO_PI / 1000) / (TWO_PI / 1000) < 0.05

    def test_unsorted_rejected(self):
        with pytest.raises(ValueError):
            angle_gaps([1.0, 0.5])

    @settings(max_examples=50, deadline=None)
    @given(st.integers(0, 10_000), st.integers(2, 500))
    def test_gaps_sum_to_two_pi(self, seed, n):
        draws = sample_angles(AngleDistribution.uniform(), n, seed=seed)
        assert angle_gaps(draws).total() == pytest.approx(TWO_PI, abs=1e-12)

    def test_gapset_validates(self):
        with pytest.raises(ValueError):
            GapSet(np.array([-0.1, 0.2]))


class TestGapPdfs:
    def test_asymptotic_at_origin(self):
        assert gap_pdf_asymptotic(0.0, 50, 1.0 / TWO_PI) == pytest.approx(100.0 / TWO_PI)

    def test_asymptotic_normalization(self):
        val, _ = integrate.quad(lambda g: gap_pdf_asymptotic(g, 30, 1.0 / TWO_PI), 0, np.inf)
        assert val == pytest.approx(1.0, abs=1e-9)

    def test_asymptotic_second_moment(self):
        n, p = 25, 1.0 / TWO_PI
        val, _ = integrate.quad(lambda g: g * g * gap_pdf_asymptotic(g, n, p), 0, np.inf)
        assert val == pytest.approx(1.0 / (2 * n * n * p * p), rel=1e-9)

    def test_uniform_exact_at_origin(self):
        assert gap_pdf_uniform_exact(0.0, 40) == pytest.approx(40.0 / math.pi)

    def test_uniform_exact_normalization(self):
        val, _ = integrate.quad(lambda g: gap_pdf_uniform_exact(g, 17), 0, math.pi)
        assert val == pytest.approx(1.0, abs=1e-9)

    def test_uniform_exact_second_moment(self):
        n = 17
        val, _ = integrate.quad(lambda g: g * g * gap_pdf_uniform_exact(g, n), 0, math.pi)
        assert val == pytest.approx(2 * math.pi**2 / ((n + 1) * (n + 2)), rel=1e-9)

    def test_uniform_exact_out_of_range(self):
        assert gap_pdf_uniform_exact(-0.1, 10) == 0.0
        assert gap_pdf_uniform_exact(math.pi + 0.1, 10) == 0.0

    def test_circle_exact_moments(self):
        n = 23
        val, _ = integrate.quad(lambda g: g * gap_pdf_circle_exact(g, n), 0, TWO_PI)
        assert val == pytest.approx(TWO_PI / n, rel=1e-9)

    def test_half_circle_law_matches_doubled_rate_exponential(self):
        # The two model densities agree for small gaps when the
        # exponential is evaluated at the base circle density 1/2pi:
        # both start at N/pi and share the e^{-N g / pi} decay.
        n = 1000
        gaps = np.linspace(0.0, 3.0 / n, 50)
        exact = gap_pdf_uniform_exact(gaps, n)
        asym = gap_pdf_asymptotic(gaps, n, 1.0 / TWO_PI)
        rel = np.abs(exact - asym) / exact
        assert rel.max() < 0.02

    def test_asymptotic_with_doubled_density_differs_at_origin(self):
        # Plugging p = 1/pi doubles the rate and the origin density,
        # so it cannot match the half-circle law pointwise.
        n = 1000
        assert gap_pdf_asymptotic(0.0, n, 1.0 / math.pi) == pytest.approx(
            2.0 * gap_pdf_uniform_exact(0.0, n), rel=1e-12
        )


class TestDistributionValidation:
    def test_orthogonal_weight_validation(self):
        with pytest.raises(InvalidDistributionError):
            AngleDistribution.orthogonal([1, 1, 1])
        with pytest.raises(InvalidDistributionError):
            AngleDistribution.orthogonal([-1, 1, 1, 1])

    def test_empirical_probability_validation(self):
        with pytest.raises(InvalidDistributionError):
            AngleDistribution.empirical([0.1, 0.2], [0.7, 0.7])
