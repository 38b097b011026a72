import math

import pytest

from cmmkit.asymptotics import (
    FourierSpectrum,
    GumbelParams,
    fourier_expected_sq_error,
    gumbel_params_leading,
    orthogonal_expected_sq_error,
    orthogonal_leading_order,
    uniform_expected_sq_error,
)


class TestGumbelParams:
    def test_near_e_squared(self):
        p = gumbel_params_leading(7, 1.0)
        assert abs(p.mu - 2.0) / 2.0 < 0.02

    def test_plug_in(self):
        p = gumbel_params_leading(100, 0.3)
        assert p.mu == pytest.approx(0.9105, abs=5e-5)
        assert p.beta == pytest.approx(0.09885, abs=5e-6)

    def test_sigma_scaling(self):
        a = gumbel_params_leading(50, 0.2)
        b = gumbel_params_leading(50, 0.6)
        assert b.mu == pytest.approx(3 * a.mu)
        assert b.beta == pytest.approx(3 * a.beta)

    def test_small_count_rejected(self):
        with pytest.raises(ValueError):
            gumbel_params_leading(1, 0.3)

    def test_beta_positive(self):
        with pytest.raises(ValueError):
            GumbelParams(mu=1.0, beta=0.0)


class TestOrthogonalExpectedSqError:
    def test_identical_directions(self):
        p = GumbelParams(mu=0.9, beta=0.1)
        val = orthogonal_expected_sq_error([p, p, p, p])
        assert val == pytest.approx(math.pi**2 / 6 * 0.01)

    def test_equal_counts_plug_in(self):
        params = [gumbel_params_leading(100, 0.3)] * 4
        val = orthogonal_expected_sq_error(params)
        assert val == pytest.approx(math.pi**2 * 0.09 / (12 * math.log(100)), rel=1e-12)
        assert val == pytest.approx(0.016074, abs=2e-6)

    def test_beta_to_zero_keeps_mu_mismatch(self):
        eps = 1e-9
        params = [
            GumbelParams(1.0, eps),
            GumbelParams(2.0, eps),
            GumbelParams(0.5, eps),
            GumbelParams(1.5, eps),
        ]
        val = orthogonal_expected_sq_error(params)
        assert val == pytest.approx(0.25 * 0.5**2 + 0.25 * 0.5**2, abs=1e-8)

    def test_wrong_arity(self):
        with pytest.raises(ValueError):
            orthogonal_expected_sq_error([GumbelParams(1, 1)] * 3)


class TestOrthogonalLeadingOrder:
    def test_plug_in(self):
        val = orthogonal_leading_order([100] * 4, 0.3)
        assert val == pytest.approx(0.016074, abs=2e-6)

    def test_sigma_quadratic(self):
        a = orthogonal_leading_order([50] * 4, 0.3)
        b = orthogonal_leading_order([50] * 4, 0.6)
        assert b == pytest.approx(4 * a)

    def test_matches_full_formula_for_equal_counts(self):
        for n in (10, 100, 1000):
            params = [gumbel_params_leading(n, 0.3)] * 4
            full = orthogonal_expected_sq_error(params)
            lead = orthogonal_leading_order([n] * 4, 0.3)
            assert abs(full - lead) < 1e-12


class TestUniformExpectedSqError:
    def test_zero_noise(self):
        terms = uniform_expected_sq_error(30, 2.0, [0.0] * 30)
        assert terms.noise == 0.0
        assert terms.total == terms.geometric == pytest.approx(8.0 / 270.0)

    def test_plug_in(self):
        terms = uniform_expected_sq_error(30, 2.0, [0.3] * 30)
        assert terms.geometric == pytest.approx(0.029630, abs=5e-7)
        assert terms.noise == pytest.approx(0.004500, abs=1e-12)
        assert terms.total == pytest.approx(0.034130, abs=5e-7)

    def test_doubling_n_roughly_halves(self):
        a = uniform_expected_sq_error(40, 2.0, [0.3] * 40)
        b = uniform_expected_sq_error(80, 2.0, [0.3] * 80)
        assert 0.45 < b.geometric / a.geometric < 0.55

    def test_dimensional_scaling(self):
        k = 3.0
        a = uniform_expected_sq_error(25, 2.0, [0.3] * 25)
        b = uniform_expected_sq_error(25, 2.0 * k, [0.3 * k] * 25)
        assert b.total == pytest.approx(k * k * a.total, rel=1e-12)


class TestFourierExpectedSqError:
    def test_zero_spectrum_recovers_uniform(self):
        n, w = 50, 2.0
        val = fourier_expected_sq_error(n, w, FourierSpectrum(()))
        assert val == uniform_expected_sq_error(n, w, [0.0] * n).geometric

    def test_quarter_power_mode(self):
        n, w = 200, 2.0
        eps = 1.0 / (4 * math.pi)
        val = fourier_expected_sq_error(n, w, FourierSpectrum.single_mode(eps))
        base = uniform_expected_sq_error(n, w, [0.0] * n).geometric
        assert val / base == pytest.approx(1.25, rel=1e-12)

    def test_linear_in_power(self):
        n, w = 100, 2.0
        base = fourier_expected_sq_error(n, w, FourierSpectrum(()))
        one = fourier_expected_sq_error(n, w, FourierSpectrum((1e-4,)))
        two = fourier_expected_sq_error(n, w, FourierSpectrum((2e-4,)))
        assert two - base == pytest.approx(2 * (one - base), rel=1e-12)

    def test_flat_spectrum_is_strict_minimum(self):
        n, w = 64, 2.0
        base = fourier_expected_sq_error(n, w, FourierSpectrum(()))
        for power in ((1e-8,), (0.0, 1e-6), (1e-5, 1e-5, 1e-5)):
            assert fourier_expected_sq_error(n, w, FourierSpectrum(power)) > base

    def test_spectrum_nonnegativity_guard(self):
        with pytest.raises(ValueError):
            FourierSpectrum((-1e-3,))
        # amplitude bound: 2 sum |C_m| <= 1/2pi
        with pytest.raises(ValueError):
            FourierSpectrum(((1.1 / (4 * math.pi)) ** 2,))
        FourierSpectrum(((1.0 / (4 * math.pi)) ** 2,))  # boundary is allowed

    def test_dimensional_scaling(self):
        k = 2.5
        s = FourierSpectrum.single_mode(0.05)
        a = fourier_expected_sq_error(31, 2.0, s)
        b = fourier_expected_sq_error(31, 2.0 * k, s)
        assert b == pytest.approx(k * k * a, rel=1e-12)
