import numpy as np
import pytest

from widelin import estimators as est
from widelin import measurement as meas
from widelin.algebra import ComplexLinearModel, NoiseStats, ValidationError, build_augmented_covariance


def sample_converted_moments(a, phi, sigma_a2, sigma_phi2, draws, seed):
    """Sample variance and pseudo-variance of simulated polar measurements,
    centred on their exact mean ``alpha a exp(j phi)``."""
    rng = np.random.default_rng(seed)
    response = np.array([0.0, a * np.exp(1j * phi)])
    _, y_a, y_phi = meas.polar_from_normals(
        response, [0.0, sigma_a2], [0.0, sigma_phi2], 0.0,
        rng.standard_normal((draws, 1)), rng.standard_normal((draws, 1)))
    y = y_a[:, 0] * np.exp(1j * y_phi[:, 0])
    e = y - np.exp(-sigma_phi2 / 2) * a * np.exp(1j * phi)
    return np.mean(np.abs(e) ** 2), np.mean(e * e)


def noisy_draw(rng, sigma_a2=1e-3, sigma_phi2=1e-1, n_y=10, t_s=1.0):
    h = meas.fir_lowpass_response(rng.standard_normal(9))
    sa = np.full(n_y, sigma_a2)
    sp = np.full(n_y, sigma_phi2)
    y0, polar = meas.gen_polar_measurements(h, t_s, sa, sp, rng)
    return h, y0, polar, sa, sp


class TestExpModelMatrix:
    def test_zero_frequency(self):
        np.testing.assert_array_equal(meas.exp_model_matrix([0.0], 4), np.ones((4, 1)))

    def test_first_entry_uses_k_equal_one(self):
        h = meas.exp_model_matrix([0.1, 0.2], 20)
        assert h.shape == (20, 2)
        assert h[0, 0] == pytest.approx(np.exp(0.1j))
        assert h[19, 1] == pytest.approx(np.exp(4j))

    def test_pi(self):
        np.testing.assert_allclose(meas.exp_model_matrix([np.pi], 2), [[-1], [1]], atol=1e-15)


class TestImproperNoise:
    def test_rho_zero_is_real(self):
        z = meas.gen_improper_noise(meas.ImproperNoiseSpec(0.0, 5), np.random.default_rng(0))
        assert np.all(z.imag == 0)

    def test_rho_one_is_imaginary(self):
        z = meas.gen_improper_noise(meas.ImproperNoiseSpec(1.0, 5), np.random.default_rng(0))
        assert np.all(z.real == 0)

    @pytest.mark.parametrize("rho", [0.0, 0.3, 1 / np.sqrt(2), 1.0])
    def test_moments(self, rho):
        draws = 10**6
        z = meas.gen_improper_noise(meas.ImproperNoiseSpec(rho, 1), np.random.default_rng(1),
                                    draws)[0]
        power = np.abs(z) ** 2
        pseudo = z * z
        assert abs(power.mean() - 1) <= 4 * power.std() / np.sqrt(draws)
        target = 1 - 2 * rho**2
        assert abs(pseudo.mean() - target) <= 4 * pseudo.std() / np.sqrt(draws)

    def test_rho_range(self):
        with pytest.raises(ValidationError):
            meas.ImproperNoiseSpec(1.5, 2)


class TestConvertedStats:
    def test_no_phase_noise(self):
        s = meas.converted_noise_stats(2.0, 0.4, 1e-3, 0.0)
        assert s.alpha == 1 and s.beta == 1
        assert s.sigma2 == pytest.approx(1e-3)
        assert s.pseudo_sigma2 == pytest.approx(np.exp(0.8j) * 1e-3)

    def test_zero_magnitude(self):
        s = meas.converted_noise_stats(0.0, 0.4, 1e-3, 0.2)
        assert s.sigma2 == pytest.approx(1e-3)
        assert s.pseudo_sigma2 == pytest.approx(np.exp(0.8j) * np.exp(-0.4) * 1e-3)

    def test_beta_is_alpha_to_the_fourth(self):
        s = meas.converted_noise_stats(1.0, 0.0, 0.0, np.logspace(-6, 1, 30))
        np.testing.assert_allclose(s.beta, s.alpha**4, rtol=1e-15)

    def test_monte_carlo(self):
        s = meas.converted_noise_stats(1.0, 0.0, 1e-4, 0.1)
        var, pseudo = sample_converted_moments(1.0, 0.0, 1e-4, 0.1, 10**6, 3)
        assert var == pytest.approx(s.sigma2, rel=0.01)
        assert pseudo == pytest.approx(s.pseudo_sigma2, rel=0.01)

    def test_pseudo_bound_enforced(self):
        with pytest.raises(ValidationError):
            meas.ConvertedStats(1.0, 1.0, 1.0, 1.5)

    def test_augmented_block_is_psd(self):
        s = meas.converted_noise_stats(np.linspace(0, 5, 20), np.linspace(0, 6, 20), 1e-3, 0.3)
        assert np.all(np.abs(s.pseudo_sigma2) <= s.sigma2)


class TestPolarMeasurements:
    def test_noise_free(self):
        h = np.array([0.5, -0.2, 0.1])
        y0, polar = meas.gen_polar_measurements(h, 0.5, np.zeros(4), np.zeros(4),
                                                np.random.default_rng(0))
        response = meas.frequency_response(h, 0.5, 4)
        assert y0 == pytest.approx(response[0].real)
        for p in polar:
            assert p.y_a == pytest.approx(abs(response[p.k]))
            assert np.exp(1j * p.y_phi) == pytest.approx(np.exp(1j * np.angle(response[p.k])))
            assert 0 <= p.y_phi < 2 * np.pi

    def test_magnitude_truncation(self):
        rng = np.random.default_rng(1)
        z = rng.standard_normal((4000, 1))
        _, y_a, _ = meas.polar_from_normals(np.zeros(2, complex), [0, 1e-2], [0, 0], 0.0, z, z)
        assert np.all(y_a >= 0)
        assert 0.45 < np.mean(y_a == 0) < 0.55

    def test_dc_keeps_sign(self):
        y0, _ = meas.gen_polar_measurements(np.array([-1.0, 0.0]), 1.0, np.full(2, 1e-6),
                                            np.zeros(2), np.random.default_rng(0))
        assert y0 < 0

    def test_negative_magnitude_rejected(self):
        with pytest.raises(ValidationError):
            meas.PolarMeasurement(-0.1, 0.0, 1)

    @pytest.mark.parametrize("a", [1.0, 10.0])
    def test_generated_moments_match_converted_stats(self, a):
        var, pseudo = sample_converted_moments(a, 1.1, 1e-2, 1e-1, 10**6, 4)
        s = meas.converted_noise_stats(a, 1.1, 1e-2, 1e-1)
        assert var == pytest.approx(s.sigma2, rel=0.02)
        assert pseudo == pytest.approx(s.pseudo_sigma2, rel=0.02)


class TestFrequencyModel:
    def test_dft_consistency(self):
        rng = np.random.default_rng(2)
        h = rng.standard_normal(7)
        fm = meas.FrequencyModel.build(6, 7, 1.0, 0.0)
        np.testing.assert_allclose(fm.f_ds @ h, np.fft.fft(h, 11), atol=1e-12)
        np.testing.assert_allclose(fm.f_ss, fm.f_ds[:6], atol=0)

    def test_attenuation(self):
        fm = meas.FrequencyModel.build(4, 3, 2.0, [9.0, 0.1, 0.2, 0.3])
        assert fm.d[0] == 1
        np.testing.assert_allclose(fm.d[1:], np.exp(-np.array([0.1, 0.2, 0.3]) / 2))
        np.testing.assert_allclose(fm.matrix, 2.0 * fm.d[:, None] * fm.f_ss)

    def test_no_phase_noise_gives_identity(self):
        np.testing.assert_array_equal(meas.FrequencyModel.build(5, 4, 1.0, 0.0).d, 1)

    def test_too_many_taps(self):
        with pytest.raises(ValidationError, match="exceeds"):
            meas.FrequencyModel.build(3, 6, 1.0, 0.0)

    def test_matrix_reproduces_response(self):
        h = np.random.default_rng(3).standard_normal(5)
        fm = meas.FrequencyModel.build(4, 5, 0.25, 0.0)
        np.testing.assert_allclose(fm.matrix @ h, meas.frequency_response(h, 0.25, 4))


def test_double_sided_conjugate_symmetry():
    h = np.random.default_rng(4).standard_normal(6)
    response = meas.frequency_response(h, 1.0, 5)
    y_ds = meas.double_sided(response[0].real, np.abs(response[1:]), np.angle(response[1:]), 1.0)
    n_d = 9
    for k in range(1, n_d):
        assert y_ds[n_d - k] == pytest.approx(np.conj(y_ds[k]))
    np.testing.assert_allclose(y_ds, np.fft.fft(h, n_d), atol=1e-12)


class TestBuildExample2Model:
    def test_noiseless_measurement_stats_equal_bound(self):
        rng = np.random.default_rng(5)
        h = meas.fir_lowpass_response(rng.standard_normal(9))
        sa, sp = np.full(10, 1e-3), np.full(10, 1e-2)
        response = meas.frequency_response(h, 1.0, 10)
        ac = response[1:]
        polar = [meas.PolarMeasurement(abs(v), np.angle(v) % (2 * np.pi), k)
                 for k, v in enumerate(ac, start=1)]
        a = meas.build_example2_model(response[0].real, polar, sa, sp, 1.0, 12)
        b = meas.build_example2_model(response[0].real, polar, sa, sp, 1.0, 12,
                                      stats_source="provided_response", response=response)
        np.testing.assert_allclose(a[1].cov, b[1].cov, atol=1e-15)
        np.testing.assert_allclose(a[1].pseudo_cov, b[1].pseudo_cov, atol=1e-15)
        np.testing.assert_array_equal(a[2], b[2])

    def test_regularized_stats_invertible(self):
        _, y0, polar, sa, sp = noisy_draw(np.random.default_rng(6))
        model, stats, y = meas.build_example2_model(y0, polar, sa, sp, 1.0, 12)
        assert np.linalg.cond(build_augmented_covariance(stats).blocks) < 1e12
        assert y[0] == y0 and model.h.shape == (10, 12)

    def test_zero_phase_noise_model(self):
        _, y0, polar, sa, _ = noisy_draw(np.random.default_rng(7))
        model, _, _ = meas.build_example2_model(y0, polar, sa, np.zeros(10), 1.0, 12)
        np.testing.assert_allclose(model.h, meas.FrequencyModel.build(10, 12, 1.0, 0.0).matrix)

    def test_length_mismatch(self):
        _, y0, polar, _, sp = noisy_draw(np.random.default_rng(8))
        with pytest.raises(ValidationError, match="length"):
            meas.build_example2_model(y0, polar, np.ones(9), sp, 1.0, 12)


class TestDCRegularize:
    def test_pair_rule(self):
        var, pseudo = meas.regularize_dc_pair(1e-4, 1e-4)
        # real-part variance (var + pseudo)/2 is kept, imaginary-part variance set equal
        assert var == pytest.approx(2e-4)
        assert pseudo == 0

    def test_custom_imaginary_variance(self):
        var, pseudo = meas.regularize_dc_pair(1e-4, 1e-4, imag_variance=7.0)
        assert (var + pseudo.real) / 2 == pytest.approx(1e-4)
        assert (var - pseudo.real) / 2 == pytest.approx(7.0)

    @pytest.mark.parametrize("seed", range(5))
    def test_invariance_against_real_composite(self, seed):
        _, y0, polar, sa, sp = noisy_draw(np.random.default_rng(seed))
        xs = []
        for c in (1.0, 7.0):
            model, stats, y = meas.build_example2_model(y0, polar, sa, sp, 1.0, 12,
                                                        imag_variance=c)
            xs.append(est.bwlue_real(model, stats, y).x_hat)
            xs.append(est.real_composite_blue(model, stats, y).x_hat)
        for x in xs[1:]:
            np.testing.assert_allclose(x, xs[0], rtol=1e-8, atol=1e-8 * np.abs(xs[0]).max())

    def test_requires_zero_imaginary_row(self):
        model = ComplexLinearModel([[1j], [1]])
        with pytest.raises(ValidationError, match="Im\\(H\\)"):
            meas.dc_regularize(NoiseStats.diagonal([1, 1], [1, 0]), model)

    def test_requires_uncorrelated(self):
        model = ComplexLinearModel([[1], [1j]])
        # real part of the DC noise correlated with the second measurement
        c_r = np.diag([1.0, 1.0, 0.0, 1.0])
        c_r[0, 1] = c_r[1, 0] = 0.3
        stats = NoiseStats.from_real_composite(c_r)
        with pytest.raises(ValidationError, match="correlated"):
            meas.dc_regularize(stats, model)


class TestIDFT:
    def test_noiseless_recovery(self):
        h = np.random.default_rng(9).standard_normal(12)
        response = meas.frequency_response(h, 0.1, 10)
        polar = [meas.PolarMeasurement(abs(v), np.angle(v), k)
                 for k, v in enumerate(response[1:], start=1)]
        rep = meas.idft_estimator(response[0].real, polar, 0.1, 12)
        np.testing.assert_allclose(rep.x_hat, h, atol=1e-12)

    def test_tail_vanishes(self):
        h = np.random.default_rng(10).standard_normal(12)
        response = meas.frequency_response(h, 1.0, 10)
        full = np.fft.ifft(meas.double_sided(response[0].real, np.abs(response[1:]),
                                             np.angle(response[1:]), 1.0))
        np.testing.assert_allclose(full[12:], 0, atol=1e-12)

    def test_biased_under_phase_noise(self):
        rng = np.random.default_rng(11)
        h = meas.fir_lowpass_response(rng.standard_normal(9))
        sa, sp = np.full(10, 1e-6), np.full(10, 0.5)
        est_ = np.array([meas.idft_estimator(*meas.gen_polar_measurements(h, 1.0, sa, sp, rng),
                                             1.0, 12).x_hat for _ in range(2000)])
        se = est_.std(axis=0, ddof=1) / np.sqrt(len(est_))
        assert np.any(np.abs(est_.mean(axis=0) - h) > 6 * se)

    def test_too_many_taps(self):
        polar = [meas.PolarMeasurement(1.0, 0.0, 1)]
        with pytest.raises(ValidationError):
            meas.idft_estimator(1.0, polar, 1.0, 4)


class TestTwoStep:
    def test_noiseless(self):
        h = meas.fir_lowpass_response(np.random.default_rng(12).standard_normal(9))
        response = meas.frequency_response(h, 1.0, 10)
        polar = [meas.PolarMeasurement(abs(v), np.angle(v), k)
                 for k, v in enumerate(response[1:], start=1)]
        tiny = np.full(10, 1e-12)
        rep = meas.two_step_estimator(response[0].real, polar, 1.0, 12, tiny, tiny)
        np.testing.assert_allclose(rep.x_hat, h, atol=1e-9)

    def test_small_noise_matches_single_step(self):
        _, y0, polar, sa, sp = noisy_draw(np.random.default_rng(13), 1e-8, 1e-8)
        two = meas.two_step_estimator(y0, polar, 1.0, 12, sa, sp).x_hat
        model, stats, y = meas.build_example2_model(y0, polar, sa, sp, 1.0, 12)
        one = est.bwlue_real(model, stats, y).x_hat
        np.testing.assert_allclose(two, one, atol=1e-6)


def test_fir_lowpass_response_is_convolution():
    z = np.random.default_rng(14).standard_normal((3, 9))
    out = meas.fir_lowpass_response(z)
    for row, zr in zip(out, z):
        np.testing.assert_allclose(row, np.convolve(zr, [0.0881, 0.4408, 0.4408, 0.0881]))
