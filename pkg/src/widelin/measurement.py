"""
Measurement scenarios: complex exponentials in tunably improper noise, and
impulse-response identification from noisy magnitude/phase responses.

Conventions for the frequency-response problem
-----------------------------------------------
``n_y`` measurements at ``f_k = k * df`` for ``k = 0 .. n_y - 1``; the
double-sided grid has ``n_d = 2 n_y - 1`` points, so ``df = 1 / (n_d t_s)``.
The DFT matrix is ``F[k, n] = exp(-2j pi k n / n_d)`` (numpy's ``fft``
convention) and the true response is ``H(f_k) = t_s [F h]_k``.  Raw
measurements ``y_k = y_k^A exp(j y_k^phi)`` are modelled by
``y = t_s D F_ss h + n`` where ``D = diag(1, alpha_1, ...)``.
"""

from dataclasses import dataclass

import numpy as np

from .algebra import ComplexLinearModel, NoiseStats, ValidationError
from .estimators import (
    EstimateReport,
    EstimatorId,
    bwlue_real,
    drop_imag,
    wlls,
)

TOL_PSD_SCALAR = 1e-12


# -- complex exponentials in improper noise ---------------------------------

@dataclass(frozen=True)
class ImproperNoiseSpec:
    """``n = sqrt(1 - rho^2) n_r + j rho n_i`` with standard normal ``n_r, n_i``."""

    rho: float
    n: int

    def __post_init__(self):
        if not 0.0 <= self.rho <= 1.0:
            raise ValidationError(f"rho must lie in [0, 1], got {self.rho}")
        if self.n < 1:
            raise ValidationError("n must be positive")

    def stats(self):
        # E|n|^2 = 1 for every rho; E[n^2] = 1 - 2 rho^2
        return NoiseStats(np.eye(self.n), (1.0 - 2.0 * self.rho**2) * np.eye(self.n))


def exp_model_matrix(omegas, n_y):
    """``[H]_{k,l} = exp(j omega_l k)`` for ``k = 1 .. n_y``."""
    if n_y < 1:
        raise ValidationError("n_y must be positive")
    k = np.arange(1, n_y + 1)[:, None]
    return np.exp(1j * k * np.asarray(omegas, dtype=float)[None, :])


def improper_noise_from_normals(rho, z_r, z_i):
    return np.sqrt(1.0 - rho**2) * z_r + 1j * rho * z_i


def gen_improper_noise(spec, rng, trials=None):
    """Draw improper noise; shape ``(n,)`` or ``(n, trials)``."""
    shape = (spec.n,) if trials is None else (spec.n, trials)
    z_r = rng.standard_normal(shape)
    z_i = rng.standard_normal(shape)
    return improper_noise_from_normals(spec.rho, z_r, z_i)


# -- polar frequency-response measurements ----------------------------------

@dataclass(frozen=True)
class PolarMeasurement:
    y_a: float
    y_phi: float
    k: int

    def __post_init__(self):
        if self.y_a < 0:
            raise ValidationError(f"magnitude at k={self.k} is negative")


@dataclass(frozen=True, eq=False)
class ConvertedStats:
    """Moments of ``y_k = y_k^A exp(j y_k^phi)`` (scalars or arrays)."""

    alpha: np.ndarray
    beta: np.ndarray
    sigma2: np.ndarray
    pseudo_sigma2: np.ndarray

    def __post_init__(self):
        if np.any(np.abs(self.pseudo_sigma2) > self.sigma2 + TOL_PSD_SCALAR * np.maximum(1.0, self.sigma2)):
            raise ValidationError("|pseudo variance| exceeds variance")


def converted_noise_stats(a_k, phi_k, sigma_a2, sigma_phi2):
    """Variance and pseudo-variance of a converted polar measurement.

    Uses the Gaussian phase moments ``alpha = E[exp(j n_phi)] =
    exp(-s_phi/2)`` and ``beta = E[exp(2j n_phi)] = exp(-2 s_phi)`` and
    treats the magnitude noise as zero-mean Gaussian.  Broadcasts over
    array arguments.
    """
    a_k = np.asarray(a_k, dtype=float)
    sigma_a2 = np.asarray(sigma_a2, dtype=float)
    sigma_phi2 = np.asarray(sigma_phi2, dtype=float)
    alpha = np.exp(-sigma_phi2 / 2)
    beta = np.exp(-2 * sigma_phi2)
    sigma2 = a_k**2 * (1 - alpha**2) + sigma_a2
    pseudo = np.exp(2j * np.asarray(phi_k, dtype=float)) * (
        beta * a_k**2 + beta * sigma_a2 - a_k**2 * alpha**2)
    return ConvertedStats(alpha, beta, sigma2, pseudo)


def dft_matrix(n):
    k = np.arange(n)
    return np.exp(-2j * np.pi * np.outer(k, k) / n)


@dataclass(frozen=True, eq=False)
class FrequencyModel:
    f_ss: np.ndarray
    d: np.ndarray
    t_s: float

    @property
    def n_y(self):
        return self.f_ss.shape[0]

    @property
    def n_h(self):
        return self.f_ss.shape[1]

    @property
    def n_d(self):
        return 2 * self.n_y - 1

    @property
    def f_ds(self):
        return dft_matrix(self.n_d)[:, :self.n_h]

    @property
    def matrix(self):
        """``t_s D F_ss``."""
        return self.t_s * self.d[:, None] * self.f_ss

    @classmethod
    def build(cls, n_y, n_h, t_s, sigma_phi2):
        """``sigma_phi2`` has one entry per measurement; entry 0 (DC) is unused."""
        n_d = 2 * n_y - 1
        if n_h > n_d:
            raise ValidationError(
                f"n_h={n_h} exceeds the {n_d} real degrees of freedom of {n_y} "
                "frequency-response measurements")
        if t_s <= 0:
            raise ValidationError("sampling time must be positive")
        sigma_phi2 = np.broadcast_to(np.asarray(sigma_phi2, dtype=float), (n_y,))
        d = np.exp(-sigma_phi2 / 2)
        d[0] = 1.0
        return cls(dft_matrix(n_d)[:n_y, :n_h], d, float(t_s))


def frequency_response(h, t_s, n_y):
    """``H(f_k) = t_s [F h]_k`` for ``k = 0 .. n_y - 1`` (last axis of ``h``)."""
    h = np.asarray(h, dtype=float)
    n_d = 2 * n_y - 1
    return t_s * np.fft.fft(h, n=n_d, axis=-1)[..., :n_y]


def polar_from_normals(response, sigma_a2, sigma_phi2, z0, z_a, z_phi):
    """Noisy polar measurements from standard-normal draws.

    Parameters
    ----------
    response : ndarray, shape (..., n_y)
        True frequency response; entry 0 is the (real) DC value.
    sigma_a2, sigma_phi2 : array_like, shape (n_y,)
    z0 : ndarray, shape (...)
    z_a, z_phi : ndarray, shape (..., n_y - 1)

    Returns
    -------
    y0, y_a, y_phi
        DC value and magnitude/phase arrays for ``k = 1 .. n_y - 1``.
    """
    n_y = response.shape[-1]
    sigma_a2 = np.broadcast_to(np.asarray(sigma_a2, dtype=float), (n_y,))
    sigma_phi2 = np.broadcast_to(np.asarray(sigma_phi2, dtype=float), (n_y,))
    ac = response[..., 1:]
    y0 = response[..., 0].real + np.sqrt(sigma_a2[0]) * z0
    y_a = np.maximum(np.abs(ac) + np.sqrt(sigma_a2[1:]) * z_a, 0.0)
    y_phi = np.mod(np.angle(ac) + np.sqrt(sigma_phi2[1:]) * z_phi, 2 * np.pi)
    return y0, y_a, y_phi


def gen_polar_measurements(h, t_s, sigma_a2, sigma_phi2, rng):
    """Simulate the DC value and ``n_y - 1`` magnitude/phase measurements.

    ``n_y`` is the length of ``sigma_a2``.  Magnitudes are clipped at zero,
    phases reduced mod 2 pi; the DC value keeps its sign.
    """
    sigma_a2 = np.asarray(sigma_a2, dtype=float)
    n_y = sigma_a2.shape[0]
    response = frequency_response(h, t_s, n_y)
    y0, y_a, y_phi = polar_from_normals(
        response, sigma_a2, sigma_phi2, rng.standard_normal(),
        rng.standard_normal(n_y - 1), rng.standard_normal(n_y - 1))
    polar = [PolarMeasurement(float(a), float(p), k)
             for k, (a, p) in enumerate(zip(y_a, y_phi), start=1)]
    return float(y0), polar


def _polar_arrays(polar):
    ks = [p.k for p in polar]
    if ks != list(range(1, len(polar) + 1)):
        raise ValidationError("polar measurements must cover k = 1 .. n_y-1 in order")
    return (np.array([p.y_a for p in polar], dtype=float),
            np.array([p.y_phi for p in polar], dtype=float))


def cartesian(y0, y_a, y_phi):
    """Raw complex measurement vector(s) ``[y0, y_a exp(j y_phi)]``."""
    y0 = np.asarray(y0, dtype=float)
    return np.concatenate([y0[..., None] + 0j, y_a * np.exp(1j * y_phi)], axis=-1)


def measurement_variances(a_k, phi_k, sigma_a2, sigma_phi2):
    """Diagonal variance / pseudo-variance for all ``n_y`` entries.

    ``a_k, phi_k`` cover ``k = 1 .. n_y - 1`` (leading axes broadcast); the
    DC entry is real noise, variance = pseudo-variance = ``sigma_a2[0]``.
    """
    sigma_a2 = np.asarray(sigma_a2, dtype=float)
    sigma_phi2 = np.broadcast_to(np.asarray(sigma_phi2, dtype=float), sigma_a2.shape)
    s = converted_noise_stats(a_k, phi_k, sigma_a2[1:], sigma_phi2[1:])
    lead = np.shape(s.sigma2)[:-1]
    dc = np.full(lead + (1,), sigma_a2[0])
    return (np.concatenate([dc, s.sigma2], axis=-1),
            np.concatenate([dc + 0j, s.pseudo_sigma2], axis=-1))


def regularize_dc_pair(var0, pseudo0, imag_variance=None):
    """Replace a real (zero imaginary-variance) DC noise pair.

    Keeps the real-part variance ``(var0 + Re pseudo0) / 2`` and sets the
    imaginary-part variance to ``imag_variance`` (default: equal to the
    real-part variance, giving ``pseudo0 = 0``).
    """
    re_var = 0.5 * (var0 + np.real(pseudo0))
    im_var = re_var if imag_variance is None else imag_variance
    if np.any(np.asarray(im_var) <= 0):
        raise ValidationError("imaginary-part variance must be positive")
    return re_var + im_var, (re_var - im_var) + 0j


def dc_regularize(stats, model, imag_variance=None, row=0):
    """Make the augmented covariance invertible by assigning a variance to the
    imaginary part of a measurement that carries no information.

    Requires row ``row`` of ``Im H`` to be zero, so the estimate of
    :func:`~widelin.estimators.bwlue_real` does not depend on the chosen
    ``imag_variance``.  The measurement must be uncorrelated with the
    others.
    """
    h = model.h if isinstance(model, ComplexLinearModel) else np.asarray(model)
    if np.max(np.abs(h[row].imag)) > 1e-12 * max(1.0, np.max(np.abs(h))):
        raise ValidationError(
            f"row {row} of Im(H) is not zero; regularizing it would change the estimate")
    cov = np.array(stats.cov)
    pseudo = np.array(stats.pseudo_cov)
    others = np.delete(np.arange(stats.n), row)
    if np.any(cov[row, others] != 0) or np.any(pseudo[row, others] != 0):
        raise ValidationError(f"measurement {row} is correlated with other measurements")
    cov[row, row], pseudo[row, row] = regularize_dc_pair(
        cov[row, row].real, pseudo[row, row], imag_variance)
    return NoiseStats(cov, pseudo)


def build_example2_model(y0, polar, sigma_a2, sigma_phi2, t_s, n_h,
                         stats_source="measurements", response=None,
                         imag_variance=None):
    """Linearized model, noise statistics and measurement vector.

    Parameters
    ----------
    stats_source : {"measurements", "provided_response"}
        Where the magnitude/phase values that enter the noise statistics
        come from: the measurements themselves, or ``response`` (complex
        frequency response for ``k = 0 .. n_y - 1``, e.g. the true one).
    """
    y_a, y_phi = _polar_arrays(polar)
    sigma_a2 = np.asarray(sigma_a2, dtype=float)
    n_y = len(polar) + 1
    if sigma_a2.shape != (n_y,) or np.shape(sigma_phi2) not in ((), (n_y,)):
        raise ValidationError(f"noise variances must have length {n_y}")
    fm = FrequencyModel.build(n_y, n_h, t_s, sigma_phi2)
    model = ComplexLinearModel(fm.matrix)
    if stats_source == "measurements":
        a_k, phi_k = y_a, y_phi
    elif stats_source == "provided_response":
        if response is None or np.shape(response) != (n_y,):
            raise ValidationError(f"provided response must have length {n_y}")
        a_k, phi_k = np.abs(response[1:]), np.angle(response[1:])
    else:
        raise ValidationError(f"unknown stats_source {stats_source!r}")
    var, pseudo = measurement_variances(a_k, phi_k, sigma_a2, sigma_phi2)
    stats = dc_regularize(NoiseStats.diagonal(var, pseudo), model, imag_variance)
    return model, stats, cartesian(y0, y_a, y_phi)


def double_sided(y0, y_a, y_phi, t_s):
    """``[y_DC, y_AC, conj(flip(y_AC))] / t_s`` along the last axis."""
    y = cartesian(y0, y_a, y_phi) / t_s
    return np.concatenate([y, np.conj(y[..., :0:-1])], axis=-1)


def idft_estimator(y0, polar, t_s, n_h):
    """Inverse DFT of the double-sided measured spectrum, truncated to ``n_h`` taps."""
    y_a, y_phi = _polar_arrays(polar)
    n_d = 2 * len(polar) + 1
    if n_h > n_d:
        raise ValidationError(f"n_h={n_h} exceeds the DFT length {n_d}")
    full = np.fft.ifft(double_sided(y0, y_a, y_phi, t_s))
    x, res = drop_imag(full[:n_h], "idft")
    return EstimateReport(x, EstimatorId.IDFT, imag_residue=res)


def two_step_estimator(y0, polar, t_s, n_h, sigma_a2, sigma_phi2):
    """WLLS first, then the BWLUE for real parameters with noise statistics
    evaluated at the WLLS frequency response."""
    model, _, y = build_example2_model(y0, polar, sigma_a2, sigma_phi2, t_s, n_h)
    step1 = wlls(model, y).x_hat
    response = frequency_response(step1, t_s, len(polar) + 1)
    model, stats, y = build_example2_model(
        y0, polar, sigma_a2, sigma_phi2, t_s, n_h,
        stats_source="provided_response", response=response)
    rep = bwlue_real(model, stats, y)
    return EstimateReport(rep.x_hat, EstimatorId.TWO_STEP, covariance=rep.covariance,
                          imag_residue=rep.imag_residue)


def fir_lowpass_response(z, taps=(0.0881, 0.4408, 0.4408, 0.0881)):
    """Random impulse response: standard-normal samples ``z`` (last axis)
    convolved with a short low-pass FIR filter."""
    z = np.asarray(z, dtype=float)
    taps = np.asarray(taps)
    out = np.zeros(z.shape[:-1] + (z.shape[-1] + len(taps) - 1,))
    for i, t in enumerate(taps):
        out[..., i:i + z.shape[-1]] += t * z
    return out
