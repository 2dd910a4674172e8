"""
Classical linear and widely linear estimators for ``y = H x + n``.

Every estimator takes a :class:`~widelin.algebra.ComplexLinearModel` and a
measurement ``y`` that is either a vector of length ``n_y`` or a matrix of
shape ``(n_y, trials)`` whose columns are independent measurements; the
estimate has the matching shape.

Real-constrained estimators (``wlls``, ``wwlls``, ``bwlue_real``,
``bwlue_real_proper``, ``real_composite_blue``) compute in complex
arithmetic and only drop the imaginary part after checking it is at
rounding level.
"""

import enum
from dataclasses import dataclass
from typing import Optional

import numpy as np
import scipy.linalg

from .algebra import (
    COND_MAX,
    SingularMatrixError,
    ValidationError,
    augment_vector,
    build_augmented_covariance,
    hermitian_pinv,
    hermitian_solve,
    is_hermitian,
    stack_conjugate,
    to_real_composite,
)

TOL_REAL = 1e-8


class ImaginaryResidueError(ArithmeticError):
    """A real-constrained estimate came out with a non-negligible imaginary part."""


class EstimatorId(str, enum.Enum):
    LS = "ls"
    LS_REAL_PART = "ls_real_part"
    WLLS = "wlls"
    WWLLS = "wwlls"
    BLUE = "blue"
    BWLUE = "bwlue"
    BWLUE_REAL_PART = "bwlue_real_part"
    BWLUE_REAL = "bwlue_real"
    BWLUE_REAL_PROPER = "bwlue_real_proper"
    REAL_COMPOSITE_BLUE = "real_composite_blue"
    IDFT = "idft"
    TWO_STEP = "two_step"


@dataclass(frozen=True, eq=False)
class EstimateReport:
    x_hat: np.ndarray
    estimator_id: EstimatorId
    covariance: Optional[np.ndarray] = None
    # largest |Im| seen before a real-constrained estimate was truncated
    imag_residue: float = 0.0


@dataclass(frozen=True, eq=False)
class WeightSpec:
    """Hermitian weighting matrix of the weighted least-squares cost."""

    w: np.ndarray

    def __post_init__(self):
        w = np.array(self.w, dtype=complex, ndmin=2)
        if not is_hermitian(w):
            raise ValidationError("weighting matrix is not Hermitian")
        object.__setattr__(self, "w", w)


def _columns(y, n_y):
    y = np.asarray(y, dtype=complex)
    if y.shape[0] != n_y or y.ndim > 2:
        raise ValidationError(f"measurement of shape {y.shape} does not match n_y={n_y}")
    return y


def _check_stats(model, stats):
    if stats.n != model.n_y:
        raise ValidationError(
            f"noise dimension {stats.n} does not match {model.n_y} measurements")


def drop_imag(x, role):
    """Return ``x.real`` after checking ``|Im x| <= TOL_REAL (1 + |x|)`` per column."""
    x = np.asarray(x)
    if not np.iscomplexobj(x):
        return x, 0.0
    res = np.abs(x.imag).max(axis=0)
    bound = TOL_REAL * (1.0 + np.linalg.norm(x, axis=0))
    if np.any(res > bound):
        raise ImaginaryResidueError(
            f"{role}: imaginary residue {np.max(res):.3e} exceeds tolerance")
    return x.real.copy(), float(np.max(res, initial=0.0))


def _weighted(c, a, role, singular):
    """Return ``(W a, a^H W a)`` where ``W`` is ``c^{-1}``.

    With ``singular="unified"`` the inverse is replaced by the
    pseudo-inverse of ``c + a a^H``; this yields the same estimator when
    ``c`` is invertible and the minimum-variance unbiased limit when it is
    not (noise-free directions are then trusted exactly).
    """
    if singular == "raise":
        wa = hermitian_solve(c, a, role=role)
    elif singular == "unified":
        wa = hermitian_pinv(c + a @ a.conj().T) @ a
    else:
        raise ValueError(f"singular must be 'raise' or 'unified', not {singular!r}")
    normal = a.conj().T @ wa
    return wa, 0.5 * (normal + normal.conj().T)


def _normal_covariance(normal, role, singular):
    eye = np.eye(normal.shape[0])
    cov = hermitian_solve(normal, eye, role=role)
    return cov - eye if singular == "unified" else cov


def ls(model, y):
    """Ordinary least squares ``(H^H H)^{-1} H^H y`` (complex valued)."""
    y = _columns(y, model.n_y)
    h = model.h
    x = hermitian_solve(h.conj().T @ h, h.conj().T @ y, role="normal matrix H^H H")
    return EstimateReport(x, EstimatorId.LS)


def ls_real_part(model, y):
    return EstimateReport(ls(model, y).x_hat.real.copy(), EstimatorId.LS_REAL_PART)


def _widely_linear_ls(model, y, w, estimator_id):
    y = _columns(y, model.n_y)
    ht = stack_conjugate(model.h).h_tilde
    # real-parameter WLS weights y with W and y* with W*
    w_aug = np.block([[w, np.zeros_like(w)], [np.zeros_like(w), w.conj()]])
    normal = ht.conj().T @ w_aug @ ht
    x = hermitian_solve(normal, ht.conj().T @ w_aug @ augment_vector(y),
                        role="widely linear normal matrix")
    x, res = drop_imag(x, estimator_id.value)
    return EstimateReport(x, estimator_id, imag_residue=res)


def wlls(model, y):
    """Widely linear least squares for real parameters.

    Minimizes ``|y - H x|^2`` over real ``x``; equal to
    ``Re{H^H H}^{-1} Re{H^H y}``.
    """
    return _widely_linear_ls(model, y, np.eye(model.n_y), EstimatorId.WLLS)


def wwlls(model, w, y):
    """Weighted widely linear least squares for real parameters,
    ``Re{H^H W H}^{-1} Re{H^H W y}``."""
    if not isinstance(w, WeightSpec):
        w = WeightSpec(w)
    if w.w.shape != (model.n_y, model.n_y):
        raise ValidationError(f"weight of shape {w.w.shape} does not match n_y={model.n_y}")
    return _widely_linear_ls(model, y, w.w, EstimatorId.WWLLS)


def blue(model, stats, y):
    """Best linear unbiased estimator for complex ``x`` (uses the covariance only)."""
    _check_stats(model, stats)
    y = _columns(y, model.n_y)
    wh, normal = _weighted(stats.cov, model.h, "noise covariance", "raise")
    x = hermitian_solve(normal, wh.conj().T @ y, role="normal matrix H^H C^-1 H")
    return EstimateReport(x, EstimatorId.BLUE)


def bwlue_standard(model, stats, y, singular="raise"):
    """Best widely linear unbiased estimator for complex ``x``.

    Works on the augmented model ``[y; y*] = diag(H, H*) [x; x*] + [n; n*]``
    and returns only the ``x`` half of the augmented estimate.
    """
    _check_stats(model, stats)
    if model.n_y <= model.n_x:
        raise ValidationError(
            f"the standard BWLUE needs more measurements than parameters "
            f"(n_y={model.n_y}, n_x={model.n_x})")
    y = _columns(y, model.n_y)
    h = model.h
    zero = np.zeros_like(h)
    h_aug = np.block([[h, zero], [zero, h.conj()]])
    c_aug = build_augmented_covariance(stats).blocks
    wh, normal = _weighted(c_aug, h_aug, "augmented noise covariance", singular)
    x_aug = hermitian_solve(normal, wh.conj().T @ augment_vector(y),
                            role="augmented normal matrix")
    return EstimateReport(x_aug[:model.n_x], EstimatorId.BWLUE)


def bwlue_standard_real_part(model, stats, y, singular="raise"):
    x = bwlue_standard(model, stats, y, singular=singular).x_hat
    return EstimateReport(x.real.copy(), EstimatorId.BWLUE_REAL_PART)


def bwlue_real_matrix(model, stats, singular="raise"):
    """Estimator matrix ``G`` (``x = G [y; y*]``) and error covariance of the
    BWLUE for real parameter vectors."""
    _check_stats(model, stats)
    ht = stack_conjugate(model.h).h_tilde
    c_aug = build_augmented_covariance(stats).blocks
    try:
        wh, normal = _weighted(c_aug, ht, "augmented noise covariance", singular)
    except SingularMatrixError as exc:
        raise SingularMatrixError(
            f"{exc}; a measurement carrying no information about x may be "
            "regularized first (see measurement.dc_regularize)") from exc
    role = "normal matrix H~^H C^-1 H~ (is [Re H; Im H] full rank?)"
    cov = _normal_covariance(normal, role, singular)
    if singular == "unified":
        return hermitian_solve(normal, wh.conj().T, role=role), cov
    return _whitened_gain(c_aug, ht), cov


def _whitened_gain(c, a):
    """``(a^H c^-1 a)^-1 a^H c^-1`` from a Cholesky whitening and a QR
    factorization, which keeps ``G a = I`` accurate when ``a`` is poorly
    conditioned (the normal equations square its condition number)."""
    low = scipy.linalg.cholesky(c, lower=True)
    q, r = np.linalg.qr(scipy.linalg.solve_triangular(low, a, lower=True))
    back = scipy.linalg.solve_triangular(low.conj().T, q, lower=False)
    return scipy.linalg.solve_triangular(r, back.conj().T, lower=False)


def bwlue_real(model, stats, y, singular="raise"):
    """Best widely linear unbiased estimator for real parameter vectors.

    ``x = (H~^H C_aug^-1 H~)^-1 H~^H C_aug^-1 [y; y*]`` with
    ``H~ = [H; H*]``; the report carries the error covariance
    ``(H~^H C_aug^-1 H~)^-1``.

    Parameters
    ----------
    singular : {"raise", "unified"}
        Behaviour for a singular augmented covariance.  ``"raise"`` reports
        it; ``"unified"`` returns the zero-variance-aware limit of the
        estimator (identical to the regular one for invertible covariances).
    """
    y = _columns(y, model.n_y)
    g, cov = bwlue_real_matrix(model, stats, singular=singular)
    x, res = drop_imag(g @ augment_vector(y), "bwlue_real")
    c, _ = drop_imag(cov, "bwlue_real covariance")
    return EstimateReport(x, EstimatorId.BWLUE_REAL, covariance=0.5 * (c + c.T),
                          imag_residue=res)


def bwlue_real_proper(model, cov, y):
    """BWLUE for real parameters under proper noise,
    ``Re{H^H C^-1 H}^-1 Re{H^H C^-1 y}``."""
    cov = np.asarray(cov, dtype=complex)
    if cov.shape != (model.n_y, model.n_y):
        raise ValidationError(f"covariance of shape {cov.shape} does not match n_y={model.n_y}")
    y = _columns(y, model.n_y)
    wh, normal = _weighted(cov, model.h, "noise covariance", "raise")
    normal = normal.real
    x = hermitian_solve(normal, (wh.conj().T @ y).real, role="Re{H^H C^-1 H}")
    return EstimateReport(x, EstimatorId.BWLUE_REAL_PROPER,
                          covariance=hermitian_solve(normal, np.eye(model.n_x),
                                                     role="Re{H^H C^-1 H}") / 2)


def real_blue(h_r, c_r, y_r):
    """BLUE of the real model ``y_r = h_r x + n_r`` with ``cov(n_r) = c_r``."""
    wh = hermitian_solve(c_r, h_r, role="real composite noise covariance")
    normal = h_r.T @ wh
    normal = 0.5 * (normal + normal.T)
    x = hermitian_solve(normal, wh.T @ y_r, role="real composite normal matrix")
    return x, hermitian_solve(normal, np.eye(h_r.shape[1]), role="real composite normal matrix")


def real_composite_blue(model, stats, y):
    """BLUE on ``[Re y; Im y] = [Re H; Im H] x + [Re n; Im n]``."""
    y = _columns(y, model.n_y)
    h_r, c_r = to_real_composite(model, stats)
    x, cov = real_blue(h_r, c_r, np.concatenate([y.real, y.imag], axis=0))
    return EstimateReport(x, EstimatorId.REAL_COMPOSITE_BLUE, covariance=cov)


def analytic_covariance(model, stats, singular="raise"):
    """Error covariance ``(H~^H C_aug^-1 H~)^-1`` of :func:`bwlue_real`."""
    _, cov = bwlue_real_matrix(model, stats, singular=singular)
    c, _ = drop_imag(cov, "analytic covariance")
    return 0.5 * (c + c.T)


def bwlue_real_diagonal(h, var, pseudo_var, y, cond_max=COND_MAX):
    """Batched BWLUE for real parameters with uncorrelated measurements.

    For diagonal covariance and pseudo-covariance the augmented covariance
    decouples into one 2x2 block per measurement, so every trial can carry
    its own statistics without forming 2N x 2N matrices.

    Parameters
    ----------
    h : ndarray, shape (n_y, n_x) or (trials, n_y, n_x)
    var, pseudo_var : ndarray, shape (trials, n_y)
        Per-trial variance and pseudo-variance of each measurement.
    y : ndarray, shape (trials, n_y)

    Returns
    -------
    x : ndarray, shape (trials, n_x)
        Estimates; rows of failed trials are NaN.
    failed : ndarray of bool, shape (trials,)
        Trials whose noise blocks or normal matrix exceeded ``cond_max``.
    """
    var = np.asarray(var, dtype=float)
    pseudo_var = np.asarray(pseudo_var, dtype=complex)
    y = np.asarray(y, dtype=complex)
    h = np.broadcast_to(np.asarray(h, dtype=complex), var.shape + (np.shape(h)[-1],))
    # 2x2 block [[s, p], [p*, s]]: eigenvalues s +- |p|
    lo = var - np.abs(pseudo_var)
    hi = var + np.abs(pseudo_var)
    bad = np.any((lo <= 0) | (hi > cond_max * lo), axis=1)
    det = np.where(lo > 0, var**2 - np.abs(pseudo_var)**2, 1.0)
    a = var / det
    b = -pseudo_var / det
    hc = h.conj()
    normal = (np.einsum("tk,tki,tkj->tij", a, hc, h)
              + np.einsum("tk,tki,tkj->tij", a, h, hc)
              + np.einsum("tk,tki,tkj->tij", b, hc, hc)
              + np.einsum("tk,tki,tkj->tij", b.conj(), h, h))
    rhs = (np.einsum("tki,tk->ti", hc, a * y + b * y.conj())
           + np.einsum("tki,tk->ti", h, b.conj() * y + a * y.conj()))
    normal = normal.real
    normal = 0.5 * (normal + np.swapaxes(normal, 1, 2))
    eig = np.linalg.eigvalsh(normal)
    bad |= (eig[:, 0] <= 0) | (eig[:, -1] > cond_max * np.abs(eig[:, 0]))
    normal[bad] = np.eye(normal.shape[-1])
    x = np.linalg.solve(normal, rhs.real[..., None])[..., 0]
    x[bad] = np.nan
    return x, bad
