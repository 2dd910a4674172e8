"""
Augmented second-order statistics of complex random vectors.

Covariance / pseudo-covariance containers, the augmented covariance
matrix, conjugate stacking of measurement matrices, the equivalent real
composite model and a conditioning-aware Hermitian solver that the
estimators build on.
"""

from dataclasses import dataclass

import numpy as np
import scipy.linalg

TOL_HERM = 1e-10
TOL_PSD = -1e-10
TOL_SOLVE = 1e-10
TOL_EQUIV = 1e-8
COND_MAX = 1e12


class ValidationError(ValueError):
    """Input violates a structural invariant (symmetry, shape, rank)."""


class SingularMatrixError(np.linalg.LinAlgError):
    """A matrix that has to be inverted is singular or too ill-conditioned."""


def _scale(a):
    return max(1.0, float(np.max(np.abs(a)))) if a.size else 1.0


def _deviation(a, b):
    return float(np.max(np.abs(a - b))) if a.size else 0.0


def is_hermitian(a, tol=TOL_HERM):
    a = np.asarray(a)
    return a.ndim == 2 and a.shape[0] == a.shape[1] and \
        _deviation(a, a.conj().T) <= tol * _scale(a)


def _check_hermitian(a, role, tol=TOL_HERM):
    if not is_hermitian(a, tol):
        raise ValidationError(f"{role} is not Hermitian (tolerance {tol:g})")


def _check_psd(a, role, tol=TOL_PSD):
    eig = np.linalg.eigvalsh(0.5 * (a + a.conj().T))
    if eig.size and eig[0] < tol * max(1.0, eig[-1]):
        raise ValidationError(
            f"{role} is not positive semi-definite (min eigenvalue {eig[0]:.3e})")


@dataclass(frozen=True, eq=False)
class NoiseStats:
    """Covariance ``E[n n^H]`` and pseudo-covariance ``E[n n^T]`` of a
    zero-mean complex noise vector."""

    cov: np.ndarray
    pseudo_cov: np.ndarray

    def __post_init__(self):
        cov = np.array(self.cov, dtype=complex, ndmin=2)
        pseudo = np.array(self.pseudo_cov, dtype=complex, ndmin=2)
        if cov.shape != pseudo.shape or cov.shape[0] != cov.shape[1]:
            raise ValidationError(
                f"cov {cov.shape} and pseudo_cov {pseudo.shape} must be equal square shapes")
        _check_hermitian(cov, "cov")
        if _deviation(pseudo, pseudo.T) > TOL_HERM * _scale(pseudo):
            raise ValidationError("pseudo_cov is not symmetric")
        cov.flags.writeable = False
        pseudo.flags.writeable = False
        object.__setattr__(self, "cov", cov)
        object.__setattr__(self, "pseudo_cov", pseudo)
        _check_psd(_augment(cov, pseudo), "augmented covariance")

    @property
    def n(self):
        return self.cov.shape[0]

    @classmethod
    def white(cls, n, var=1.0):
        """Proper white noise with variance ``var`` per entry."""
        return cls(var * np.eye(n), np.zeros((n, n)))

    @classmethod
    def proper(cls, cov):
        cov = np.asarray(cov)
        return cls(cov, np.zeros_like(cov))

    @classmethod
    def diagonal(cls, var, pseudo_var):
        return cls(np.diag(np.asarray(var, dtype=complex)),
                   np.diag(np.asarray(pseudo_var, dtype=complex)))

    @classmethod
    def from_real_composite(cls, c_r):
        """Statistics of ``n = r + j i`` given the covariance of ``[r; i]``."""
        c_r = np.asarray(c_r, dtype=float)
        n = c_r.shape[0] // 2
        rr, ri, ir, ii = c_r[:n, :n], c_r[:n, n:], c_r[n:, :n], c_r[n:, n:]
        return cls(rr + ii + 1j * (ir - ri), rr - ii + 1j * (ir + ri))

    def scaled(self, factor):
        return NoiseStats(factor * self.cov, factor * self.pseudo_cov)


def _augment(cov, pseudo):
    return np.block([[cov, pseudo], [pseudo.conj(), cov.conj()]])


@dataclass(frozen=True, eq=False)
class AugmentedCovariance:
    """The 2N x 2N matrix ``[[C, P], [P*, C*]]``."""

    blocks: np.ndarray

    def __post_init__(self):
        m = np.array(self.blocks, dtype=complex, ndmin=2)
        if m.shape[0] != m.shape[1] or m.shape[0] % 2:
            raise ValidationError(f"augmented covariance must be 2N x 2N, got {m.shape}")
        n = m.shape[0] // 2
        tol = TOL_HERM * _scale(m)
        nw, ne, sw, se = m[:n, :n], m[:n, n:], m[n:, :n], m[n:, n:]
        if _deviation(ne, ne.T) > tol:
            raise ValidationError("north-east block is not symmetric")
        if _deviation(sw, ne.conj()) > tol:
            raise ValidationError("south-west block is not the conjugate of the north-east block")
        if _deviation(se, nw.conj()) > tol:
            raise ValidationError("south-east block is not the conjugate of the north-west block")
        _check_hermitian(m, "augmented covariance")
        m.flags.writeable = False
        object.__setattr__(self, "blocks", m)

    @property
    def n(self):
        return self.blocks.shape[0] // 2

    @property
    def cov(self):
        return self.blocks[:self.n, :self.n]

    @property
    def pseudo_cov(self):
        return self.blocks[:self.n, self.n:]


@dataclass(frozen=True, eq=False)
class ComplexLinearModel:
    """Measurement matrix of ``y = H x + n`` with real parameter vector ``x``."""

    h: np.ndarray

    def __post_init__(self):
        h = np.array(self.h, dtype=complex, ndmin=2)
        if h.ndim != 2:
            raise ValidationError(f"measurement matrix must be 2-D, got shape {h.shape}")
        n_y, n_x = h.shape
        if 2 * n_y < n_x:
            raise ValidationError(
                f"{n_y} complex measurements cannot identify {n_x} real parameters "
                "(need 2*n_y >= n_x)")
        if np.linalg.matrix_rank(np.vstack([h.real, h.imag])) < n_x:
            raise ValidationError("[Re H; Im H] does not have full column rank")
        h.flags.writeable = False
        object.__setattr__(self, "h", h)

    @property
    def n_y(self):
        return self.h.shape[0]

    @property
    def n_x(self):
        return self.h.shape[1]


@dataclass(frozen=True, eq=False)
class ConjugateStack:
    """``[H; H*]``, the matrix that maps a real ``x`` onto the augmented mean."""

    h_tilde: np.ndarray

    def __post_init__(self):
        ht = np.array(self.h_tilde, dtype=complex, ndmin=2)
        n = ht.shape[0] // 2
        if ht.shape[0] % 2 or _deviation(ht[n:], ht[:n].conj()) > TOL_HERM * _scale(ht):
            raise ValidationError("bottom half must be the conjugate of the top half")
        ht.flags.writeable = False
        object.__setattr__(self, "h_tilde", ht)


def build_augmented_covariance(stats):
    """Assemble the augmented covariance of ``stats``."""
    return AugmentedCovariance(_augment(stats.cov, stats.pseudo_cov))


def is_proper(stats, tol=0.0):
    """True iff every entry of the pseudo-covariance is at most ``tol`` in magnitude."""
    if tol < 0:
        raise ValueError("tol must be nonnegative")
    return bool(np.max(np.abs(stats.pseudo_cov), initial=0.0) <= tol)


def stack_conjugate(h):
    h = np.array(h, dtype=complex, ndmin=2)
    return ConjugateStack(np.vstack([h, h.conj()]))


def augment_vector(y):
    """Stack ``y`` (a vector or a matrix whose columns are trials) on its conjugate."""
    y = np.asarray(y, dtype=complex)
    return np.concatenate([y, y.conj()], axis=0)


def composite_transform(n):
    """``T = [[I, jI], [I, -jI]]`` with ``[y; y*] = T [Re y; Im y]``."""
    eye = np.eye(n)
    return np.block([[eye, 1j * eye], [eye, -1j * eye]])


def to_real_composite(model, stats):
    """Real composite form of the model.

    Returns
    -------
    h_r : ndarray, shape (2 n_y, n_x)
        ``[Re H; Im H]``.
    c_r : ndarray, shape (2 n_y, 2 n_y)
        Covariance of ``[Re n; Im n]``, i.e. ``T^H C_aug T / 4``.
    """
    if stats.n != model.n_y:
        raise ValidationError(
            f"noise dimension {stats.n} does not match {model.n_y} measurements")
    t = composite_transform(model.n_y)
    c = t.conj().T @ build_augmented_covariance(stats).blocks @ t / 4
    if _deviation(c.imag, 0 * c.imag) > TOL_HERM * _scale(c):
        raise ValidationError("real composite covariance has a non-negligible imaginary part")
    c = c.real
    _check_hermitian(c, "real composite covariance")
    return np.vstack([model.h.real, model.h.imag]), 0.5 * (c + c.T)


def condition_number(a):
    """Spectral condition number of a Hermitian matrix (inf when singular)."""
    eig = np.abs(np.linalg.eigvalsh(a))
    return np.inf if eig.min() == 0 else float(eig.max() / eig.min())


def hermitian_solve(a, b, role="matrix", cond_max=COND_MAX):
    """Solve ``a X = b`` for Hermitian ``a`` via a factorization.

    Raises
    ------
    ValidationError
        ``a`` is not Hermitian.
    SingularMatrixError
        The condition number of ``a`` exceeds ``cond_max``; the message
        names ``role``.
    """
    a = np.asarray(a)
    b = np.asarray(b)
    _check_hermitian(a, role)
    a = 0.5 * (a + a.conj().T)
    eig = np.linalg.eigvalsh(a)
    amax = np.abs(eig).max(initial=0.0)
    amin = np.abs(eig).min(initial=np.inf) if eig.size else 0.0
    if amin == 0 or amax / amin > cond_max:
        cond = np.inf if amin == 0 else amax / amin
        raise SingularMatrixError(
            f"{role} is singular or ill-conditioned (condition number {cond:.3e} "
            f"> {cond_max:.0e})")
    if eig[0] > 0:
        return scipy.linalg.cho_solve(scipy.linalg.cho_factor(a), b)
    return scipy.linalg.solve(a, b, assume_a="her")


def hermitian_pinv(a, rtol=1e-10):
    """Moore-Penrose inverse of a Hermitian PSD matrix with a relative
    eigenvalue cutoff."""
    a = 0.5 * (a + np.conj(a).T)
    eig, vec = np.linalg.eigh(a)
    keep = eig > rtol * max(eig[-1], 0.0)
    return (vec[:, keep] / eig[keep]) @ vec[:, keep].conj().T


def draw_noise(stats, rng, trials=None):
    """Draw zero-mean Gaussian noise with the given second-order statistics.

    Sampling goes through the real composite covariance, so improper and
    even singular (e.g. purely real) noise is supported.  Returns shape
    ``(n,)`` or ``(n, trials)``.
    """
    n = stats.n
    t = composite_transform(n)
    c = (t.conj().T @ build_augmented_covariance(stats).blocks @ t / 4).real
    eig, vec = np.linalg.eigh(0.5 * (c + c.T))
    root = vec * np.sqrt(np.clip(eig, 0.0, None))
    z = rng.standard_normal((2 * n,) if trials is None else (2 * n, trials))
    w = root @ z
    return w[:n] + 1j * w[n:]
