"""
Seeded Monte-Carlo harness for the two simulation studies.

Reproducibility contract: trial ``i`` draws all of its randomness from
``substream(master_seed, i)``, trials are processed in fixed blocks of
``BLOCK`` consecutive indices, and block statistics are merged in block
order.  Results therefore do not depend on the number of worker
processes.  Every sweep point reuses the same per-trial draws (common
random numbers), which keeps estimator comparisons at one point and
across neighbouring points tight.
"""

import csv
import functools
import io
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import NamedTuple, Optional

import numpy as np

from . import estimators as est
from .algebra import ComplexLinearModel, NoiseStats, SingularMatrixError
from .estimators import EstimateReport, EstimatorId, bwlue_real_diagonal, drop_imag
from .measurement import (
    FrequencyModel,
    ImproperNoiseSpec,
    double_sided,
    exp_model_matrix,
    fir_lowpass_response,
    frequency_response,
    improper_noise_from_normals,
    measurement_variances,
    polar_from_normals,
    regularize_dc_pair,
    cartesian,
)

BLOCK = 1000
MAX_FAILURE_RATE = 1e-3

EXAMPLE1_ESTIMATORS = ("ls", "ls_real_part", "wlls", "bwlue", "bwlue_real_part",
                       "bwlue_real")
EXAMPLE2_ESTIMATORS = ("bwlue_real", "wlls", "two_step", "bound", "idft")

EXAMPLE1_DEFAULTS = {
    "omega1": 0.1,
    "omega2": 0.2,
    "n_y": 20,
    "x1": 1.0,
    "x2": 1.0,
    "zero_noise": 0,
}
EXAMPLE2_DEFAULTS = {
    "n_y": 10,
    "n_h": 12,
    "t_s": 1.0,
    "sigma_a2": 1e-4,
    "sigma_phi2": 1e-1,
    "zero_noise": 0,
}


class SweepAbort(RuntimeError):
    """Too many trials failed at one sweep point."""


def substream(master_seed, trial):
    """Independent generator for one trial."""
    return np.random.default_rng(np.random.SeedSequence(master_seed, spawn_key=(trial,)))


def log_grid(lo_exp, hi_exp, per_decade=6):
    n = int(round((hi_exp - lo_exp) * per_decade)) + 1
    return tuple(float(v) for v in np.logspace(lo_exp, hi_exp, n))


@dataclass(frozen=True)
class SweepConfig:
    sweep_variable: str
    grid: tuple
    trials: int
    master_seed: int = 0
    fixed_params: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.sweep_variable not in ("rho", "sigma_a2", "sigma_phi2"):
            raise ValueError(f"unknown sweep variable {self.sweep_variable!r}")
        grid = tuple(float(g) for g in self.grid)
        if not grid or any(b <= a for a, b in zip(grid, grid[1:])):
            raise ValueError("grid must be nonempty and strictly increasing")
        if self.trials < 1:
            raise ValueError("trials must be >= 1")
        object.__setattr__(self, "grid", grid)

    def param(self, key, defaults):
        return self.fixed_params.get(key, defaults[key])


def example1_config(trials=100_000, master_seed=0, grid=None, **fixed):
    if grid is None:
        grid = tuple(np.round(np.linspace(0.0, 1.0, 21), 12))
    return SweepConfig("rho", grid, trials, master_seed, fixed)


def example2_config(sweep="mag", trials=20_000, master_seed=0, grid=None, **fixed):
    if sweep == "mag":
        return SweepConfig("sigma_a2", grid or log_grid(-5, 0), trials, master_seed, fixed)
    if sweep == "phase":
        return SweepConfig("sigma_phi2", grid or log_grid(-6, -1), trials, master_seed, fixed)
    raise ValueError(f"sweep must be 'mag' or 'phase', not {sweep!r}")


@dataclass
class SweepResult:
    """Averaged squared error per sweep point and estimator."""

    sweep_variable: str
    estimators: tuple
    grid: tuple
    mse: np.ndarray
    se: np.ndarray
    failures: np.ndarray
    trials: int

    def column(self, name):
        return self.mse[:, self.estimators.index(name)]

    def se_column(self, name):
        return self.se[:, self.estimators.index(name)]

    def to_dat(self):
        lines = [" ".join(f"{v:.17g}" for v in (g, *row))
                 for g, row in zip(self.grid, self.mse)]
        return "\n".join(lines) + "\n"

    def to_csv(self):
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow([self.sweep_variable, *self.estimators,
                    *(f"{e}_se" for e in self.estimators),
                    *(f"{e}_failures" for e in self.estimators)])
        for g, m, s, f in zip(self.grid, self.mse, self.se, self.failures):
            w.writerow([f"{g:.17g}", *(f"{v:.17g}" for v in m),
                        *(f"{v:.17g}" for v in s), *(str(int(v)) for v in f)])
        return buf.getvalue()

    def write(self, directory, stem):
        directory = Path(directory)
        directory.mkdir(parents=True, exist_ok=True)
        dat = directory / f"{stem}.dat"
        dat.write_text(self.to_dat())
        (directory / f"{stem}.csv").write_text(self.to_csv())
        return dat


# -- streaming statistics ----------------------------------------------------

class _Moments(NamedTuple):
    n: np.ndarray
    mean: np.ndarray
    m2: np.ndarray
    failed: np.ndarray


def _moments(samples):
    """Moments along the last axis, ignoring NaN (failed) samples."""
    ok = ~np.isnan(samples)
    n = ok.sum(axis=-1).astype(float)
    filled = np.where(ok, samples, 0.0)
    with np.errstate(invalid="ignore", divide="ignore"):
        mean = np.where(n > 0, filled.sum(axis=-1) / np.maximum(n, 1), 0.0)
        m2 = np.where(ok, (samples - mean[..., None]) ** 2, 0.0).sum(axis=-1)
    return _Moments(n, mean, m2, (~ok).sum(axis=-1))


def _merge(a, b):
    n = a.n + b.n
    with np.errstate(invalid="ignore", divide="ignore"):
        delta = b.mean - a.mean
        frac = np.where(n > 0, b.n / np.maximum(n, 1), 0.0)
        mean = a.mean + delta * frac
        m2 = a.m2 + b.m2 + delta**2 * a.n * frac
    return _Moments(n, mean, m2, a.failed + b.failed)


def _finish(m, trials, grid, names):
    rate = m.failed / trials
    if np.any(rate > MAX_FAILURE_RATE):
        g, e = np.argwhere(rate > MAX_FAILURE_RATE)[0]
        raise SweepAbort(
            f"{int(m.failed[g, e])} of {trials} trials failed for {names[e]} at "
            f"sweep value {grid[g]:.6g}")
    with np.errstate(invalid="ignore", divide="ignore"):
        var = np.where(m.n > 1, m.m2 / np.maximum(m.n - 1, 1), 0.0)
        se = np.sqrt(var / np.maximum(m.n, 1))
    return m.mean, se, m.failed


def _blocks(trials):
    return [(s, min(s + BLOCK, trials)) for s in range(0, trials, BLOCK)]


def _fold(block_fn, trials, workers):
    blocks = _blocks(trials)
    if workers is None or workers <= 1 or len(blocks) == 1:
        parts = map(block_fn, blocks)
        return functools.reduce(_merge, parts)
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return functools.reduce(_merge, pool.map(block_fn, blocks))


# -- generic Monte-Carlo MSE -------------------------------------------------

class Trial(NamedTuple):
    x: np.ndarray
    model: ComplexLinearModel
    stats: Optional[NoiseStats]
    y: np.ndarray


ESTIMATOR_TABLE = {
    EstimatorId.LS: lambda t: est.ls(t.model, t.y),
    EstimatorId.LS_REAL_PART: lambda t: est.ls_real_part(t.model, t.y),
    EstimatorId.WLLS: lambda t: est.wlls(t.model, t.y),
    EstimatorId.BLUE: lambda t: est.blue(t.model, t.stats, t.y),
    EstimatorId.BWLUE: lambda t: est.bwlue_standard(t.model, t.stats, t.y),
    EstimatorId.BWLUE_REAL_PART: lambda t: est.bwlue_standard_real_part(t.model, t.stats, t.y),
    EstimatorId.BWLUE_REAL: lambda t: est.bwlue_real(t.model, t.stats, t.y),
    EstimatorId.BWLUE_REAL_PROPER: lambda t: est.bwlue_real_proper(t.model, t.stats.cov, t.y),
    EstimatorId.REAL_COMPOSITE_BLUE: lambda t: est.real_composite_blue(t.model, t.stats, t.y),
}


def _apply(estimator, trial):
    if isinstance(estimator, (str, EstimatorId)):
        out = ESTIMATOR_TABLE[EstimatorId(estimator)](trial)
    else:
        out = estimator(trial)
    return out.x_hat if isinstance(out, EstimateReport) else np.asarray(out)


def _mc_block(bounds, estimator, model_factory, master_seed):
    errors = []
    for i in range(*bounds):
        trial = model_factory(substream(master_seed, i))
        try:
            x_hat = _apply(estimator, trial)
            errors.append(np.abs(np.ravel(x_hat) - np.ravel(trial.x)) ** 2)
        except (ArithmeticError, ValueError, np.linalg.LinAlgError):
            errors.append(np.full(np.size(trial.x), np.nan))
    return _moments(np.array(errors).T)


def monte_carlo_mse(estimator, model_factory, trials, master_seed, workers=1):
    """Per-component mean squared error of ``estimator`` and its standard error.

    Parameters
    ----------
    estimator : EstimatorId, str or callable
        An estimator id (applied as ``f(model, stats, y)``) or a callable
        taking a :class:`Trial` and returning an estimate.
    model_factory : callable
        ``model_factory(rng) -> Trial``; must be picklable when
        ``workers > 1``.

    Raises
    ------
    SweepAbort
        More than 0.1 % of the trials failed.
    """
    if trials < 2:
        raise ValueError("trials must be >= 2")
    fn = functools.partial(_mc_block, estimator=estimator, model_factory=model_factory,
                           master_seed=master_seed)
    m = _fold(fn, trials, workers)
    names = [str(getattr(estimator, "value", estimator))] * len(m.n)
    mse, se, _ = _finish(_Moments(*(a[None] for a in m)), trials, (0.0,), names)
    return mse[0], se[0]


# -- Example 1: two complex exponentials in improper noise -------------------

def _example1_setup(cfg):
    p = lambda k: cfg.param(k, EXAMPLE1_DEFAULTS)
    h = exp_model_matrix([p("omega1"), p("omega2")], int(p("n_y")))
    return ComplexLinearModel(h), np.array([p("x1"), p("x2")], dtype=float)


def _with_fallback(fn, *args):
    try:
        return fn(*args)
    except SingularMatrixError:
        # rho = 0 or 1: the augmented covariance is singular
        return fn(*args, singular="unified")


def _example1_block(bounds, cfg):
    model, x = _example1_setup(cfg)
    n_y = model.n_y
    z = np.stack([substream(cfg.master_seed, i).standard_normal((2, n_y))
                  for i in range(*bounds)], axis=-1)
    scale = 0.0 if cfg.param("zero_noise", EXAMPLE1_DEFAULTS) else 1.0
    clean = (model.h @ x)[:, None]
    errors = np.full((len(cfg.grid), len(EXAMPLE1_ESTIMATORS), z.shape[-1]), np.nan)
    for g, rho in enumerate(cfg.grid):
        stats = ImproperNoiseSpec(rho, n_y).stats()
        y = clean + scale * improper_noise_from_normals(rho, z[0], z[1])
        runs = {
            "ls": lambda: est.ls(model, y),
            "ls_real_part": lambda: est.ls_real_part(model, y),
            "wlls": lambda: est.wlls(model, y),
            "bwlue": lambda: _with_fallback(est.bwlue_standard, model, stats, y),
            "bwlue_real_part": lambda: _with_fallback(est.bwlue_standard_real_part,
                                                      model, stats, y),
            "bwlue_real": lambda: _with_fallback(est.bwlue_real, model, stats, y),
        }
        for e, name in enumerate(EXAMPLE1_ESTIMATORS):
            try:
                x_hat = runs[name]().x_hat
            except (ArithmeticError, ValueError, np.linalg.LinAlgError):
                continue
            errors[g, e] = np.mean(np.abs(x_hat - x[:, None]) ** 2, axis=0)
    return _moments(errors)


def run_example1(cfg, workers=1):
    """Average MSE over the parameter entries for the six estimators at each rho."""
    if cfg.sweep_variable != "rho":
        raise ValueError("example 1 sweeps rho")
    _example1_setup(cfg)
    m = _fold(functools.partial(_example1_block, cfg=cfg), cfg.trials, workers)
    mse, se, failed = _finish(m, cfg.trials, cfg.grid, EXAMPLE1_ESTIMATORS)
    return SweepResult("rho", EXAMPLE1_ESTIMATORS, cfg.grid, mse, se, failed, cfg.trials)


# -- Example 2: impulse response from magnitude / phase measurements ---------

def _example2_variances(cfg, value):
    p = lambda k: cfg.param(k, EXAMPLE2_DEFAULTS)
    n_y = int(p("n_y"))
    sigma_a2 = np.full(n_y, float(p("sigma_a2")))
    sigma_phi2 = np.full(n_y, float(p("sigma_phi2")))
    if cfg.sweep_variable == "sigma_a2":
        sigma_a2[:] = value
    else:
        sigma_phi2[:] = value
    sigma_phi2[0] = 0.0
    if p("zero_noise"):
        sigma_a2[:] = 0.0
        sigma_phi2[:] = 0.0
    return sigma_a2, sigma_phi2


def example2_draws(master_seed, bounds, n_y, n_taps=9):
    """Per-trial standard normals: impulse-response seeds, DC, magnitude, phase."""
    zh, z0, za, zp = [], [], [], []
    for i in range(*bounds):
        rng = substream(master_seed, i)
        zh.append(rng.standard_normal(n_taps))
        z0.append(rng.standard_normal())
        za.append(rng.standard_normal(n_y - 1))
        zp.append(rng.standard_normal(n_y - 1))
    return np.array(zh), np.array(z0), np.array(za), np.array(zp)


def _diag_bwlue(h, var, pseudo, y):
    var = var.copy()
    pseudo = pseudo.copy()
    var[:, 0], pseudo[:, 0] = regularize_dc_pair(var[:, 0], pseudo[:, 0])
    x, _ = bwlue_real_diagonal(h, var, pseudo, y)
    return x


def example2_estimates(y0, y_a, y_phi, response, sigma_a2, sigma_phi2, t_s, n_h,
                       unit_stats=False):
    """All five impulse-response estimates for a batch of trials.

    Arrays carry the trial on axis 0; ``response`` is the true frequency
    response (used only by the bound).  Returns a dict of
    ``(trials, n_h)`` arrays; failed trials are NaN rows.
    """
    n_y = len(sigma_a2)
    fm = FrequencyModel.build(n_y, n_h, t_s, sigma_phi2)
    model = ComplexLinearModel(fm.matrix)
    y = cartesian(y0, y_a, y_phi)
    out = {}
    full = np.fft.ifft(double_sided(y0, y_a, y_phi, t_s), axis=-1)
    out["idft"] = drop_imag(full[:, :n_h].T, "idft")[0].T
    # the WLLS method uses no noise statistics, so no phase attenuation D either
    plain = ComplexLinearModel(FrequencyModel.build(n_y, n_h, t_s, 0.0).matrix)
    out["wlls"] = est.wlls(plain, y.T).x_hat.T

    def stats_at(a_k, phi_k):
        if unit_stats:
            return np.ones(y.shape), np.zeros(y.shape, dtype=complex)
        return measurement_variances(a_k, phi_k, sigma_a2, sigma_phi2)

    out["bwlue_real"] = _diag_bwlue(fm.matrix, *stats_at(y_a, y_phi), y)
    step1 = frequency_response(est.wlls(model, y.T).x_hat.T, t_s, n_y)[:, 1:]
    out["two_step"] = _diag_bwlue(fm.matrix, *stats_at(np.abs(step1), np.angle(step1)), y)
    ac = response[:, 1:]
    out["bound"] = _diag_bwlue(fm.matrix, *stats_at(np.abs(ac), np.angle(ac)), y)
    return out


def _example2_block(bounds, cfg):
    p = lambda k: cfg.param(k, EXAMPLE2_DEFAULTS)
    n_y, n_h, t_s = int(p("n_y")), int(p("n_h")), float(p("t_s"))
    zh, z0, za, zp = example2_draws(cfg.master_seed, bounds, n_y, n_taps=n_h - 3)
    h = fir_lowpass_response(zh)
    response = frequency_response(h, t_s, n_y)
    errors = np.full((len(cfg.grid), len(EXAMPLE2_ESTIMATORS), len(z0)), np.nan)
    for g, value in enumerate(cfg.grid):
        sigma_a2, sigma_phi2 = _example2_variances(cfg, value)
        y0, y_a, y_phi = polar_from_normals(response, sigma_a2, sigma_phi2, z0, za, zp)
        out = example2_estimates(y0, y_a, y_phi, response, sigma_a2, sigma_phi2, t_s, n_h,
                                 unit_stats=bool(p("zero_noise")))
        for e, name in enumerate(EXAMPLE2_ESTIMATORS):
            errors[g, e] = np.mean((out[name] - h) ** 2, axis=1)
    return _moments(errors)


def run_example2(cfg, workers=1):
    """Average BMSE over the impulse-response taps for the five estimators."""
    if cfg.sweep_variable not in ("sigma_a2", "sigma_phi2"):
        raise ValueError("example 2 sweeps sigma_a2 or sigma_phi2")
    if cfg.param("n_h", EXAMPLE2_DEFAULTS) < 4:
        raise ValueError("n_h must be at least the FIR filter length 4")
    m = _fold(functools.partial(_example2_block, cfg=cfg), cfg.trials, workers)
    mse, se, failed = _finish(m, cfg.trials, cfg.grid, EXAMPLE2_ESTIMATORS)
    return SweepResult(cfg.sweep_variable, EXAMPLE2_ESTIMATORS, cfg.grid, mse, se, failed,
                       cfg.trials)
