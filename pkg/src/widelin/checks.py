"""
Fast self-checks of the estimator identities, run by ``widelin check``.

Each check draws seeded random instances and compares two independent
routes to the same quantity.
"""

from typing import NamedTuple

import numpy as np

from . import estimators as est
from . import measurement as meas
from .algebra import TOL_EQUIV, ComplexLinearModel, NoiseStats, draw_noise, stack_conjugate


class CheckResult(NamedTuple):
    name: str
    passed: bool
    detail: str


def random_improper_stats(rng, n, spread=1.0):
    """Random full-rank improper noise statistics (via a real composite covariance)."""
    a = rng.standard_normal((2 * n, 2 * n))
    c_r = a @ a.T / (2 * n) + spread * 0.05 * np.eye(2 * n)
    return NoiseStats.from_real_composite(c_r)


def random_proper_stats(rng, n):
    a = rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n))
    return NoiseStats.proper(a @ a.conj().T / n + 0.1 * np.eye(n))


def random_model(rng, n_y, n_x):
    return ComplexLinearModel(rng.standard_normal((n_y, n_x))
                              + 1j * rng.standard_normal((n_y, n_x)))


def random_instance(rng, n_y=None, n_x=None, proper=False):
    """Model, noise statistics, true real ``x`` and one noisy measurement."""
    n_y = int(rng.integers(3, 13)) if n_y is None else n_y
    n_x = int(rng.integers(1, 2 * n_y + 1)) if n_x is None else n_x
    model = random_model(rng, n_y, n_x)
    stats = random_proper_stats(rng, n_y) if proper else random_improper_stats(rng, n_y)
    x = rng.standard_normal(n_x)
    y = model.h @ x + draw_noise(stats, rng)
    return model, stats, x, y


def rel_dev(a, b):
    a = np.asarray(a)
    b = np.asarray(b)
    return float(np.max(np.abs(a - b)) / max(np.max(np.abs(b)), 1e-300))


def lattice_pairs(rng, count=100):
    """Yield ``(name, lhs, rhs)`` for every equivalence of the estimator lattice."""
    for _ in range(count):
        model, stats, _, y = random_instance(rng)
        yield ("bwlue_real == real_composite_blue",
               est.bwlue_real(model, stats, y).x_hat,
               est.real_composite_blue(model, stats, y).x_hat)
        yield ("bwlue_real(C_aug=I) == wlls",
               est.bwlue_real(model, NoiseStats.white(model.n_y), y).x_hat,
               est.wlls(model, y).x_hat)
        yield ("wwlls(W=I) == wlls",
               est.wwlls(model, np.eye(model.n_y), y).x_hat,
               est.wlls(model, y).x_hat)
        # complex-parameter estimators need more measurements than parameters
        n_y = model.n_y
        n_x = int(rng.integers(1, n_y))
        small = random_model(rng, n_y, n_x)
        proper = random_proper_stats(rng, n_y)
        y2 = small.h @ rng.standard_normal(n_x) + rng.standard_normal(n_y) \
            + 1j * rng.standard_normal(n_y)
        yield ("bwlue(proper) == blue",
               est.bwlue_standard(small, proper, y2).x_hat,
               est.blue(small, proper, y2).x_hat)
        yield ("blue(C=I) == ls",
               est.blue(small, NoiseStats.white(n_y), y2).x_hat,
               est.ls(small, y2).x_hat)


def check_lattice(rng, count=20):
    worst = {}
    for name, a, b in lattice_pairs(rng, count):
        worst[name] = max(worst.get(name, 0.0), rel_dev(a, b))
    return [CheckResult(name, dev <= TOL_EQUIV, f"max rel dev {dev:.2e}")
            for name, dev in worst.items()]


def check_constraint(rng, count=20):
    worst = 0.0
    for _ in range(count):
        model, stats, _, _ = random_instance(rng)
        g, _ = est.bwlue_real_matrix(model, stats)
        ht = stack_conjugate(model.h).h_tilde
        worst = max(worst, float(np.max(np.abs(g @ ht - np.eye(model.n_x)))))
    return CheckResult("G_BW H~ == I", worst <= TOL_EQUIV, f"max dev {worst:.2e}")


def check_realness(rng, count=20):
    worst = 0.0
    for _ in range(count):
        model, stats, _, y = random_instance(rng)
        for rep in (est.wlls(model, y), est.wwlls(model, random_proper_stats(rng, model.n_y).cov, y),
                    est.bwlue_real(model, stats, y)):
            worst = max(worst, rep.imag_residue / (1 + np.linalg.norm(rep.x_hat)))
    return CheckResult("imaginary residue of real-constrained estimators",
                       bool(worst <= est.TOL_REAL), f"max rel residue {worst:.2e}")


def check_proper_fast_path(rng, count=20):
    worst = 0.0
    for _ in range(count):
        model, stats, _, y = random_instance(rng, proper=True)
        worst = max(worst, rel_dev(est.bwlue_real_proper(model, stats.cov, y).x_hat,
                                   est.bwlue_real(model, stats, y).x_hat))
    return CheckResult("bwlue_real_proper == bwlue_real(pseudo=0)", worst <= TOL_EQUIV,
                       f"max rel dev {worst:.2e}")


def check_wlls_cost(rng, count=20):
    """WLLS must not be beaten by any real perturbation of its estimate."""
    ok = True
    for _ in range(count):
        model, _, _, y = random_instance(rng)
        x = est.wlls(model, y).x_hat
        cost = lambda v: float(np.sum(np.abs(y - model.h @ v) ** 2))
        base = cost(x)
        deltas = 1e-3 * rng.standard_normal((50, model.n_x))
        ok &= all(cost(x + d) >= base - 1e-12 * (1 + base) for d in deltas)
    return CheckResult("wlls minimizes the LS cost over real x", bool(ok), "50 perturbations")


def check_dc_invariance(rng, count=10):
    worst = 0.0
    for _ in range(count):
        h = meas.fir_lowpass_response(rng.standard_normal(9))
        sa = np.full(10, 1e-3)
        sp = np.full(10, 1e-1)
        y0, polar = meas.gen_polar_measurements(h, 1.0, sa, sp, rng)
        xs = []
        for c in (1.0, 7.0):
            model, stats, y = meas.build_example2_model(y0, polar, sa, sp, 1.0, 12,
                                                        imag_variance=c)
            xs.append(est.bwlue_real(model, stats, y).x_hat)
        worst = max(worst, rel_dev(xs[0], xs[1]))
    return CheckResult("dc_regularize leaves bwlue_real unchanged", worst <= TOL_EQUIV,
                       f"max rel dev {worst:.2e}")


def check_converted_moments():
    s = meas.converted_noise_stats(1.0, 0.3, 1e-3, np.array([1e-6, 1e-3, 0.1, 1.0]))
    dev = float(np.max(np.abs(s.beta - s.alpha**4)))
    return CheckResult("beta == alpha**4", dev <= 1e-15, f"max dev {dev:.2e}")


def run_checks(seed=0):
    rng = np.random.default_rng(seed)
    results = list(check_lattice(rng))
    results += [check_constraint(rng), check_realness(rng), check_proper_fast_path(rng),
                check_wlls_cost(rng), check_dc_invariance(rng), check_converted_moments()]
    return results
