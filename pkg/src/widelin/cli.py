"""Command-line front end.

Exit status: 0 on success, 2 for usage, configuration or input errors,
3 when a numeric computation fails.
"""

import argparse
import csv
import math
import os
import sys
from pathlib import Path

import numpy as np

from . import checks
from . import estimators as est
from . import experiments as exp
from . import measurement as meas
from .algebra import ValidationError

EXIT_OK, EXIT_USAGE, EXIT_NUMERIC = 0, 2, 3

CSV_HEADER = ("k", "f_hz", "y_mag", "y_phase_rad", "sigma_mag2", "sigma_phase2")
METHODS = ("idft", "wlls", "bwlue", "twostep")
COMMON_KEYS = {"seed": int, "trials": int, "workers": int, "output": str}


class ConfigError(ValueError):
    pass


# -- configuration -----------------------------------------------------------

def _typed(defaults):
    return {k: type(v) for k, v in defaults.items()}


ALLOWED = {
    "example1": {**COMMON_KEYS, **_typed(exp.EXAMPLE1_DEFAULTS)},
    "example2": {**COMMON_KEYS, "sweep": str, **_typed(exp.EXAMPLE2_DEFAULTS)},
    "estimate": {"output": str, "nh": int, "method": str},
    "check": {"seed": int},
}


def parse_pairs(lines, source):
    """``key = value`` lines; ``#`` starts a comment."""
    out = {}
    for no, raw in enumerate(lines, 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        if not sep or not key.strip():
            raise ConfigError(f"{source}:{no}: expected 'key = value', got {raw.strip()!r}")
        out[key.strip()] = value.strip()
    return out


def _convert(key, value, kind):
    try:
        if kind is int:
            f = float(value)
            if not f.is_integer():
                raise ValueError
            return int(f)
        return kind(value)
    except ValueError:
        raise ConfigError(f"{key}: cannot read {value!r} as {kind.__name__}") from None


def resolve_config(args):
    """Merge config file, ``--set`` overrides and explicit flags (later wins)."""
    allowed = ALLOWED[args.command]
    raw = {}
    if args.config:
        try:
            text = Path(args.config).read_text()
        except OSError as e:
            raise ConfigError(f"cannot read config file: {e}") from None
        raw.update(parse_pairs(text.splitlines(), args.config))
    raw.update(parse_pairs(args.set or [], "--set"))
    for key in allowed:
        flag = getattr(args, key, None)
        if flag is not None:
            raw[key] = str(flag)
    unknown = sorted(set(raw) - set(allowed))
    if unknown:
        raise ConfigError(f"unknown key(s) for {args.command}: {', '.join(unknown)}")
    return {k: _convert(k, v, allowed[k]) for k, v in raw.items()}


def _output_dir(cfg):
    d = Path(cfg.get("output") or os.environ.get("WIDELIN_OUTPUT") or ".")
    try:
        d.mkdir(parents=True, exist_ok=True)
    except OSError as e:
        raise ConfigError(f"cannot create output directory {d}: {e}") from None
    if not os.access(d, os.W_OK):
        raise ConfigError(f"output directory {d} is not writable")
    return d


def _positive(cfg, key, default):
    v = cfg.get(key, default)
    if v < 1:
        raise ConfigError(f"{key} must be positive, got {v}")
    return v


def _fixed(cfg, defaults):
    return {k: v for k, v in cfg.items() if k in defaults}


# -- commands ----------------------------------------------------------------

def cmd_example1(cfg):
    trials = _positive(cfg, "trials", 100_000)
    workers = _positive(cfg, "workers", os.cpu_count() or 1)
    out = _output_dir(cfg)
    sweep = exp.example1_config(trials, cfg.get("seed", 0),
                                **_fixed(cfg, exp.EXAMPLE1_DEFAULTS))
    result = exp.run_example1(sweep, workers=workers)
    print(result.write(out, "example1_mse"))
    return EXIT_OK


def cmd_example2(cfg):
    if "sweep" not in cfg:
        raise ConfigError("example2 needs --sweep {mag,phase}")
    if cfg["sweep"] not in ("mag", "phase"):
        raise ConfigError(f"sweep must be 'mag' or 'phase', not {cfg['sweep']!r}")
    trials = _positive(cfg, "trials", 20_000)
    workers = _positive(cfg, "workers", os.cpu_count() or 1)
    out = _output_dir(cfg)
    sweep = exp.example2_config(cfg["sweep"], trials, cfg.get("seed", 0),
                                **_fixed(cfg, exp.EXAMPLE2_DEFAULTS))
    result = exp.run_example2(sweep, workers=workers)
    print(result.write(out, f"example2_{cfg['sweep']}_bmse"))
    return EXIT_OK


def _cell(row, col, line, required=True):
    text = row[col].strip()
    if not text:
        if required:
            raise ConfigError(f"line {line}, column {col}: missing value")
        return None
    try:
        value = float(text)
    except ValueError:
        raise ConfigError(f"line {line}, column {col}: {text!r} is not a number") from None
    if not math.isfinite(value):
        raise ConfigError(f"line {line}, column {col}: value must be finite")
    return value


def read_measurements(path):
    """Parse a measurement CSV.

    Returns ``(y0, polar, sigma_a2, sigma_phi2, t_s)`` with the sampling
    period recovered from the frequency spacing.
    """
    try:
        with open(path, newline="") as fh:
            reader = csv.DictReader(fh)
            rows = list(reader)
            fields = tuple(f.strip() for f in reader.fieldnames or ())
    except (OSError, UnicodeDecodeError, csv.Error) as e:
        raise ConfigError(f"cannot read {path}: {e}") from None
    if fields != CSV_HEADER:
        raise ConfigError(f"line 1: header must be {','.join(CSV_HEADER)}")
    if len(rows) < 2:
        raise ConfigError("need the DC row and at least one further frequency")
    rows = [{k.strip(): (v or "") for k, v in r.items() if k is not None} for r in rows]
    f, mag, phase, s_a, s_p = [], [], [], [], []
    for i, row in enumerate(rows):
        line = i + 2
        k = _cell(row, "k", line)
        if k != i:
            raise ConfigError(f"line {line}, column k: expected {i}, got {row['k']!r}")
        f.append(_cell(row, "f_hz", line))
        mag.append(_cell(row, "y_mag", line))
        ph = _cell(row, "y_phase_rad", line, required=i > 0)
        if i == 0 and ph is not None:
            raise ConfigError(f"line {line}, column y_phase_rad: must be empty for DC")
        phase.append(ph)
        s_a.append(_cell(row, "sigma_mag2", line))
        s_p.append(_cell(row, "sigma_phase2", line, required=i > 0) or 0.0)
        if i > 0 and mag[-1] < 0:
            raise ConfigError(f"line {line}, column y_mag: magnitude must be nonnegative")
        if s_a[-1] < 0 or s_p[-1] < 0:
            raise ConfigError(f"line {line}: variances must be nonnegative")
    f = np.array(f)
    df = f[1]
    if f[0] != 0 or df <= 0:
        raise ConfigError("line 2, column f_hz: DC row must have f_hz = 0 and f_hz must increase")
    bad = np.flatnonzero(np.abs(f - df * np.arange(len(f))) > 1e-9 * df * len(f))
    if bad.size:
        raise ConfigError(f"line {bad[0] + 2}, column f_hz: frequencies are not equidistant")
    n_y = len(rows)
    t_s = 1.0 / ((2 * n_y - 1) * df)
    polar = [meas.PolarMeasurement(mag[k], phase[k], k) for k in range(1, n_y)]
    sigma_phi2 = np.array(s_p)
    sigma_phi2[0] = 0.0
    return mag[0], polar, np.array(s_a), sigma_phi2, t_s


def estimate(method, y0, polar, sigma_a2, sigma_phi2, t_s, n_h):
    """Impulse-response estimate and (where available) its standard deviations."""
    if method == "idft":
        return meas.idft_estimator(y0, polar, t_s, n_h).x_hat, None
    if method == "wlls":
        # no noise statistics, hence no phase attenuation in the model
        model, _, y = meas.build_example2_model(y0, polar, sigma_a2, np.zeros_like(sigma_phi2),
                                                t_s, n_h)
        return est.wlls(model, y).x_hat, None
    if method == "bwlue":
        model, stats, y = meas.build_example2_model(y0, polar, sigma_a2, sigma_phi2, t_s, n_h)
        rep = est.bwlue_real(model, stats, y)
    else:
        rep = meas.two_step_estimator(y0, polar, t_s, n_h, sigma_a2, sigma_phi2)
    return rep.x_hat, np.sqrt(np.clip(np.diag(rep.covariance).real, 0.0, None))


def cmd_estimate(cfg, input_path):
    if "nh" not in cfg:
        raise ConfigError("estimate needs --nh")
    method = cfg.get("method", "bwlue")
    if method not in METHODS:
        raise ConfigError(f"method must be one of {', '.join(METHODS)}")
    n_h = _positive(cfg, "nh", 1)
    out = _output_dir(cfg)
    y0, polar, sigma_a2, sigma_phi2, t_s = read_measurements(input_path)
    n_y = len(polar) + 1
    n_d = 2 * n_y - 1
    if n_h > n_d:
        raise ConfigError(
            f"--nh {n_h} is not identifiable from {n_y} frequencies: "
            f"at most {n_d} real taps (2*N_y - 1) can be estimated")
    h, std = estimate(method, y0, polar, sigma_a2, sigma_phi2, t_s, n_h)
    path = out / "h_estimate.csv"
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["n", "h_hat", "h_std"])
        for n, v in enumerate(h):
            w.writerow([n, f"{v:.17g}", "" if std is None else f"{std[n]:.17g}"])
    print(path)
    return EXIT_OK


def cmd_check(cfg):
    results = checks.run_checks(cfg.get("seed", 0))
    width = max(len(r.name) for r in results)
    for r in results:
        print(f"{'PASS' if r.passed else 'FAIL'}  {r.name:<{width}}  {r.detail}")
    failed = [r.name for r in results if not r.passed]
    if failed:
        print(f"{len(failed)} check(s) failed: {', '.join(failed)}", file=sys.stderr)
        return EXIT_NUMERIC
    return EXIT_OK


# -- entry point -------------------------------------------------------------

def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", metavar="PATH", help="key = value configuration file")
    common.add_argument("--set", action="append", metavar="KEY=VALUE",
                        help="override one configuration key (repeatable)")
    common.add_argument("--output", metavar="DIR",
                        help="output directory (default: $WIDELIN_OUTPUT or .)")

    runs = argparse.ArgumentParser(add_help=False)
    runs.add_argument("--seed", type=int)
    runs.add_argument("--trials", type=int)
    runs.add_argument("--workers", type=int, help="worker processes (default: all cores)")

    parser = argparse.ArgumentParser(
        prog="widelin", description="Widely linear estimation of real parameters.")
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("example1", parents=[common, runs],
                   help="two complex exponentials in improper noise")
    p2 = sub.add_parser("example2", parents=[common, runs],
                        help="impulse response from magnitude/phase measurements")
    p2.add_argument("--sweep", choices=("mag", "phase"), required=True)
    pe = sub.add_parser("estimate", parents=[common],
                        help="estimate an impulse response from a measurement CSV")
    pe.add_argument("input", metavar="INPUT")
    pe.add_argument("--nh", type=int)
    pe.add_argument("--method", choices=METHODS)
    pc = sub.add_parser("check", help="run the fast invariant suite")
    pc.add_argument("--seed", type=int)
    pc.set_defaults(config=None, set=None)
    return parser


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return e.code
    try:
        cfg = resolve_config(args)
        if args.command == "example1":
            return cmd_example1(cfg)
        if args.command == "example2":
            return cmd_example2(cfg)
        if args.command == "estimate":
            return cmd_estimate(cfg, args.input)
        return cmd_check(cfg)
    except (ConfigError, ValidationError) as e:
        print(f"widelin: error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except (exp.SweepAbort, ArithmeticError, np.linalg.LinAlgError) as e:
        print(f"widelin: numeric failure: {e}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
