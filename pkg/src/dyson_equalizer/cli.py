"""Command-line interface: ``dyson-eq {equalize,rank,denoise,mpfit,simulate}``.

Matrices are headerless comma-separated text, one matrix row per line. A
non-numeric first line is treated as a header, skipped, and reported on
stderr. Every command prints a JSON report to stdout.

Exit codes: 0 on success, 2 for bad usage or inputs, 3 for numerical failure.
"""
import argparse
import csv
import inspect
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .denoise import denoise_equalized, relative_mse
from .equalizer import EtaPolicy, equalize, zero_lines
from .errors import DysonEqualizerError, InvalidInput, NumericalFailure, ParseError
from .linalg import as_matrix
from .presets import PRESETS
from .spectrum import (
    MpParams,
    covariance_eigenvalues,
    esd,
    estimate_rank,
    ks_distance,
    mp_fit,
)

log = logging.getLogger("dyson_equalizer")

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_NUMERICAL = 3


class UsageError(InvalidInput):
    pass


# ---------------------------------------------------------------- file I/O


def _is_number(token):
    try:
        float(token)
    except ValueError:
        return False
    return True


def read_matrix(path):
    """Read a dense CSV matrix; skips a header line with a warning.

    Raises
    ------
    ParseError
    """
    try:
        with open(path, newline="") as fh:
            rows = [r for r in csv.reader(fh) if r and any(c.strip() for c in r)]
    except OSError as exc:
        raise ParseError(f"cannot read {path}: {exc.strerror}") from exc
    if rows and not all(_is_number(c) for c in rows[0]):
        log.warning("%s: first line is not numeric, skipping it as a header", path)
        rows = rows[1:]
    if not rows:
        raise ParseError(f"{path}: no data rows")
    width = len(rows[0])
    values = []
    for lineno, row in enumerate(rows, 1):
        if len(row) != width:
            raise ParseError(f"{path}: row {lineno} has {len(row)} fields, expected {width}")
        try:
            values.append([float(c) for c in row])
        except ValueError as exc:
            raise ParseError(f"{path}: row {lineno}: {exc}") from None
    return as_matrix(np.array(values), str(path))


def write_matrix(path, a):
    """Write `a` as CSV with 17 significant digits (exact float64 round trip)."""
    a = np.atleast_2d(np.asarray(a, dtype=np.float64))
    np.savetxt(path, a, fmt="%.17g", delimiter=",")
    return str(path)


def write_vector(path, v):
    return write_matrix(path, np.asarray(v, dtype=np.float64).reshape(-1, 1))


def write_table(path, rows):
    """Write a list of dicts as a CSV table with a header."""
    if not rows:
        Path(path).write_text("")
        return str(path)
    with open(path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=list(rows[0]))
        writer.writeheader()
        for row in rows:
            writer.writerow({k: (repr(float(v)) if isinstance(v, (float, np.floating)) else v)
                             for k, v in row.items()})
    return str(path)


def _jsonable(obj):
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, np.generic):
        return obj.item()
    if isinstance(obj, Path):
        return str(obj)
    raise TypeError(f"cannot serialize {type(obj).__name__}")


def make_report(command, inputs, outputs, seed=None):
    return {"command": command, "inputs": inputs, "outputs": outputs,
            "version": __version__, "seed": seed}


# ---------------------------------------------------------------- commands


def _policy(args):
    if args.eta is not None:
        return EtaPolicy.fixed(args.eta)
    return EtaPolicy.quantile(args.eta_quantile)


def _ks(a):
    m, n = a.shape
    return ks_distance(esd(covariance_eigenvalues(a)), MpParams.for_shape(m, n))


def cmd_equalize(args):
    y = read_matrix(args.input)
    dropped = {"rows": [], "cols": []}
    if args.drop_empty:
        rows, cols = zero_lines(y)
        if rows.size or cols.size:
            dropped = {"rows": rows.tolist(), "cols": cols.tolist()}
            y = np.delete(np.delete(y, rows, axis=0), cols, axis=1)
            if y.size == 0:
                raise InvalidInput("nothing left after dropping empty rows and columns")
    res = equalize(y, _policy(args))
    outputs = {
        "shape": list(y.shape),
        "eta": res.eta,
        "denom1": res.denom1,
        "denom2": res.denom2,
        "transposed": res.transposed,
        "dropped": dropped,
        "ks_pre": _ks(y),
        "ks_post": _ks(res.y_hat),
    }
    if args.out:
        prefix = args.out
        outputs["files"] = {
            "normalized": write_matrix(f"{prefix}_normalized.csv", res.y_hat),
            "row_factors": write_vector(f"{prefix}_row_factors.csv", res.factors.x),
            "col_factors": write_vector(f"{prefix}_col_factors.csv", res.factors.y),
        }
    else:
        outputs["row_factors"] = res.factors.x
        outputs["col_factors"] = res.factors.y
    return make_report("equalize", _inputs(args), outputs)


def cmd_rank(args):
    y = read_matrix(args.input)
    res = equalize(y, _policy(args))
    est = estimate_rank(res.y_hat, args.epsilon)
    top = est.exceed_margins[: est.r_hat + 5]
    return make_report("rank", _inputs(args), {
        "r_hat": est.r_hat,
        "threshold": est.threshold,
        "epsilon": est.epsilon,
        "eta": res.eta,
        "top_margins": top,
    })


def _parse_rank(text):
    if text in ("auto", "full"):
        return text
    try:
        r = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"rank must be auto, full or an integer, got {text!r}")
    if r < 0:
        raise argparse.ArgumentTypeError("rank must be nonnegative")
    return r


def cmd_denoise(args):
    y = read_matrix(args.input)
    if args.rank == "auto":
        rank = None
    elif args.rank == "full":
        rank = min(y.shape)
    else:
        rank = args.rank
    res = denoise_equalized(y, _policy(args), rank=rank, epsilon=args.epsilon)
    outputs = {"r_used": res.r_used, "method": res.method}
    if args.out:
        outputs["files"] = {"x_bar": write_matrix(args.out, res.x_bar)}
    if args.truth:
        outputs["relative_mse"] = relative_mse(res.x_bar, read_matrix(args.truth))
    return make_report("denoise", _inputs(args), outputs)


def _fit_payload(a, bins):
    fit = mp_fit(a, bins=bins)
    return {
        "ks": fit.ks,
        "lambda_max": fit.lambda_max,
        "beta_plus": fit.beta_plus,
        "edge_gap": fit.edge_gap,
        "histogram": {"bin_edges": fit.bin_edges, "counts": fit.counts},
        "mp_density": {"tau": fit.density_grid, "density": fit.density},
    }


def cmd_mpfit(args):
    y = read_matrix(args.input)
    if args.already_normalized:
        outputs = {"normalized": _fit_payload(y, args.bins)}
    else:
        res = equalize(y, _policy(args))
        outputs = {"raw": _fit_payload(y, args.bins),
                   "normalized": _fit_payload(res.y_hat, args.bins),
                   "eta": res.eta}
    return make_report("mpfit", _inputs(args), outputs)


def _load_config(path):
    try:
        cfg = json.loads(Path(path).read_text())
    except OSError as exc:
        raise ParseError(f"cannot read {path}: {exc.strerror}") from exc
    except json.JSONDecodeError as exc:
        raise ParseError(f"{path}: invalid JSON: {exc}") from None
    if not isinstance(cfg, dict) or "preset" not in cfg:
        raise UsageError('config must be a JSON object with a "preset" key')
    params = cfg.get("params", {})
    if not isinstance(params, dict):
        raise UsageError('"params" must be a JSON object')
    return cfg["preset"], params, cfg.get("trials")


def cmd_simulate(args):
    if args.config:
        name, params, cfg_trials = _load_config(args.config)
    else:
        name, params, cfg_trials = args.preset, {}, None
    if name not in PRESETS:
        raise UsageError(f"unknown preset {name!r}; choose from {', '.join(sorted(PRESETS))}")
    fn = PRESETS[name]
    allowed = set(inspect.signature(fn).parameters) - {"seed", "trials"}
    unknown = set(params) - allowed
    if unknown:
        raise UsageError(f"unknown parameters for {name}: {sorted(unknown)}; "
                         f"allowed: {sorted(allowed)}")
    trials = args.trials if args.trials is not None else (cfg_trials or 10)
    if trials < 1:
        raise UsageError("trials must be at least 1")
    tables, summary = fn(args.seed, trials, **params)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    files = {key: write_table(out / f"{name}_{key}.csv", rows) for key, rows in tables.items()}
    inputs = {"preset": name, "params": params, "trials": trials, "out": str(out)}
    return make_report("simulate", inputs, {"files": files, **summary}, seed=args.seed)


def _inputs(args):
    skip = {"func", "command"}
    return {k: v for k, v in vars(args).items() if k not in skip}


# ---------------------------------------------------------------- parser


def _add_eta(p):
    g = p.add_mutually_exclusive_group()
    g.add_argument("--eta", type=float, help="fixed imaginary shift")
    g.add_argument("--eta-quantile", type=float, default=0.5,
                   help="quantile of the singular values used as eta (default: median)")


def build_parser():
    parser = argparse.ArgumentParser(prog="dyson-eq", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    parser.add_argument("--report", help="also write the JSON report to this file")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("equalize", help="normalize rows and columns")
    p.add_argument("input")
    _add_eta(p)
    p.add_argument("--drop-empty", action="store_true",
                   help="drop all-zero rows and columns instead of failing")
    p.add_argument("--out", help="prefix for the output CSV files")
    p.set_defaults(func=cmd_equalize)

    p = sub.add_parser("rank", help="estimate the signal rank")
    p.add_argument("input")
    _add_eta(p)
    p.add_argument("--epsilon", type=float, default=0.0)
    p.set_defaults(func=cmd_rank)

    p = sub.add_parser("denoise", help="low-rank recovery after equalization")
    p.add_argument("input")
    _add_eta(p)
    p.add_argument("--rank", type=_parse_rank, default="auto", help="auto, full or an integer")
    p.add_argument("--epsilon", type=float, default=0.0)
    p.add_argument("--out", help="output CSV for the estimate")
    p.add_argument("--truth", help=argparse.SUPPRESS)
    p.set_defaults(func=cmd_denoise)

    p = sub.add_parser("mpfit", help="compare the spectrum with the Marchenko-Pastur law")
    p.add_argument("input")
    _add_eta(p)
    p.add_argument("--already-normalized", action="store_true")
    p.add_argument("--bins", type=int, default=50)
    p.set_defaults(func=cmd_mpfit)

    p = sub.add_parser("simulate", help="run a named simulation")
    g = p.add_mutually_exclusive_group(required=True)
    g.add_argument("--preset", help=f"one of: {', '.join(PRESETS)}")
    g.add_argument("--config", help="JSON file with a preset name and parameter overrides")
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--trials", type=int)
    p.add_argument("--out", default=".", help="output directory")
    p.set_defaults(func=cmd_simulate)
    return parser


def main(argv=None):
    logging.basicConfig(format="dyson-eq: %(levelname)s: %(message)s", level=logging.WARNING)
    args = build_parser().parse_args(argv)
    try:
        report = args.func(args)
    except NumericalFailure as exc:
        print(f"dyson-eq: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except DysonEqualizerError as exc:
        print(f"dyson-eq: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    text = json.dumps(report, default=_jsonable, indent=2, sort_keys=True)
    if args.report:
        Path(args.report).write_text(text + "\n")
    print(text)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
