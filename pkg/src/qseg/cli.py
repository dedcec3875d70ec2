"""Command-line interface: fit a series, manage calibration, run simulations.

Exit codes: 0 ok; 2 unreadable or unparseable input; 64 invalid flags;
65 corrupted calibration cache; 70 internal error.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
import time

import numpy as np

from .calibration import calibrate
from .core import IntervalSystem, QuantileConfig
from .errors import CacheCorruption, InfeasibleSegment, InvalidInput, InvalidQuery
from .evaluation import SCENARIOS, run_experiment
from .segmentation import Segmentation, m_muscle, muscle, muscle_s

EXIT_OK = 0
EXIT_DATA = 2
EXIT_USAGE = 64
EXIT_CACHE = 65
EXIT_INTERNAL = 70


class _DataError(Exception):
    """unreadable input or a value that does not parse."""


class _Parser(argparse.ArgumentParser):
    # argparse exits 2 on usage errors by default; the contract wants 64
    def error(self, message):
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _add_common(p: argparse.ArgumentParser):
    p.add_argument("--beta", type=float, default=0.5,
                   help="quantile level (default 0.5)")
    p.add_argument("--betas", type=str, default=None,
                   help="comma-separated increasing quantile levels; more "
                        "than one selects the multilevel fit")
    p.add_argument("--alpha", type=float, default=0.3,
                   help="local error level (default 0.3)")
    p.add_argument("--intervals", choices=("all", "dyadic"), default="dyadic",
                   help="interval system (default dyadic)")
    p.add_argument("--mc-reps", type=int, default=5000,
                   help="Monte-Carlo repetitions for calibration")
    p.add_argument("--seed", type=int, default=0,
                   help="master seed; all randomness derives from it")
    p.add_argument("--cache", type=str, default=None,
                   help="calibration cache file (append-only text)")
    p.add_argument("--verbose", action="store_true")


def _build_parser() -> argparse.ArgumentParser:
    ap = _Parser(prog="qseg",
                 description="multiscale quantile segmentation")
    sub = ap.add_subparsers(dest="subcommand", required=True)

    fit = sub.add_parser("fit", help="segment a series from a file",
                         description="Fit a piecewise-constant quantile "
                                     "function to a numeric series.")
    fit.add_argument("--input", required=True, help="text or CSV file")
    fit.add_argument("--column", default=None,
                     help="column of a delimited file: 0-based index or "
                          "header name")
    fit.add_argument("--split", type=int, default=0,
                     help="piece size for split fitting (0 = off)")
    fit.add_argument("--output", default=None,
                     help="JSON result path (default: stdout)")
    fit.add_argument("--plot", default=None, help="write an SVG plot here")
    _add_common(fit)
    fit.set_defaults(func=fit_command)

    cal = sub.add_parser("calibrate", help="populate the calibration cache",
                         description="Simulate critical values for the "
                                     "series length found in --input.")
    cal.add_argument("--input", required=True,
                     help="series file; only its length is used")
    cal.add_argument("--column", default=None)
    _add_common(cal)
    cal.set_defaults(func=calibrate_command)

    sim = sub.add_parser("simulate", help="run a named simulation scenario")
    sim.add_argument("--scenario", required=True, choices=sorted(SCENARIOS),
                     help="scenario name")
    sim.add_argument("--reps", type=int, default=200)
    sim.add_argument("--split", type=int, default=0,
                     help="piece size for split fitting (0 = off)")
    sim.add_argument("--csv", default=None,
                     help="per-repetition metrics CSV path (default: stdout)")
    _add_common(sim)
    sim.set_defaults(func=simulate_command)
    return ap


def _parse_betas(args) -> tuple:
    if args.betas is not None:
        try:
            betas = tuple(float(b) for b in args.betas.split(","))
        except ValueError:
            raise InvalidInput(f"--betas {args.betas!r} is not a comma-"
                               "separated list of numbers")
    else:
        betas = (args.beta,)
    return betas


def read_series(path: str, column) -> np.ndarray:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            lines = fh.read().splitlines()
    except OSError as e:
        raise _DataError(f"cannot read {path}: {e.strerror or e}")
    rows = [(i + 1, ln) for i, ln in enumerate(lines) if ln.strip()]
    if not rows:
        raise _DataError(f"{path}: no data")
    if column is None:
        vals = []
        for lineno, ln in rows:
            try:
                vals.append(float(ln.strip()))
            except ValueError:
                raise _DataError(
                    f"{path}: line {lineno}: {ln.strip()!r} is not a number"
                    " (use --column for delimited files)")
        return np.asarray(vals)
    parsed = list(csv.reader([ln for _, ln in rows]))
    linenos = [lineno for lineno, _ in rows]
    try:
        idx = int(column)
        start = 0
    except ValueError:
        header = [h.strip() for h in parsed[0]]
        if column not in header:
            raise _DataError(
                f"{path}: no column named {column!r} in header {header}")
        idx = header.index(column)
        start = 1
    vals = []
    for lineno, fields in zip(linenos[start:], parsed[start:]):
        if idx >= len(fields):
            raise _DataError(f"{path}: line {lineno}: no column {idx}")
        cell = fields[idx].strip()
        try:
            vals.append(float(cell))
        except ValueError:
            raise _DataError(
                f"{path}: line {lineno}: {cell!r} is not a number")
    if not vals:
        raise _DataError(f"{path}: no data rows")
    return np.asarray(vals)


def _calibrate_all(n: int, betas, alpha: float, system: IntervalSystem,
                   mc_reps: int, seed: int, cache):
    m = len(betas)
    return [calibrate(n, beta=b, alpha=alpha / m, system=system,
                      n_reps=mc_reps, master_seed=seed, cache_path=cache)
            for b in betas]


def _fit(z: np.ndarray, config: QuantileConfig, tables, split: int):
    if len(config.betas) > 1:
        return m_muscle(z, config, tables)
    if split > 0:
        return muscle_s(z, config, tables[0], piece_size=split)
    return muscle(z, config, tables[0])


def _result_json(z, seg: Segmentation, config: QuantileConfig, tables,
                 runtime_ms: float) -> dict:
    n = int(z.size)
    per_level = [[seg.values[k][lev] for k in range(len(seg.values))]
                 for lev in range(len(config.betas))]
    return {
        "n": n,
        "betas": list(config.betas),
        "alpha": config.alpha,
        "interval_system": config.intervals.value,
        "k_hat": seg.k_hat,
        "change_point_indices": [int(b) for b in seg.boundaries[1:]],
        "change_point_fractions": [(b - 1) / n for b in seg.boundaries[1:]],
        "segment_values": per_level,
        "total_loss": seg.total_loss,
        "calibration_key": ";".join(t.key for t in tables),
        "runtime_ms": runtime_ms,
    }


def _svg_plot(z: np.ndarray, seg: Segmentation, path: str):
    """self-contained deterministic plot: points, step fit(s), cp markers."""
    w, h, pad = 900.0, 420.0, 40.0
    n = z.size
    lo = float(min(z.min(), min(min(v) for v in seg.values)))
    hi = float(max(z.max(), max(max(v) for v in seg.values)))
    if hi <= lo:
        hi = lo + 1.0
    span = hi - lo

    def sx(i):   # sample index (1-based) to x
        return pad + (w - 2 * pad) * (i - 1) / max(n - 1, 1)

    def sy(v):
        return h - pad - (h - 2 * pad) * (v - lo) / span

    out = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{w:.0f}" '
           f'height="{h:.0f}" viewBox="0 0 {w:.0f} {h:.0f}">',
           f'<rect width="{w:.0f}" height="{h:.0f}" fill="white"/>']
    pts = " ".join(f"{sx(i + 1):.2f},{sy(float(z[i])):.2f}" for i in range(n))
    out.append(f'<polyline points="{pts}" fill="none" stroke="#bbbbbb" '
               'stroke-width="0.7"/>')
    for b in seg.boundaries[1:]:
        x = sx(b)
        out.append(f'<line x1="{x:.2f}" y1="{pad:.0f}" x2="{x:.2f}" '
                   f'y2="{h - pad:.0f}" stroke="#cc3333" stroke-width="1" '
                   'stroke-dasharray="4,3"/>')
    nlev = len(seg.values[0])
    bounds = list(seg.boundaries) + [n + 1]
    for lev in range(nlev):
        step = []
        for k in range(len(seg.boundaries)):
            y = sy(seg.values[k][lev])
            step.append(f"{sx(bounds[k]):.2f},{y:.2f}")
            step.append(f"{sx(bounds[k + 1] - 1):.2f},{y:.2f}")
        out.append(f'<polyline points="{" ".join(step)}" fill="none" '
                   'stroke="#222222" stroke-width="1.8"/>')
    out.append("</svg>")
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(out) + "\n")


def fit_command(args) -> int:
    betas = _parse_betas(args)
    system = IntervalSystem(args.intervals)
    config = QuantileConfig(betas=betas, alpha=args.alpha, intervals=system,
                            mc_reps=args.mc_reps, master_seed=args.seed)
    z = read_series(args.input, args.column)
    tables = _calibrate_all(z.size, betas, args.alpha, system, args.mc_reps,
                            args.seed, args.cache)
    t0 = time.perf_counter()
    seg = _fit(z, config, tables, args.split)
    runtime_ms = (time.perf_counter() - t0) * 1000.0
    doc = _result_json(z, seg, config, tables, runtime_ms)
    text = json.dumps(doc, indent=2)
    if args.output:
        with open(args.output, "w", encoding="utf-8") as fh:
            fh.write(text + "\n")
    else:
        print(text)
    if args.plot:
        _svg_plot(z, seg, args.plot)
    if args.verbose:
        print(f"n={z.size} k_hat={seg.k_hat} runtime={runtime_ms:.1f}ms",
              file=sys.stderr)
    return EXIT_OK


def calibrate_command(args) -> int:
    betas = _parse_betas(args)
    system = IntervalSystem(args.intervals)
    z = read_series(args.input, args.column)
    t0 = time.perf_counter()
    tables = _calibrate_all(z.size, betas, args.alpha, system, args.mc_reps,
                            args.seed, args.cache)
    elapsed = (time.perf_counter() - t0) * 1000.0
    for t in tables:
        print(f"{t.key}: {len(t.grid)} grid lengths, "
              f"fallback_c={t.fallback_c:.6g}")
        if args.verbose:
            for m, q in zip(t.grid, t.values):
                print(f"  m={int(m)} q={q:.17g}")
    if args.verbose:
        print(f"calibration took {elapsed:.1f}ms", file=sys.stderr)
    return EXIT_OK


def simulate_command(args) -> int:
    betas = _parse_betas(args)
    system = IntervalSystem(args.intervals)
    scenario = SCENARIOS[args.scenario]
    method = ("m_muscle" if len(betas) > 1
              else ("muscle_s" if args.split > 0 else "muscle"))
    kwargs = {"piece_size": args.split} if args.split > 0 else {}
    res = run_experiment(scenario, method=method, reps=args.reps,
                         alpha=args.alpha, seed=args.seed, betas=betas,
                         system=system, mc_reps=args.mc_reps,
                         master_seed=args.seed, cache_path=args.cache,
                         **kwargs)
    rows = res.csv_rows()
    if args.csv:
        with open(args.csv, "w", encoding="utf-8", newline="") as fh:
            csv.writer(fh).writerows(rows)
    else:
        csv.writer(sys.stdout).writerows(rows)
    if args.verbose:
        agg = res.aggregates()
        print(", ".join(f"{k}={v[0]:.4g}" for k, v in agg.items()),
              file=sys.stderr)
    return EXIT_OK


def main(argv=None) -> int:
    try:
        args = _build_parser().parse_args(argv)
    except SystemExit as e:
        code = e.code
        return int(code) if code is not None else 0
    try:
        return args.func(args)
    except _DataError as e:
        print(f"qseg: {e}", file=sys.stderr)
        return EXIT_DATA
    except (InvalidInput, InvalidQuery) as e:
        print(f"qseg: {e}", file=sys.stderr)
        return EXIT_USAGE
    except CacheCorruption as e:
        print(f"qseg: cache corruption: {e}", file=sys.stderr)
        return EXIT_CACHE
    except (InfeasibleSegment, RuntimeError) as e:
        print(f"qseg: internal error: {e}", file=sys.stderr)
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
