"""``nfbm`` command line: simulate, figures, cov, predict, loglik, invert.

Exit codes: 0 success, 1 I/O failure, 2 invalid input, 3 numerical failure.
Output files go to ``--out`` or, when omitted, into ``$NFBM_OUTPUT_DIR``
(default: the working directory).
"""

import argparse
import sys
import time
from pathlib import Path

import numpy as np

from . import io
from .covariance import NormalizationMode, cov_matrix
from .equivalence import DriftModel, loglik_curves
from .errors import NumericalError
from .kernels import Grid, HurstOrder, invert_kernel_matrix, kernel_matrix
from .prediction import predict
from .simulation import (
    Method,
    RngStream,
    SamplePath,
    cholesky_ensemble,
    fft_nfbm_ensemble,
    figure_paths,
    max_abs_increment,
    simulate_volterra,
    volterra_ensemble,
)

EXIT_OK, EXIT_IO, EXIT_INPUT, EXIT_NUMERICAL = 0, 1, 2, 3
FIGURE_H = (0.1, 0.25, 0.5, 0.75, 0.9)


class InputError(Exception):
    pass


def _model_flags(p, m_default=4096):
    g = p.add_argument_group("model")
    g.add_argument("--n", type=int, default=1, help="order n >= 1 (dimensionless, default 1)")
    g.add_argument("--H", type=float, default=0.5, help="Hurst index in (n-1, n) (dimensionless, default 0.5)")
    g.add_argument("--T", type=float, default=1.0, help="time horizon (time units, default 1)")
    g.add_argument("--m", type=int, default=m_default, help=f"number of grid steps (count, default {m_default})")


def _run_flags(p, out_help):
    g = p.add_argument_group("run")
    g.add_argument("--seed", type=int, default=0, help="random seed (unsigned 64-bit integer, default 0)")
    g.add_argument("--out", default=None, help=out_help)
    g.add_argument("--threads", type=int, default=0, help="worker threads (count, 0 = auto; currently all work runs on one thread)")


def build_parser():
    parser = argparse.ArgumentParser(prog="nfbm", description="nth-order fractional Brownian motion toolkit")
    sub = parser.add_subparsers(dest="command", metavar="COMMAND")
    sub.required = True

    p = sub.add_parser("simulate", help="simulate sample paths", description="Simulate sample paths on [0, T].")
    _model_flags(p)
    p.add_argument("--paths", type=int, default=1, help="number of paths (count, default 1)")
    p.add_argument("--method", choices=[m.value for m in (Method.VOLTERRA, Method.CHOLESKY, Method.FFT_INTEGRATED)],
                   default="fft", help="simulation route (default fft)")
    p.add_argument("--mode", choices=["mg", "mvn"], default="mg",
                   help="covariance normalisation for cholesky (default mg)")
    p.add_argument("--format", choices=["csv", "svg"], default="csv",
                   help="csv writes the path table; svg also writes a line plot of the first path")
    p.add_argument("--increments", default=None,
                   help="also write the driving increments as CSV t,dW (volterra only; file path)")
    _run_flags(p, "output CSV file (path, default $NFBM_OUTPUT_DIR/path.csv)")

    p = sub.add_parser("figures", help="reproduce the order 1-4 figure panels",
                       description="For each base H simulate one FFT fBm path and integrate it to orders 1-4.")
    p.add_argument("--m", type=int, default=4096, help="number of grid steps on [0, 1] (count, default 4096)")
    p.add_argument("--H", type=float, nargs="+", default=list(FIGURE_H),
                   help="base Hurst indices in (0, 1) (dimensionless, default 0.1 0.25 0.5 0.75 0.9)")
    _run_flags(p, "output directory (path, default $NFBM_OUTPUT_DIR)")

    p = sub.add_parser("cov", help="covariance table", description="Covariance r(t_i, t_k) on the grid t_1..t_m as CSV t,s,cov.")
    _model_flags(p, m_default=8)
    p.add_argument("--grid", dest="m", type=int, help="alias for --m (count)")
    p.add_argument("--mode", choices=["mg", "mvn"], default="mg", help="covariance normalisation (default mg)")
    _run_flags(p, "output CSV file (path, default $NFBM_OUTPUT_DIR/cov.csv)")

    p = sub.add_parser("predict", help="conditional mean and variance given the past",
                       description="Predict B(t) for grid times t > u given the path on [0, u]; CSV t,mean,var,lower,upper.")
    _model_flags(p, m_default=256)
    p.add_argument("--u", type=float, default=0.5, help="conditioning time, a grid point in [0, T) (time units, default 0.5)")
    p.add_argument("--input", default=None, help="observed path CSV t,value (path); simulated from --seed if omitted")
    _run_flags(p, "output CSV file (path, default $NFBM_OUTPUT_DIR/predict.csv)")

    p = sub.add_parser("loglik", help="log-likelihood ratio of an equivalent model",
                       description="Log-likelihood ratio l(t) of a drift model against Wiener measure; CSV t,loglik.")
    p.add_argument("--input", required=True, help="Brownian path CSV t,value on a uniform grid (path)")
    p.add_argument("--drift", type=float, default=0.0, help="constant drift a (1/time^(1/2), default 0)")
    p.add_argument("--beta", type=float, default=0.0, help="constant Volterra kernel b (1/time, default 0)")
    p.add_argument("--kernel", default=None, help="kernel table CSV s,u,b sampled at grid points (path); overrides --beta")
    _run_flags(p, "output CSV file (path, default $NFBM_OUTPUT_DIR/loglik.csv)")

    p = sub.add_parser("invert", help="recover driving increments from a path",
                       description="Recover the Brownian increments of an order-(n, H) path; CSV t,dW.")
    p.add_argument("--n", type=int, default=1, help="order n >= 1 (dimensionless, default 1)")
    p.add_argument("--H", type=float, default=0.5, help="Hurst index in (n-1, n) (dimensionless, default 0.5)")
    p.add_argument("--input", required=True, help="path CSV t,value produced by simulate (path)")
    _run_flags(p, "output CSV file (path, default $NFBM_OUTPUT_DIR/increments.csv)")
    return parser


def _target(args, default_name):
    return Path(args.out) if args.out else io.output_dir() / default_name


def _order(args):
    try:
        return HurstOrder(args.n, args.H)
    except ValueError as exc:
        raise InputError(str(exc)) from exc


def _grid(T, m):
    if m < 2:
        raise InputError(f"--m must be at least 2, got {m}")
    try:
        return Grid(T, m)
    except ValueError as exc:
        raise InputError(str(exc)) from exc


def _common(args):
    if getattr(args, "threads", 0) < 0:
        raise InputError("--threads must be >= 0")
    if hasattr(args, "paths") and args.paths < 1:
        raise InputError("--paths must be at least 1")
    if hasattr(args, "seed") and not 0 <= args.seed < 2**64:
        raise InputError("--seed must be an unsigned 64-bit integer")


def _read_path(path_file):
    data = io.read_csv(path_file)
    if "t" not in data or "value" not in data:
        raise InputError(f"{path_file}: expected columns t,value")
    t, v = data["t"], data["value"]
    if "path_id" in data:
        first = data["path_id"] == data["path_id"][0]
        t, v = t[first], v[first]
    m = t.size - 1
    if m < 1 or t[0] != 0.0:
        raise InputError(f"{path_file}: the path must start at t = 0")
    grid = _grid(float(t[-1]), m)
    if np.max(np.abs(t - grid.points)) > 1e-9 * grid.T:
        raise InputError(f"{path_file}: times are not a uniform grid")
    return grid, v


def cmd_simulate(args):
    ho = _order(args)
    grid = _grid(args.T, args.m)
    rng = RngStream(args.seed)
    method = Method(args.method)
    dW = None
    if method is Method.VOLTERRA:
        values, dW = volterra_ensemble(ho, grid, rng, args.paths)
    elif method is Method.CHOLESKY:
        values = cholesky_ensemble(ho, grid, rng, args.paths, NormalizationMode.parse(args.mode))
    else:
        values = fft_nfbm_ensemble(ho, grid, rng, args.paths)
    if args.increments and dW is None:
        raise InputError("--increments needs --method volterra")
    target = _target(args, "path.csv")
    t = grid.points
    if args.paths == 1:
        io.write_csv(target, ["t", "value"], [t, values[0]])
    else:
        ids = np.repeat(np.arange(args.paths), grid.m + 1)
        io.write_csv(target, ["path_id", "t", "value"], [ids, np.tile(t, args.paths), values.ravel()])
    if args.increments:
        io.write_csv(args.increments, ["t", "dW"], [t[1:], dW[0]])
    if args.format == "svg":
        io.write_svg(target.with_suffix(".svg"), t, values[0], f"n={ho.n}, H={ho.H:g}")
    print(f"wrote {target}")
    return EXIT_OK


def figure_name(H, order):
    return f"fig_H{H:.2f}_order{order}.svg"


def cmd_figures(args):
    grid = _grid(1.0, args.m)
    outdir = Path(args.out) if args.out else io.output_dir()
    outdir.mkdir(parents=True, exist_ok=True)
    rows = []
    for k, H in enumerate(args.H):
        if not 0.0 < H < 1.0:
            raise InputError(f"base H={H} is outside the valid interval (0, 1)")
        start = time.perf_counter()
        paths = figure_paths(H, grid, RngStream(args.seed, k))
        for order, path in enumerate(paths, start=1):
            io.write_svg(outdir / figure_name(H, order), grid.points, path.values,
                         f"order {order}, H = {path.ho.H:g}")
            rows.append((H, order, float(max_abs_increment(path.values)), float(np.max(np.abs(path.values)))))
        print(f"H={H:g}: 4 panels in {time.perf_counter() - start:.2f} s")
    arr = np.array(rows)
    io.write_csv(outdir / "smoothness.csv", ["H", "order", "max_abs_increment", "max_abs_value"],
                 [arr[:, 0], arr[:, 1].astype(int), arr[:, 2], arr[:, 3]])
    print(f"wrote {len(rows)} figures to {outdir}")
    return EXIT_OK


def cmd_cov(args):
    ho = _order(args)
    grid = _grid(args.T, args.m)
    t = grid.points[1:]
    C = cov_matrix(ho, t, NormalizationMode.parse(args.mode))
    T1, T2 = np.meshgrid(t, t, indexing="ij")
    target = _target(args, "cov.csv")
    io.write_csv(target, ["t", "s", "cov"], [T1, T2, C])
    print(f"wrote {target}")
    return EXIT_OK


def cmd_predict(args):
    ho = _order(args)
    if args.input:
        grid, values = _read_path(args.input)
        path = SamplePath(grid, values, ho, Method.VOLTERRA, args.seed)
    else:
        grid = _grid(args.T, args.m)
        path = simulate_volterra(ho, grid, RngStream(args.seed))
    try:
        iu = grid.index_of(args.u)
    except ValueError as exc:
        raise InputError(str(exc)) from exc
    if iu >= grid.m:
        raise InputError("--u must be smaller than T")
    targets = grid.points[iu + 1 :]
    law = predict(ho, path, args.u, targets)
    lo, hi = law.band()
    target = _target(args, "predict.csv")
    io.write_csv(target, ["t", "mean", "var", "lower", "upper"], [targets, law.mean, law.variance, lo, hi])
    print(f"wrote {target}")
    return EXIT_OK


def cmd_loglik(args):
    grid, values = _read_path(args.input)
    dW = np.diff(values)
    if args.kernel:
        tab = io.read_csv(args.kernel)
        if not {"s", "u", "b"} <= set(tab):
            raise InputError(f"{args.kernel}: expected columns s,u,b")
        i = np.rint(tab["s"] / grid.dt).astype(int)
        j = np.rint(tab["u"] / grid.dt).astype(int)
        ok = (j < i) & (i < grid.m) & (j >= 0)
        if not np.all(ok):
            raise InputError(f"{args.kernel}: entries must satisfy 0 <= u < s < T on the grid")
        B = np.zeros((grid.m, grid.m))
        B[i, j] = tab["b"]
        model = DriftModel(np.full(grid.m, args.drift), B, grid.dt)
    else:
        model = DriftModel.on_grid(grid, a=args.drift, b=args.beta if args.beta else None)
    ell = loglik_curves(dW, model)
    target = _target(args, "loglik.csv")
    io.write_csv(target, ["t", "loglik"], [grid.points, ell])
    print(f"wrote {target}")
    return EXIT_OK


def cmd_invert(args):
    ho = _order(args)
    grid, values = _read_path(args.input)
    K = kernel_matrix(ho, grid)
    dW = invert_kernel_matrix(K, values)
    target = _target(args, "increments.csv")
    io.write_csv(target, ["t", "dW"], [grid.points[1:], dW])
    print(f"wrote {target}")
    return EXIT_OK


COMMANDS = {
    "simulate": cmd_simulate,
    "figures": cmd_figures,
    "cov": cmd_cov,
    "predict": cmd_predict,
    "loglik": cmd_loglik,
    "invert": cmd_invert,
}


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        _common(args)
        return COMMANDS[args.command](args)
    except (InputError, ValueError) as exc:
        print(f"nfbm {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except NumericalError as exc:
        print(f"nfbm {args.command}: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except OSError as exc:
        print(f"nfbm {args.command}: I/O error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
