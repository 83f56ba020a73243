"""Batch command line: fit data files, tune parameters, dump kernels, run studies.

Commands are pure functions of their flags, the input file, and the seed:
rerunning one writes byte-identical output.  Everything numeric is printed
with the same ten-significant-digit format in CSV and JSON alike, and rows
always appear in a fixed order, so diffing two runs is meaningful.

Exit codes: 1 for bad flags (including invalid flag combinations), 2 for an
unreadable input file, 3 when the estimator itself rejects the problem
(degenerate sample, empty grid, no acceptable cell).
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys

import numpy as np

from .core import LorpeConfig, default_grid, effective_kernel, estimate_on_grid
from .errors import LorpeError
from .kernels import KERNELS, get_kernel
from .simlab import (
    DISTRIBUTIONS,
    EstimatorConfig,
    get_distribution,
    mise_study,
    oracle_search,
    rng_stream,
    sample_dist,
)
from .tuning import (
    DEFAULT_ALPHA,
    default_h_grid,
    default_m_grid,
    plug_in,
    select_by_cv,
)

EXIT_BAD_FLAGS = 1
EXIT_BAD_INPUT = 2
EXIT_ESTIMATOR = 3

_FMT = "%.10g"


class _Parser(argparse.ArgumentParser):
    """argparse exits 2 on flag errors; the contract here is exit 1."""

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_BAD_FLAGS, f"{self.prog}: error: {message}\n")


class _FlagError(Exception):
    """Flag combination that argparse alone cannot reject."""


class _InputError(Exception):
    """Unreadable or unparsable input file."""


def _fmt(v) -> str:
    """One number the same way everywhere; empty cell for missing."""
    if v is None:
        return ""
    f = float(v)
    if not math.isfinite(f):
        return ""
    return _FMT % f


def _is_number(cell: str) -> bool:
    try:
        float(cell)
        return True
    except ValueError:
        return False


def _write_rows(header: list[str], rows: list[list], path: str, fmt: str) -> None:
    """Emit the records as CSV or as the mirroring JSON array."""
    cells = [[c if isinstance(c, str) else _fmt(c) for c in row] for row in rows]
    if fmt == "csv":
        lines = [",".join(header)]
        lines += [",".join(row) for row in cells]
        text = "\n".join(lines) + "\n"
    else:
        objs = []
        for row in cells:
            pairs = []
            for key, cell in zip(header, row):
                if cell == "":
                    val = "null"
                elif _is_number(cell):
                    val = cell
                else:
                    val = json.dumps(cell)
                pairs.append(f"{json.dumps(key)}: {val}")
            objs.append("{" + ", ".join(pairs) + "}")
        text = "[\n" + ",\n".join("  " + o for o in objs) + "\n]\n"
    if path == "-":
        sys.stdout.write(text)
    else:
        with open(path, "w", encoding="ascii", newline="\n") as fh:
            fh.write(text)


def _parse_support(text: str) -> tuple[float, float]:
    parts = text.split(",")
    if len(parts) != 2:
        raise _FlagError("support must be 'lo,hi'")
    try:
        lo, hi = (float(p) for p in parts)
    except ValueError:
        raise _FlagError(f"could not parse support {text!r}") from None
    if math.isnan(lo) or math.isnan(hi) or not lo < hi:
        raise _FlagError("support must satisfy lo < hi")
    return lo, hi


def _parse_grid(text: str, geometric: bool) -> np.ndarray:
    """Either explicit 'a,b,c' values or a 'lo:hi:count' span."""
    try:
        if ":" in text:
            lo_s, hi_s, count_s = text.split(":")
            lo, hi, count = float(lo_s), float(hi_s), int(count_s)
            if count < 1:
                raise _FlagError("grid count must be >= 1")
            if geometric:
                if not 0.0 < lo <= hi:
                    raise _FlagError("bandwidth span needs 0 < lo <= hi")
                return np.geomspace(lo, hi, count)
            if not lo <= hi:
                raise _FlagError("degree span needs lo <= hi")
            return np.linspace(lo, hi, count)
        return np.asarray([float(p) for p in text.split(",")], dtype=float)
    except ValueError:
        raise _FlagError(f"could not parse grid {text!r}") from None


def _read_sample(path: str) -> np.ndarray:
    """One real per line; blank lines are ignored, anything else must parse."""
    try:
        with open(path, "r", encoding="ascii", errors="strict") as fh:
            raw_lines = fh.readlines()
    except OSError as exc:
        raise _InputError(str(exc))
    except UnicodeDecodeError:
        raise _InputError(f"{path}: not a text file")
    values = []
    for lineno, line in enumerate(raw_lines, start=1):
        stripped = line.strip()
        if not stripped:
            continue
        try:
            v = float(stripped)
        except ValueError:
            raise _InputError(f"{path}: line {lineno}: could not parse {stripped!r}")
        if not math.isfinite(v):
            raise _InputError(f"{path}: line {lineno}: non-finite value")
        values.append(v)
    if not values:
        raise _InputError(f"{path}: no data")
    return np.asarray(values, dtype=float)


def _data_support(x: np.ndarray) -> tuple[float, float]:
    lo, hi = float(x.min()), float(x.max())
    if not lo < hi:
        raise LorpeError("all data points are identical")
    return lo, hi


def _check_tuning_flags(args) -> None:
    if args.method == "fixed":
        if args.h is None or args.M is None:
            raise _FlagError("--method fixed needs --h and --M")
        if not (math.isfinite(args.h) and args.h > 0.0):
            raise _FlagError("--h must be finite and > 0")
        if not (math.isfinite(args.M) and args.M >= 0.0):
            raise _FlagError("--M must be finite and >= 0")
    if not args.alpha > 0.0:
        raise _FlagError("--alpha must be > 0")
    args.h_grid_values = _parse_grid(args.h_grid, True) if args.h_grid else None
    args.m_grid_values = _parse_grid(args.m_grid, False) if args.m_grid else None


def _choose_params(args, x, support, kernel) -> tuple[float, float, float | None]:
    """(h, M, score) per the tuning method; fixed passes the flags through."""
    if args.method == "fixed":
        return float(args.h), float(args.M), None
    if args.method == "plugin":
        res = plug_in(x, kernel)
        return res.h_hat, float(res.m_hat), res.amise_curve[res.r_hat]
    h_grid = (
        args.h_grid_values if args.h_grid_values is not None else default_h_grid(x, kernel)
    )
    m_grid = args.m_grid_values if args.m_grid_values is not None else default_m_grid()
    sel = select_by_cv(
        x,
        h_grid,
        m_grid,
        criterion=args.method,
        alpha=args.alpha,
        kernel=kernel,
        support=support,
        exact_fitpoint=args.cv_exact_fitpoint,
    )
    ih = int(np.flatnonzero(sel.h_grid == sel.best_h)[0])
    im = int(np.flatnonzero(sel.m_grid == sel.best_m)[0])
    return sel.best_h, sel.best_m, float(sel.scores[ih, im])


def cmd_fit(args) -> int:
    try:
        support_flag = _parse_support(args.support) if args.support else None
        kernel = get_kernel(args.kernel)
        _check_tuning_flags(args)
        if args.grid_size < 2:
            raise _FlagError("--grid-size must be >= 2")
    except _FlagError as exc:
        print(f"fit: {exc}", file=sys.stderr)
        return EXIT_BAD_FLAGS
    try:
        x = _read_sample(args.input)
    except _InputError as exc:
        print(f"fit: {exc}", file=sys.stderr)
        return EXIT_BAD_INPUT
    try:
        support = support_flag if support_flag else _data_support(x)
        h, m, _ = _choose_params(args, x, support, kernel)
        cfg = LorpeConfig(h=h, m=m, kernel=kernel, support=support)
        est = estimate_on_grid(x, cfg, default_grid(x, cfg, args.grid_size))
    except (LorpeError, ValueError) as exc:
        print(f"fit: {exc}", file=sys.stderr)
        return EXIT_ESTIMATOR
    print(f"fit: h={_fmt(h)} M={_fmt(m)} method={args.method}", file=sys.stderr)
    rows = [[g, v] for g, v in zip(est.grid, est.value)]
    _write_rows(["grid", "value"], rows, args.output, args.format)
    return 0


def cmd_tune(args) -> int:
    try:
        support_flag = _parse_support(args.support) if args.support else None
        kernel = get_kernel(args.kernel)
        _check_tuning_flags(args)
    except _FlagError as exc:
        print(f"tune: {exc}", file=sys.stderr)
        return EXIT_BAD_FLAGS
    try:
        x = _read_sample(args.input)
    except _InputError as exc:
        print(f"tune: {exc}", file=sys.stderr)
        return EXIT_BAD_INPUT
    try:
        support = support_flag if support_flag else _data_support(x)
        h, m, score = _choose_params(args, x, support, kernel)
    except (LorpeError, ValueError) as exc:
        print(f"tune: {exc}", file=sys.stderr)
        return EXIT_ESTIMATOR
    print(f"tune: h={_fmt(h)} M={_fmt(m)} method={args.method}", file=sys.stderr)
    alpha = args.alpha if args.method == "rlcv" else None
    rows = [[args.method, h, m, alpha, score]]
    _write_rows(["method", "h", "M", "alpha", "score"], rows, args.output, args.format)
    return 0


def cmd_effkernel(args) -> int:
    try:
        support = _parse_support(args.support) if args.support else (-math.inf, math.inf)
        kernel = get_kernel(args.kernel)
        if not (math.isfinite(args.h) and args.h > 0.0):
            raise _FlagError("--h must be finite and > 0")
        if not (math.isfinite(args.M) and args.M >= 0.0):
            raise _FlagError("--M must be finite and >= 0")
        if args.points < 2:
            raise _FlagError("--points must be >= 2")
        if args.span is not None and not args.span > 0.0:
            raise _FlagError("--span must be > 0")
    except _FlagError as exc:
        print(f"effkernel: {exc}", file=sys.stderr)
        return EXIT_BAD_FLAGS
    try:
        cfg = LorpeConfig(h=args.h, m=args.M, kernel=kernel, support=support)
        span = args.span if args.span else min(kernel.quad_half_width, 8.0)
        u = np.linspace(-span, span, args.points)
        vals = effective_kernel(cfg, args.xfit, u)
    except (LorpeError, ValueError) as exc:
        print(f"effkernel: {exc}", file=sys.stderr)
        return EXIT_ESTIMATOR
    rows = [[ui, vi] for ui, vi in zip(u, vals)]
    _write_rows(["u", "k_eff"], rows, args.output, args.format)
    return 0


def cmd_simulate(args) -> int:
    try:
        if args.n < 1:
            raise _FlagError("--n must be >= 1")
        if args.reps < 1:
            raise _FlagError("--reps must be >= 1")
        if not args.alpha > 0.0:
            raise _FlagError("--alpha must be > 0")
        kwargs = dict(
            kind=args.estimator,
            method=args.method,
            alpha=args.alpha,
            mirror=args.mirror,
            exact_fitpoint=args.cv_exact_fitpoint,
        )
        if args.kernel:
            kwargs["kernel"] = get_kernel(args.kernel)
        if args.support:
            kwargs["support"] = _parse_support(args.support)
        if args.method == "fixed":
            if args.estimator == "osde":
                if args.j is None:
                    raise _FlagError("fixed OSDE needs --j")
                kwargs["j"] = args.j
            else:
                if args.h is None or args.M is None:
                    raise _FlagError("fixed estimators need --h and --M")
                kwargs["h"] = args.h
                kwargs["m"] = args.M
        try:
            config = EstimatorConfig(**kwargs)
        except ValueError as exc:
            raise _FlagError(str(exc)) from None
    except _FlagError as exc:
        print(f"simulate: {exc}", file=sys.stderr)
        return EXIT_BAD_FLAGS
    spec = get_distribution(args.dist)
    try:
        res = mise_study(
            spec, config, args.n, args.reps, seed=args.seed, threads=args.threads
        )
    except (LorpeError, ValueError) as exc:
        print(f"simulate: {exc}", file=sys.stderr)
        return EXIT_ESTIMATOR
    rows = [
        [
            args.dist,
            args.n,
            config.label,
            args.M,
            args.h,
            args.alpha,
            res.reps,
            res.log10_mise,
            res.se,
            args.seed,
        ]
    ]
    header = [
        "distribution",
        "n",
        "estimator",
        "M",
        "h",
        "alpha",
        "reps",
        "log10_mise",
        "se",
        "seed",
    ]
    _write_rows(header, rows, args.output, args.format)
    return 0


def cmd_oracle(args) -> int:
    try:
        if args.n < 1:
            raise _FlagError("--n must be >= 1")
        if args.reps < 1:
            raise _FlagError("--reps must be >= 1")
        h_flag = _parse_grid(args.h_grid, True) if args.h_grid else None
        m_grid = (
            _parse_grid(args.m_grid, False) if args.m_grid else np.arange(0.0, 13.0)
        )
        support = _parse_support(args.support) if args.support else None
        kernel = get_kernel(args.kernel) if args.kernel else None
    except _FlagError as exc:
        print(f"oracle: {exc}", file=sys.stderr)
        return EXIT_BAD_FLAGS
    spec = get_distribution(args.dist)
    try:
        if h_flag is not None:
            h_grid = h_flag
        else:
            # Pilot draw on its own stream; replication streams are (seed, 0, r).
            pilot = sample_dist(spec, args.n, rng_stream(args.seed, 1, 0))
            h_ref = plug_in(pilot, kernel if kernel else get_kernel("quadweight")).h_hat
            h_grid = np.geomspace(h_ref / 4.0, h_ref * 4.0, 13)
        res = oracle_search(
            spec,
            args.n,
            h_grid,
            m_grid,
            args.reps,
            kind=args.kind,
            seed=args.seed,
            mirror=args.mirror,
            kernel=kernel,
            support=support,
            threads=args.threads,
        )
    except (LorpeError, ValueError) as exc:
        print(f"oracle: {exc}", file=sys.stderr)
        return EXIT_ESTIMATOR
    print(
        f"oracle: best h={_fmt(res.best_h)} M={_fmt(res.best_m)}"
        f" log10_mise={_fmt(res.best_log10_mise)}",
        file=sys.stderr,
    )
    rows = []
    for ih, h in enumerate(res.h_grid):
        for im, m in enumerate(res.m_grid):
            rows.append([h, m, res.surface[ih, im], int(res.counts[ih, im])])
    _write_rows(["h", "M", "log10_mise", "count"], rows, args.output, args.format)
    return 0


def _default_threads() -> int:
    env = os.environ.get("LORPE_THREADS", "")
    try:
        return max(1, int(env))
    except ValueError:
        return 1


def _add_output_flags(p) -> None:
    p.add_argument("-o", "--output", default="-", help="output path, '-' for stdout")
    p.add_argument("--format", choices=("csv", "json"), default="csv")


def _add_tuning_flags(p) -> None:
    p.add_argument(
        "--method",
        choices=("fixed", "plugin", "lscv", "rlcv"),
        default="plugin",
        help="how to choose (h, M)",
    )
    p.add_argument("--h", type=float, help="bandwidth for --method fixed")
    p.add_argument("--M", type=float, help="degree for --method fixed")
    p.add_argument("--alpha", type=float, default=DEFAULT_ALPHA)
    p.add_argument("--h-grid", help="CV bandwidths: 'a,b,c' or 'lo:hi:count'")
    p.add_argument("--m-grid", help="CV degrees: 'a,b,c' or 'lo:hi:count'")
    p.add_argument("--cv-exact-fitpoint", action="store_true")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="lorpe", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    fit = sub.add_parser("fit", help="estimate a density from a data file")
    fit.add_argument("input", help="text file, one real per line")
    fit.add_argument("--kernel", choices=sorted(KERNELS), default="gauss")
    fit.add_argument("--support", help="'lo,hi'; defaults to the data range")
    fit.add_argument("--grid-size", type=int, default=1024)
    _add_tuning_flags(fit)
    _add_output_flags(fit)
    fit.set_defaults(fn=cmd_fit)

    tune = sub.add_parser("tune", help="report chosen (h, M) without fitting")
    tune.add_argument("input", help="text file, one real per line")
    tune.add_argument("--kernel", choices=sorted(KERNELS), default="gauss")
    tune.add_argument("--support", help="'lo,hi'; defaults to the data range")
    _add_tuning_flags(tune)
    _add_output_flags(tune)
    tune.set_defaults(fn=cmd_tune)

    eff = sub.add_parser("effkernel", help="tabulate the effective kernel")
    eff.add_argument("--kernel", choices=sorted(KERNELS), required=True)
    eff.add_argument("--M", type=float, required=True)
    eff.add_argument("--h", type=float, required=True)
    eff.add_argument("--xfit", type=float, required=True)
    eff.add_argument("--support", help="'lo,hi'; default unbounded")
    eff.add_argument("--points", type=int, default=201)
    eff.add_argument("--span", type=float, help="tabulate u in [-span, span]")
    _add_output_flags(eff)
    eff.set_defaults(fn=cmd_effkernel)

    sim = sub.add_parser("simulate", help="Monte-Carlo MISE of one estimator")
    sim.add_argument("--dist", choices=sorted(DISTRIBUTIONS), required=True)
    sim.add_argument("--n", type=int, required=True)
    sim.add_argument("--reps", type=int, default=100)
    sim.add_argument("--estimator", choices=("lorpe", "kde", "osde"), default="lorpe")
    sim.add_argument(
        "--method",
        choices=("fixed", "plugin", "lscv", "rlcv", "auto"),
        default="fixed",
    )
    sim.add_argument("--h", type=float)
    sim.add_argument("--M", type=float)
    sim.add_argument("--j", type=int, help="term count for fixed OSDE")
    sim.add_argument("--alpha", type=float, default=DEFAULT_ALPHA)
    sim.add_argument("--kernel", choices=sorted(KERNELS))
    sim.add_argument("--support", help="'lo,hi'; defaults to the target's support")
    sim.add_argument("--mirror", action="store_true")
    sim.add_argument("--cv-exact-fitpoint", action="store_true")
    sim.add_argument("--seed", type=int, default=0)
    sim.add_argument("--threads", type=int, default=_default_threads())
    _add_output_flags(sim)
    sim.set_defaults(fn=cmd_simulate)

    orc = sub.add_parser("oracle", help="MISE surface over an (h, M) grid")
    orc.add_argument("--dist", choices=sorted(DISTRIBUTIONS), required=True)
    orc.add_argument("--n", type=int, required=True)
    orc.add_argument("--reps", type=int, default=100)
    orc.add_argument("--kind", choices=("lorpe", "kde"), default="lorpe")
    orc.add_argument("--h-grid", help="'a,b,c' or 'lo:hi:count' (geometric)")
    orc.add_argument("--m-grid", help="'a,b,c' or 'lo:hi:count' (linear)")
    orc.add_argument("--kernel", choices=sorted(KERNELS))
    orc.add_argument("--support", help="'lo,hi'; defaults to the target's support")
    orc.add_argument("--mirror", action="store_true")
    orc.add_argument("--seed", type=int, default=0)
    orc.add_argument("--threads", type=int, default=_default_threads())
    _add_output_flags(orc)
    orc.set_defaults(fn=cmd_oracle)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.fn(args)
    except BrokenPipeError:
        return 0


if __name__ == "__main__":
    sys.exit(main())
