"""Command-line interface.

Subcommands: ``estimate``, ``check``, ``npmle``, ``simulate``, ``bootstrap``.
Results go to stdout as JSON; ``--plot-data`` additionally writes a TSV
(x, value[, lower, upper]). Exit status: 0 success, 1 invalid input,
2 numerical failure.
"""

from __future__ import annotations

import argparse
import json
import math
import sys

import numpy as np

from .errors import DTDensityError, NumericalError, ValidationError
from .estimators import METHODS, MethodSpec
from .model import DEFAULT_GRID_SIZE, EvalGrid, read_csv

EXIT_OK, EXIT_INPUT, EXIT_NUMERIC = 0, 1, 2


class UsageError(ValidationError):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def _json_safe(obj):
    if isinstance(obj, float) and not math.isfinite(obj):
        return None
    if isinstance(obj, (np.floating, np.integer)):
        return _json_safe(obj.item())
    if isinstance(obj, np.ndarray):
        return _json_safe(obj.tolist())
    if isinstance(obj, dict):
        return {str(k): _json_safe(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_json_safe(v) for v in obj]
    return obj


def _emit(payload, args):
    text = json.dumps(_json_safe(payload), indent=2, sort_keys=True) + "\n"
    if getattr(args, "output", None):
        with open(args.output, "w") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def _write_tsv(path, columns):
    rows = zip(*columns.values())
    with open(path, "w") as fh:
        fh.write("\t".join(columns) + "\n")
        for row in rows:
            fh.write("\t".join(repr(float(v)) for v in row) + "\n")


def _load(args):
    return read_csv(args.file, tuple(args.domain) if args.domain else None)


def _spec(args) -> MethodSpec:
    method = args.method
    if method == "kde" and args.lam is not None:
        raise UsageError("--lambda applies to spline methods only")
    if method != "kde" and args.bw is not None:
        raise UsageError("--bw applies to --method kde only")
    bw = args.bw or "dpi1"
    if bw != "dpi1":
        try:
            bw = float(bw)
        except ValueError:
            raise UsageError(f"--bw must be 'dpi1' or a number, got {bw!r}") from None
    return MethodSpec(method, lam=args.lam, alpha=args.alpha, bandwidth=bw,
                      q=args.q, quad_size=args.quad_size, npmle_tol=args.tol,
                      npmle_max_iter=args.max_iter,
                      degenerate_threshold=args.threshold)


# -- subcommands -----------------------------------------------------------------

def cmd_estimate(args):
    spec = _spec(args)
    sample = _load(args)
    grid = EvalGrid.for_sample(sample, args.grid)
    est = spec.run(sample, grid)
    payload = {"method": spec.method, "grid": grid.points, "values": est.values}
    if spec.method == "kde":
        payload.update(h=est.info["h"], bandwidth_method=est.info["method"],
                       degenerate_flag=est.info["degenerate"])
    else:
        payload.update(**{"lambda": est.info["lambda"]},
                       cv_trace=est.info["cv_trace"],
                       newton_iters=est.info["newton_iters"])
    _emit(payload, args)
    if args.plot_data:
        _write_tsv(args.plot_data, {"x": grid.points, "value": est.values})


def cmd_check(args):
    from .graph import npmle_status

    sample = _load(args)
    status = npmle_status(sample)
    print(f"status: {status.status.value}", file=sys.stderr)
    print(f"strongly connected components: {status.scc_count}", file=sys.stderr)
    if status.sink_vertex is not None:
        print(f"record {status.sink_vertex + 1} (index {status.sink_vertex}) has no "
              "edge leaving its component", file=sys.stderr)
    _emit(status.to_dict(), args)


def cmd_npmle(args):
    from .npmle import npmle_cdf, solve_npmle

    sample = _load(args)
    weights = solve_npmle(sample, tol=args.tol, max_iter=args.max_iter)
    _emit(weights.to_dict(args.threshold), args)
    if args.plot_data:
        grid = EvalGrid.for_sample(sample, args.grid)
        _write_tsv(args.plot_data,
                   {"x": grid.points, "value": npmle_cdf(weights, sample, grid)})


def cmd_simulate(args):
    from .simulate import SCENARIOS, Scenario, run_study, write_study

    ids = SCENARIOS if args.scenario == "all" else tuple(args.scenario.split(","))
    methods = tuple(m.strip() for m in args.methods.split(","))
    for m in methods:
        if m not in METHODS:
            raise UsageError(f"unknown method {m!r}; choose from {', '.join(METHODS)}")
    scenarios = [Scenario(i, args.tau, args.n, args.seed) for i in ids]
    report = run_study(scenarios, methods, args.trials, args.workers, args.grid)
    payload = report.to_dict()
    if args.out:
        payload["files"] = write_study(report, args.out)
    print(report.to_markdown(), file=sys.stderr, end="")
    print(f"elapsed: {report.elapsed:.1f} s", file=sys.stderr)
    _emit(payload, args)


def cmd_bootstrap(args):
    from .bootstrap import bootstrap_bands

    spec = _spec(args)
    sample = _load(args)
    grid = EvalGrid.for_sample(sample, args.grid)
    bands = bootstrap_bands(sample, spec, B=args.B, level=args.level,
                            seed=args.seed, grid=grid, reselect=not args.freeze,
                            workers=args.workers)
    _emit(bands.to_dict(), args)
    if args.plot_data:
        _write_tsv(args.plot_data, {"x": grid.points, "value": bands.point.values,
                                    "lower": bands.lower, "upper": bands.upper})


# -- parser --------------------------------------------------------------------

def _positive_int(text):
    value = int(text)
    if value < 1:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {text}")
    return value


class _HelpFormatter(argparse.ArgumentDefaultsHelpFormatter):
    """Shows defaults, except where there is none or the help says it."""

    def _get_help_string(self, action):
        if action.default is None or "default" in (action.help or ""):
            return action.help
        return super()._get_help_string(action)


def build_parser() -> argparse.ArgumentParser:
    fmt = _HelpFormatter
    common = _Parser(add_help=False)
    common.add_argument("--seed", type=int, default=0, help="random seed")
    common.add_argument("--workers", type=_positive_int, default=None,
                        help="worker processes (default: available CPUs)")
    common.add_argument("--grid", type=_positive_int, default=DEFAULT_GRID_SIZE,
                        help="number of evaluation grid points")
    common.add_argument("--output", "-o", default=None,
                        help="write JSON here instead of stdout")
    common.add_argument("--plot-data", default=None,
                        help="also write a TSV of x, value[, lower, upper]")

    data = _Parser(add_help=False)
    data.add_argument("file", help="CSV with header u,v,x")
    data.add_argument("--domain", nargs=2, type=float, metavar=("LO", "HI"),
                      help="working support (default: data range padded by 5%%)")

    method = _Parser(add_help=False)
    method.add_argument("--method", choices=METHODS, default="spline-cor",
                        help="estimator")
    method.add_argument("--lambda", dest="lam", type=float, default=None,
                        help="fixed smoothing parameter; skips cross-validation")
    method.add_argument("--alpha", type=float, default=1.4,
                        help="cross-validation correction weight")
    method.add_argument("--q", type=_positive_int, default=None,
                        help="spline basis size (default 30 + ceil(10 n^(2/9)), at most n)")
    method.add_argument("--quad-size", type=_positive_int, default=200,
                        help="Gauss-Legendre quadrature nodes")
    method.add_argument("--bw", default=None,
                        help="KDE bandwidth: 'dpi1' or a positive number (default dpi1)")

    npmle_opts = _Parser(add_help=False)
    npmle_opts.add_argument("--tol", type=float, default=1e-8,
                            help="NPMLE convergence tolerance on masses")
    npmle_opts.add_argument("--max-iter", type=_positive_int, default=10000,
                            help="NPMLE iteration cap")
    npmle_opts.add_argument("--threshold", type=float, default=0.5,
                            help="mass above which NPMLE weights count as degenerate")

    parser = _Parser(prog="dtdensity", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("estimate", parents=[common, data, method, npmle_opts],
                       formatter_class=fmt, help="density estimate on a grid")
    p.set_defaults(func=cmd_estimate)

    p = sub.add_parser("check", parents=[common, data], formatter_class=fmt,
                       help="NPMLE existence diagnostic")
    p.set_defaults(func=cmd_check)

    p = sub.add_parser("npmle", parents=[common, data, npmle_opts],
                       formatter_class=fmt, help="NPMLE point masses")
    p.set_defaults(func=cmd_npmle)

    p = sub.add_parser("simulate", parents=[common], formatter_class=fmt,
                       help="Monte Carlo study")
    p.add_argument("--scenario", default="S2",
                   help="S1..S4, comma separated, or 'all'")
    p.add_argument("--tau", choices=["constant", "random"], default="constant",
                   help="truncation interval length law")
    p.add_argument("--n", type=_positive_int, default=200, help="sample size")
    p.add_argument("--trials", type=_positive_int, default=250,
                   help="Monte Carlo trials per scenario")
    p.add_argument("--methods", default=",".join(METHODS),
                   help="comma-separated estimators to score")
    p.add_argument("--out", default=None, help="directory for trials.csv and summaries")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("bootstrap", parents=[common, data, method, npmle_opts],
                       formatter_class=fmt, help="bootstrap confidence bands")
    p.add_argument("--B", type=_positive_int, default=250, help="bootstrap replicates")
    p.add_argument("--level", type=float, default=0.95,
                   help="pointwise confidence level")
    p.add_argument("--freeze", action="store_true",
                   help="reuse lambda/h from the original fit in every replicate")
    p.set_defaults(func=cmd_bootstrap)
    return parser


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
        if args.workers is None:
            from .simulate import default_workers
            args.workers = default_workers()
        args.func(args)
    except (ValidationError, ValueError, OSError) as exc:
        return _fail(exc, EXIT_INPUT)
    except (NumericalError, DTDensityError) as exc:
        return _fail(exc, EXIT_NUMERIC)
    return EXIT_OK


def _fail(exc, code) -> int:
    name = type(exc).__name__
    if isinstance(exc, OSError):
        name = "FileError"
    print(f"error: {name}: {exc}", file=sys.stderr)
    sys.stdout.write(json.dumps({"error": name, "message": str(exc)}) + "\n")
    return code


if __name__ == "__main__":
    sys.exit(main())
