"""Command-line front end.

Subcommands wire the library together into a file-based pipeline:

  simulate   scenario JSON -> truth.json, measured.json, pairs.csv
  response   Gaussian kernel or pair CSV -> response JSON
  unfold     measured + response -> unfolded result (+ trace CSV, SVG plot)
  fold       apply a response to a truth histogram
  invert     unregularized least-squares baseline

Exit codes: 0 success, 2 usage or configuration error, 3 inconsistent data,
4 numerical failure.
"""

from __future__ import annotations

import argparse
import json
import sys
from importlib import resources
from pathlib import Path

import numpy as np

from .baseline import naive_invert
from .errors import (ConfigError, DecompositionError, DegenerateOperatorError,
                     DimensionError, NormalizationError, NumericalFailureError,
                     UnfoldingError)
from .histogram import Axis, Histogram, l1_distance, rebin_axes
from .response import ResponseMatrix, read_pairs_csv, write_pairs_csv
from .simulate import Scenario, generate
from .svg import Series, write as write_svg
from .unfold import ErrorBudget, StoppingPolicy, run

EXIT_USAGE = 2
EXIT_DATA = 3
EXIT_NUMERICAL = 4


def _axis_arg(text):
    try:
        lo, hi, n = text.split(":")
        return Axis.uniform(float(lo), float(hi), int(n))
    except (ValueError, TypeError):
        raise argparse.ArgumentTypeError(
            f"expected LOW:HIGH:NBINS, got {text!r}") from None


def _rebin_arg(text):
    try:
        ext, ref = text.split(",")
        return float(ext), int(ref)
    except (ValueError, TypeError):
        raise argparse.ArgumentTypeError(
            f"expected EXTENSION,REFINE, got {text!r}") from None


def _stop_arg(text):
    if text == "min-total":
        return ("min_total", None)
    for prefix, rule in (("fixed=", "fixed"), ("stat-frac=", "stat_fraction")):
        if text.startswith(prefix):
            try:
                return (rule, float(text[len(prefix):]))
            except ValueError:
                break
    raise argparse.ArgumentTypeError(
        f"expected fixed=N, stat-frac=T or min-total, got {text!r}")


def _policy(stop, max_iterations):
    rule, value = stop
    if rule == "fixed":
        return StoppingPolicy.fixed(int(value), max_iterations=max_iterations)
    if rule == "stat_fraction":
        return StoppingPolicy.stat_fraction(value, max_iterations=max_iterations)
    return StoppingPolicy.min_total(max_iterations=max_iterations)


def _resolve_config(path):
    p = Path(path)
    if p.exists():
        return p
    name = p.name if p.name.endswith(".json") else p.name + ".json"
    bundled = resources.files("unfolder").joinpath("configs", name)
    if bundled.is_file():
        return bundled
    raise ConfigError(f"no such scenario config: {path}")


def _gauss_kernel(sigma):
    norm = 1.0 / (sigma * np.sqrt(2.0 * np.pi))
    return lambda y, x: norm * np.exp(-0.5 * ((y - x) / sigma) ** 2)


def _build_response(args, meas_axis, true_axis):
    if args.kernel is not None:
        if args.kernel != "gauss":
            raise ConfigError(f"unsupported kernel '{args.kernel}'", field="kernel")
        if args.sigma is None or args.sigma <= 0:
            raise ConfigError("--kernel gauss requires --sigma > 0", field="sigma")
        return ResponseMatrix.from_kernel(
            _gauss_kernel(args.sigma), true_axis, meas_axis,
            quad_points=args.quad_points)
    return ResponseMatrix.from_pairs(read_pairs_csv(args.pairs),
                                     true_axis, meas_axis)


def _write_trace(path, trace):
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(ErrorBudget.CSV_HEADER + "\n")
        for budget in trace:
            fh.write(budget.csv_row() + "\n")


# --- subcommands -----------------------------------------------------------


def _cmd_simulate(args):
    sc = Scenario.load_json(_resolve_config(args.config))
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    res = generate(sc)
    res.truth_hist.save_json(out / "truth.json")
    res.measured.save_json(out / "measured.json")
    write_pairs_csv(out / "pairs.csv", res.pairs)
    lost = res.meas_underflow + res.meas_overflow
    print(f"simulated {sc.entries} entries (seed {sc.seed}); "
          f"{res.measured.total:.0f} in measured range, {lost} out of range")
    return 0


def _cmd_response(args):
    meas_axis = args.meas_axis
    true_axis = args.true_axis or meas_axis
    rm = _build_response(args, meas_axis, true_axis)
    rm.save_json(args.out)
    print(f"response {rm.shape[0]}x{rm.shape[1]} written; K = {rm.k_factor!r}")
    return 0


def _cmd_unfold(args):
    measured = Histogram.load_json(args.measured)
    if args.response is not None:
        if args.rebin is not None:
            raise ConfigError(
                "--rebin needs --kernel or --pairs so the response can be "
                "rebuilt on the derived true axis", field="rebin")
        rm = ResponseMatrix.load_json(args.response)
    else:
        rebin = args.rebin or (1.0, 1)
        true_axis = rebin_axes(measured.axis, *rebin)
        rm = _build_response(args, measured.axis, true_axis)
    syst = None
    if args.syst is not None:
        syst = Histogram.load_json(args.syst).contents
    policy = _policy(args.stop, args.max_iterations)
    outcome = run(rm, measured, policy, syst=syst)
    outcome.result.save_json(args.out)
    if args.trace:
        _write_trace(args.trace, outcome.trace)
    if args.svg:
        series = [Series(measured, "measured")]
        if args.truth:
            series.append(Series(Histogram.load_json(args.truth), "truth",
                                 color="#2c2c2c", dashed=True, error_bars=False))
        series.insert(1, Series(outcome.result, f"unfolded (N={outcome.stopped_at})",
                                color="#d62728"))
        write_svg(args.svg, series, x_label="x", y_label="content per bin",
                  log_y=args.log_y, title="unfolded spectrum")
    last = outcome.trace[outcome.stopped_at]
    flag = " (truncated at iteration cap)" if outcome.truncated else ""
    print(f"stopped at order {outcome.stopped_at}{flag}; "
          f"stat fraction {last.stat_fraction:.4f}, "
          f"bias bound {last.bias_bound:.4g}")
    return 0


def _cmd_fold(args):
    truth = Histogram.load_json(args.truth)
    rm = ResponseMatrix.load_json(args.response)
    rm.fold(truth).save_json(args.out)
    return 0


def _cmd_invert(args):
    measured = Histogram.load_json(args.measured)
    rm = ResponseMatrix.load_json(args.response)
    inverted = naive_invert(rm, measured)
    inverted.save_json(args.out)
    c = inverted.contents
    flips = np.sum(np.sign(c[1:]) * np.sign(c[:-1]) < 0)
    frac = flips / max(len(c) - 1, 1)
    print(f"sign alternation on {frac:.1%} of adjacent bin pairs; "
          f"max |content| = {np.abs(c).max():.6g}", file=sys.stderr)
    if args.truth:
        truth = Histogram.load_json(args.truth)
        if truth.axis == inverted.axis:
            ratio = np.abs(c).max() / max(np.abs(truth.contents).max(), 1e-300)
            print(f"max |content| is {ratio:.3g} times the truth peak; "
                  f"L1(inverted, truth) = {l1_distance(inverted, truth):.6g}",
                  file=sys.stderr)
    return 0


def _parser():
    p = argparse.ArgumentParser(
        prog="unfolder",
        description="Iterative histogram unfolding with covariance propagation")
    sub = p.add_subparsers(dest="command", required=True)

    sim = sub.add_parser("simulate", help="draw a synthetic measurement")
    sim.add_argument("config", help="scenario JSON (path or bundled name)")
    sim.add_argument("--out", required=True, help="output directory")
    sim.set_defaults(func=_cmd_simulate)

    def add_source(sp, require=True):
        grp = sp.add_mutually_exclusive_group(required=require)
        grp.add_argument("--kernel", choices=["gauss"],
                         help="analytic response kernel")
        grp.add_argument("--pairs", help="CSV of (true, measured) pairs")
        sp.add_argument("--sigma", type=float, help="kernel width")
        sp.add_argument("--quad-points", type=int, default=8,
                        help="quadrature nodes per bin (default 8)")
        return grp

    resp = sub.add_parser("response", help="build a response matrix")
    add_source(resp)
    resp.add_argument("--meas-axis", type=_axis_arg, required=True,
                      metavar="LO:HI:N")
    resp.add_argument("--true-axis", type=_axis_arg, metavar="LO:HI:N",
                      help="defaults to the measured axis")
    resp.add_argument("--out", required=True)
    resp.set_defaults(func=_cmd_response)

    unf = sub.add_parser("unfold", help="run the iterative unfolding")
    unf.add_argument("--measured", required=True)
    unf.add_argument("--response", help="response JSON (alternative to --kernel/--pairs)")
    add_source(unf, require=False)
    unf.add_argument("--rebin", type=_rebin_arg, metavar="EXT,REF",
                     help="derive an extended/refined true axis "
                          "(only with --kernel or --pairs)")
    unf.add_argument("--stop", type=_stop_arg, required=True,
                     metavar="fixed=N|stat-frac=T|min-total")
    unf.add_argument("--syst", help="systematic offset histogram JSON")
    unf.add_argument("--truth", help="truth histogram for the plot")
    unf.add_argument("--max-iterations", type=int, default=10000)
    unf.add_argument("--out", required=True)
    unf.add_argument("--trace", help="iteration trace CSV")
    unf.add_argument("--svg", help="overlay plot")
    unf.add_argument("--log-y", action="store_true")
    unf.set_defaults(func=_cmd_unfold)

    fld = sub.add_parser("fold", help="apply a response to a truth histogram")
    fld.add_argument("--truth", required=True)
    fld.add_argument("--response", required=True)
    fld.add_argument("--out", required=True)
    fld.set_defaults(func=_cmd_fold)

    inv = sub.add_parser("invert", help="naive least-squares inversion")
    inv.add_argument("--measured", required=True)
    inv.add_argument("--response", required=True)
    inv.add_argument("--truth", help="truth histogram for oscillation metrics")
    inv.add_argument("--out", required=True)
    inv.set_defaults(func=_cmd_invert)
    return p


def main(argv=None) -> int:
    parser = _parser()
    args = parser.parse_args(argv)
    if args.command == "unfold" and args.response is None \
            and args.kernel is None and args.pairs is None:
        parser.error("unfold needs --response, --kernel or --pairs")
    try:
        return args.func(args)
    except ConfigError as exc:
        where = f" (field: {exc.field})" if exc.field else ""
        print(f"error: {exc}{where}", file=sys.stderr)
        return EXIT_USAGE
    except (NumericalFailureError, DegenerateOperatorError,
            DecompositionError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except (DimensionError, NormalizationError, UnfoldingError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (ValueError, json.JSONDecodeError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
