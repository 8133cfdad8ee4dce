"""Command-line interface: ``kingldp {rate,figure,simulate,verify}``.

Every table is written as CSV (``#`` metadata lines, then a header row) or as
a JSON object with the same metadata, columns and rows.  Floats use 17
significant digits.
"""

from __future__ import annotations

import argparse
import io
import json
import math
import sys

import numpy as np

from . import __version__, harness, rates, verification
from .rates import _lambda_with_error

EXIT_OK, EXIT_FAIL, EXIT_USAGE = 0, 1, 2

RATE_FUNCTIONS = ("I", "I_hat", "Lambda", "f", "I_tilde", "rate_up", "bounds")
FIGURES = ("fig_T1", "fig_cor1", "fig_T2a")
RATE_COLUMNS = ["x", "value", "err_estimate", "status"]
I_TILDE_COLUMNS = ["x", "value", "err_estimate", "c_star", "t_star", "converged", "status"]
BOUNDS_COLUMNS = ["x", "T3", "g_bound", "angel", "status"]
FIGURE_COLUMNS = {
    "fig_T1": ["curve", "arg", "value"],
    "fig_cor1": ["x", "I_hat", "quadratic_bound"],
    "fig_T2a": ["x", "I_tilde", "T3_bound", "converged"],
}
SIMULATE_COLUMNS = ["index", "value"]
VERIFY_COLUMNS = ["suite", "check", "passed", "value", "reference", "detail"]


class UsageError(ValueError):
    pass


def parse_grid(spec: str) -> np.ndarray:
    """``a:b:step`` -> a, a+step, ..., b (inclusive); a bare number is one point."""
    parts = spec.split(":")
    try:
        nums = [float(p) for p in parts]
    except ValueError:
        raise UsageError(f"bad grid {spec!r}; expected a:b:step") from None
    if len(nums) == 1:
        return np.array(nums)
    if len(nums) != 3:
        raise UsageError(f"bad grid {spec!r}; expected a:b:step")
    a, b, step = nums
    if not step > 0 or b < a:
        raise UsageError("grid needs step > 0 and a <= b")
    count = int(math.floor((b - a) / step + 1e-9)) + 1
    return a + step * np.arange(count)


# ---------------------------------------------------------------------------
# serialization


def fmt_cell(v) -> str:
    if v is None:
        return ""
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        v = float(v)
        if math.isnan(v):
            return "nan"
        if math.isinf(v):
            return "inf" if v > 0 else "-inf"
        return "%.17g" % v
    return str(v)


def _json_cell(v):
    if isinstance(v, (bool, np.bool_)):
        return bool(v)
    if isinstance(v, (int, np.integer)):
        return int(v)
    if isinstance(v, (float, np.floating)):
        v = float(v)
        return v if math.isfinite(v) else fmt_cell(v)
    return v


def render_table(columns, rows, meta: dict, fmt: str) -> str:
    if fmt == "json":
        doc = {
            "metadata": meta,
            "columns": list(columns),
            "rows": [[_json_cell(v) for v in row] for row in rows],
        }
        return json.dumps(doc, indent=1, allow_nan=False) + "\n"
    buf = io.StringIO()
    buf.write(f"# kingldp {__version__}\n")
    for key, value in meta.items():
        buf.write(f"# {key}: {json.dumps(value, sort_keys=True)}\n")
    buf.write(",".join(columns) + "\n")
    for row in rows:
        cells = []
        for v in row:
            s = fmt_cell(v)
            if any(ch in s for ch in ',"\n'):
                s = '"' + s.replace('"', '""') + '"'
            cells.append(s)
        buf.write(",".join(cells) + "\n")
    return buf.getvalue()


def emit(text: str, out: str | None):
    if out is None or out == "-":
        sys.stdout.write(text)
        return
    try:
        with open(out, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
    except OSError as exc:
        raise OSError(f"cannot write {out}: {exc.strerror or exc}") from exc


def _metadata(args, **extra) -> dict:
    config = {k: v for k, v in vars(args).items() if k not in ("handler", "out")}
    meta = {"version": __version__, "config": config}
    if "seed" in config:
        meta["seed"] = config["seed"]
    meta.update(extra)
    return meta


# ---------------------------------------------------------------------------
# rate


def _rate_row(function: str, x: float):
    if function == "I":
        r = rates.eval_I(x)
        return [x, r.value, r.abs_err_estimate, "ok"]
    if function == "I_hat":
        r = rates.eval_I_hat(x)
        return [x, r.value, r.abs_err_estimate, "ok"]
    if function == "rate_up":
        r = rates.rate_up_Wn(x)
        return [x, r.value, r.abs_err_estimate, "ok"]
    if function == "f":
        return [x, rates.eval_f(x), 8 * math.ulp(2.0), "ok"]
    if function == "Lambda":
        if x > 0.5:
            return [x, math.inf, 0.0, "ok"]
        if x == 0.0:
            return [x, 0.0, 0.0, "ok"]
        value, err = _lambda_with_error(x)
        return [x, value, err, "ok"]
    raise AssertionError(function)


def _bounds_row(x: float):
    def attempt(fn):
        try:
            return fn(x)
        except ValueError:
            return None

    g = attempt(rates.bound_positivity_g)
    row = [x, attempt(rates.bound_T3), None if g is None else g[1], attempt(rates.bound_angel)]
    return row + ["ok" if any(v is not None for v in row[1:]) else "domain_error: no bound applies"]


def _tilde_row(x: float):
    sol = rates.eval_I_tilde(x)
    return [x, sol.value, sol.diagnostics["abs_err_estimate"], sol.c_star, sol.t_star, sol.converged, "ok"]


def cmd_rate(args) -> int:
    xs = parse_grid(args.grid)
    if args.function == "bounds":
        columns = BOUNDS_COLUMNS
    elif args.function == "I_tilde":
        columns = I_TILDE_COLUMNS
    else:
        columns = RATE_COLUMNS
    rows = []
    for x in xs:
        x = float(x)
        try:
            if args.function == "bounds":
                rows.append(_bounds_row(x))
            elif args.function == "I_tilde":
                rows.append(_tilde_row(x))
            else:
                rows.append(_rate_row(args.function, x))
        except (ValueError, ArithmeticError) as exc:
            rows.append([x] + [None] * (len(columns) - 2) + [f"domain_error: {exc}"])
    emit(render_table(columns, rows, _metadata(args), args.format), args.out)
    return EXIT_OK


# ---------------------------------------------------------------------------
# figure


def _with_point(grid, point):
    return np.unique(np.concatenate([grid, [point]]))


def figure_table(name: str, resolution: int):
    if resolution < 3:
        raise UsageError("resolution must be at least 3")
    rows = []
    if name == "fig_T1":
        for t in _with_point(np.linspace(-20.0, 0.95, resolution), 0.0):
            rows.append(["f", float(t), rates.eval_f(float(t))])
        for x in _with_point(np.linspace(0.1, 6.0, resolution), 2.0):
            rows.append(["I", float(x), rates.eval_I(float(x)).value])
    elif name == "fig_cor1":
        for x in _with_point(np.linspace(0.0, 4.0, resolution), 2.0):
            x = float(x)
            rows.append([x, rates.eval_I_hat(x).value, (x - 2.0) ** 2 / 4.0])
    elif name == "fig_T2a":
        for x in np.linspace(1.05, 1.95, resolution):
            x = float(x)
            sol = rates.eval_I_tilde(x)
            rows.append([x, sol.value, rates.bound_T3(x), sol.converged])
    else:
        raise UsageError(f"unknown figure {name!r}")
    return FIGURE_COLUMNS[name], rows


def cmd_figure(args) -> int:
    columns, rows = figure_table(args.name, args.resolution)
    emit(render_table(columns, rows, _metadata(args), args.format), args.out)
    return EXIT_OK


# ---------------------------------------------------------------------------
# simulate


def cmd_simulate(args) -> int:
    size = args.size
    if args.statistic in ("nTn", "Wn"):
        if size != int(size):
            raise UsageError("--size must be an integer n for nTn and Wn")
        size = int(size)
    values, info = harness.simulate_statistic(args.statistic, size, args.trials, args.seed, args.threads)
    rows = [[i, float(v)] for i, v in enumerate(values)]
    meta = _metadata(
        args,
        truncation_K=info["truncation_K"],
        bias_bound=info["bias_bound"],
        remainder=info["remainder"],
    )
    emit(render_table(SIMULATE_COLUMNS, rows, meta, args.format), args.out)
    return EXIT_OK


# ---------------------------------------------------------------------------
# verify


def cmd_verify(args) -> int:
    results = verification.run_suite(args.suite, args.budget, args.seed, args.threads)
    rows = [[r.suite, r.name, r.passed, r.value, r.reference, r.detail] for r in results]
    emit(render_table(VERIFY_COLUMNS, rows, _metadata(args), args.format), args.out)
    failed = [r for r in results if not r.passed]
    for r in results:
        print(f"{'PASS' if r.passed else 'FAIL'}  {r.suite}: {r.name}", file=sys.stderr)
    print(f"{len(results) - len(failed)}/{len(results)} checks passed", file=sys.stderr)
    return EXIT_FAIL if failed else EXIT_OK


# ---------------------------------------------------------------------------


def _positive_int(text: str) -> int:
    try:
        value = int(float(text))
    except ValueError:
        raise argparse.ArgumentTypeError(f"not an integer: {text!r}") from None
    if value < 1 or value != float(text):
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {text!r}")
    return value


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="kingldp", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"kingldp {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, seed=False, threads=False):
        p.add_argument("--out", default=None, help="output path (default stdout)")
        p.add_argument("--format", choices=("csv", "json"), default="csv")
        if seed:
            p.add_argument("--seed", type=int, default=0)
        if threads:
            p.add_argument("--threads", type=_positive_int, default=harness.default_threads(),
                           help="worker threads (default $KINGLDP_THREADS or 1)")

    p = sub.add_parser("rate", help="tabulate a rate function or bound")
    p.add_argument("function", choices=RATE_FUNCTIONS)
    p.add_argument("--grid", required=True, help="a:b:step or a single value")
    common(p)
    p.set_defaults(handler=cmd_rate)

    p = sub.add_parser("figure", help="emit the data behind a figure")
    p.add_argument("name", choices=FIGURES)
    p.add_argument("--resolution", type=_positive_int, default=201)
    common(p)
    p.set_defaults(handler=cmd_figure)

    p = sub.add_parser("simulate", help="write raw samples of a statistic")
    p.add_argument("statistic", choices=("nTn", "epsNeps", "Wn"))
    p.add_argument("--size", type=float, required=True, help="n for nTn and Wn, eps for epsNeps")
    p.add_argument("--trials", type=_positive_int, default=10**4)
    common(p, seed=True, threads=True)
    p.set_defaults(handler=cmd_simulate)

    p = sub.add_parser("verify", help="run a verification suite")
    p.add_argument("suite", choices=verification.SUITES)
    p.add_argument("--budget", type=_positive_int, default=10**6, help="trial cap per Monte Carlo point")
    common(p, seed=True, threads=True)
    p.set_defaults(handler=cmd_verify)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.handler(args)
    except (UsageError, ValueError, OSError) as exc:
        print(f"kingldp {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
