"""Command line: barrier probabilities by route, limit studies, calibration, zeros.

Exit codes: 0 success, 2 invalid input, 3 numerical failure, 4 budget exhausted.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import sys
import warnings
from typing import Iterable, Sequence

import numpy as np

from . import analytic, hitting, pathsim, specfun
from .core import BarrierSpec, Dim, Perturbation, linear_to_flat
from .errors import BudgetExhausted, ConvergenceError, DomainError

EXIT_OK, EXIT_INPUT, EXIT_NUMERIC, EXIT_BUDGET = 0, 2, 3, 4
ROUTES = ("analytic", "semi", "mc")


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_INPUT, f"{self.prog}: error: {message}\n")


def _floats(text: str) -> list[float]:
    return [float(t) for t in text.split(",") if t.strip()]


# --- output ---------------------------------------------------------------


def _fmt(v):
    # numpy scalars repr as np.float64(...) under numpy 2
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    if isinstance(v, np.integer):
        return int(v)
    return v


def _jsonable(v):
    if isinstance(v, np.floating):
        return float(v)
    if isinstance(v, np.integer):
        return int(v)
    return v


def write_rows(rows: Sequence[dict], columns: Sequence[str], fmt: str, out) -> None:
    if fmt == "jsonl":
        for r in rows:
            out.write(json.dumps({c: _jsonable(r.get(c)) for c in columns}) + "\n")
        return
    w = csv.writer(out, lineterminator="\n")
    w.writerow(columns)
    for r in rows:
        w.writerow([_fmt(r.get(c, "")) for c in columns])


def _emit(args, rows, columns) -> None:
    if args.out:
        with open(args.out, "w", newline="") as fh:
            write_rows(rows, columns, args.format, fh)
    else:
        buf = io.StringIO()
        write_rows(rows, columns, args.format, buf)
        sys.stdout.write(buf.getvalue())


# --- prob -----------------------------------------------------------------

PROB_COLUMNS = ["route", "probability", "uncertainty", "uncertainty_kind", "d", "a", "b", "T", "j",
                "x", "h_c", "h_gamma", "n_samples", "n_points", "seed", "threads", "note"]


def _prob_rows(args) -> list[dict]:
    routes = ROUTES if args.route == "all" else (args.route,)
    if any(r in ("semi", "mc") for r in routes) and args.seed is None:
        raise DomainError("--seed is required for stochastic routes")
    echo = {"d": args.d, "a": args.a, "b": args.b, "T": args.T, "j": args.j, "x": args.x,
            "h_c": args.h_c, "h_gamma": args.h_gamma, "n_samples": args.n_samples,
            "n_points": args.n_points, "seed": args.seed, "threads": args.threads}
    dim = Dim(args.d)
    if args.j == 0:
        return [{**echo, "route": r, "probability": 0.0, "uncertainty": 0.0,
                 "uncertainty_kind": "exact", "note": "endpoint on the barrier"} for r in routes]
    pert = None
    if args.h_c is not None or args.h_gamma is not None:
        if args.h_c is None or args.h_gamma is None:
            raise DomainError("--h-c and --h-gamma go together")
        pert = Perturbation(args.h_c, args.h_gamma)
    spec = BarrierSpec(args.a, args.b, args.T, args.j, args.x, pert)
    rows = []
    for route in routes:
        row = dict(echo, route=route, note="")
        if route == "analytic":
            if pert is not None:
                bound = analytic.concave_bound(dim, spec, slack=args.slack)
                row.update(probability=bound / spec.T, uncertainty=0.0,
                           uncertainty_kind="upper_bound", note="concave-barrier bound / T")
            else:
                with warnings.catch_warnings(record=True) as caught:
                    warnings.simplefilter("always")
                    lo = analytic.leading_order(dim, spec, finite_T=args.finite_T)
                row.update(probability=lo.probability, uncertainty=lo.error_envelope,
                           uncertainty_kind="envelope",
                           note="; ".join(str(w.message) for w in caught))
        elif route == "semi":
            if pert is not None:
                raise DomainError("the semi-analytic route has no perturbed barrier")
            if spec.x >= spec.a:
                row.update(probability=0.0, uncertainty=0.0, uncertainty_kind="exact",
                           note="start on or above the barrier")
            else:
                flat = linear_to_flat(spec, dim)
                model = hitting.hitting_model(flat.dim, flat.delta, tail_sd_tol=args.tol)
                est = hitting.flat_barrier_semianalytic(flat, n_samples=args.n_samples,
                                                        seed=args.seed, model=model)
                row.update(probability=est.mean, uncertainty=est.stderr, uncertainty_kind="stderr")
        else:
            est = pathsim.estimate_barrier(dim, spec, n_samples=args.n_samples,
                                           n_points=args.n_points, seed=args.seed,
                                           threads=args.threads)
            row.update(probability=est.mean, uncertainty=est.stderr, uncertainty_kind="stderr")
        rows.append(row)
    return rows


def cmd_prob(args) -> int:
    _emit(args, _prob_rows(args), PROB_COLUMNS)
    return EXIT_OK


# --- limits ---------------------------------------------------------------

LIMIT_COLUMNS = ["study", "d", "b", "parameter", "value", "target", "deviation", "rate", "route",
                 "uncertainty"]
DEFAULT_GRIDS = {
    "p_abx": [1e2, 1e3, 1e4],
    "p_hat": [1.0, 10.0, 100.0, 1000.0],
    "c_prime": [1e2, 1e3, 1e4],
    "zero_rate": [1e2, 1e3, 1e4],
}


def fitted_rate(params: Sequence[float], deviations: Sequence[float]) -> float:
    """Decay exponent r in |deviation| ~ C param^-r by least squares in log-log."""
    p = np.asarray(params, dtype=float)
    dev = np.abs(np.asarray(deviations, dtype=float))
    ok = (p > 0) & (dev > 0)
    if ok.sum() < 2:
        return math.nan
    return float(-np.polyfit(np.log(p[ok]), np.log(dev[ok]), 1)[0])


def _first_order_f(z):
    return np.exp(-z)


def _second_order_f(z):
    # vanishes at 0 and infinity with zero slope at 0
    return 0.5 * z * z * np.exp(-0.5 * z * z)


def limit_rows(study: str, dim: Dim, b: float, grid: Iterable[float], x: float = 1.0) -> list[dict]:
    grid = list(grid)
    rows = []
    if study == "p_abx":
        for a in grid:
            r = analytic.p_abx_integral(dim, a, b, x)
            rows.append(dict(parameter=a, value=r.p_abx, target=2.0, uncertainty=r.error,
                             route="integral"))
    elif study == "p_hat":
        target = (2 * dim.abs_nu + 1) / (2 * b)
        for xx in grid:
            rows.append(dict(parameter=xx, value=analytic.p_hat(dim, b, xx), target=target,
                             uncertainty=0.0, route="closed_form"))
    elif study == "c_prime":
        for a in grid:
            r = analytic.c_prime(dim, a, b)
            rows.append(dict(parameter=a, value=r.value, target=math.sqrt(2 * a / (math.pi * b)),
                             uncertainty=r.error, route="zero_sum"))
    elif study in ("zero_rate", "zero_rate_second"):
        f = _first_order_f if study == "zero_rate" else _second_order_f
        for eta in grid:
            r = hitting.zero_measure_sum(hitting.ZeroMeasure(eta, dim.dual.abs_nu), f)
            rows.append(dict(parameter=eta, value=r.value, target=r.meta["comparison"],
                             uncertainty=r.error, route="zero_sum"))
    else:
        raise DomainError(f"unknown study {study!r}")
    for r in rows:
        r.update(study=study, d=dim.d, b=b, deviation=r["value"] - r["target"])
    rate = fitted_rate([r["parameter"] for r in rows], [r["deviation"] for r in rows])
    for r in rows:
        r["rate"] = rate
    return rows


def cmd_limits(args) -> int:
    dim = Dim(args.d)
    studies = ["p_abx", "p_hat", "c_prime", "zero_rate", "zero_rate_second"] \
        if args.study == "all" else [args.study]
    rows = []
    for s in studies:
        if args.grid is not None:
            grid = _floats(args.grid)
        else:
            grid = DEFAULT_GRIDS.get(s, DEFAULT_GRIDS["zero_rate"])
        rows += limit_rows(s, dim, args.b, grid, x=args.x)
    _emit(args, rows, LIMIT_COLUMNS)
    return EXIT_OK


# --- calibrate / zeros ----------------------------------------------------


def cmd_calibrate(args) -> int:
    from .calibration import calibrate, write_constants

    consts = calibrate(seed=args.seed, n_samples=args.n_samples, grid_size=args.grid_size,
                       n_points=args.n_points, max_seconds=args.max_seconds, threads=args.threads)
    text = write_constants(consts)
    if args.out:
        with open(args.out, "w") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)
    return EXIT_OK


def cmd_zeros(args) -> int:
    table = specfun.bessel_j_zeros(args.order, args.n)
    rows = [{"order": args.order, "n": i + 1, "zero": float(z)} for i, z in enumerate(table.zeros)]
    _emit(args, rows, ["order", "n", "zero"])
    return EXIT_OK


# --- parser ---------------------------------------------------------------


def _add_output(p):
    p.add_argument("--format", choices=("csv", "jsonl"), default="csv")
    p.add_argument("--out", default=None, help="write to this file instead of stdout")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="besselbarrier",
                     description="Barrier probabilities for Bessel bridges below linear barriers.")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("prob", help="bridge probability of staying below a + bt")
    p.add_argument("--d", type=float, required=True)
    p.add_argument("--a", type=float, required=True)
    p.add_argument("--b", type=float, required=True)
    p.add_argument("--T", type=float, required=True)
    p.add_argument("--j", type=float, required=True)
    p.add_argument("--x", type=float, required=True)
    p.add_argument("--h-c", type=float, default=None)
    p.add_argument("--h-gamma", type=float, default=None)
    p.add_argument("--route", choices=("analytic", "semi", "mc", "all"), default="analytic")
    p.add_argument("--n-samples", type=int, default=100_000)
    p.add_argument("--n-points", type=int, default=pathsim.DEFAULT_N_POINTS)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--threads", type=int, default=1)
    p.add_argument("--tol", type=float, default=hitting.TAIL_SD_TOL)
    p.add_argument("--slack", type=float, default=None, help="concave-bound slack")
    p.add_argument("--finite-T", action="store_true", help="evaluate constants at the exact u_T")
    _add_output(p)
    p.set_defaults(func=cmd_prob)

    p = sub.add_parser("limits", help="limit and rate studies")
    p.add_argument("--study", default="all",
                   choices=("all", "p_abx", "p_hat", "c_prime", "zero_rate", "zero_rate_second"))
    p.add_argument("--d", type=float, default=2.0)
    p.add_argument("--b", type=float, default=1.0)
    p.add_argument("--x", type=float, default=1.0, help="fixed x for the p_abx study")
    p.add_argument("--grid", default=None, help="comma-separated parameter values")
    _add_output(p)
    p.set_defaults(func=cmd_limits)

    p = sub.add_parser("calibrate", help="calibrate the existence-only constants")
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--n-samples", type=int, default=20_000)
    p.add_argument("--n-points", type=int, default=128)
    p.add_argument("--grid-size", type=int, default=12)
    p.add_argument("--threads", type=int, default=1)
    p.add_argument("--max-seconds", type=float, default=math.inf)
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_calibrate)

    p = sub.add_parser("zeros", help="positive zeros of J_order")
    p.add_argument("--order", type=float, required=True)
    p.add_argument("--n", type=int, required=True)
    _add_output(p)
    p.set_defaults(func=cmd_zeros)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    if getattr(args, "tol", None) is not None and args.tol <= 0:
        print("error: --tol must be > 0", file=sys.stderr)
        return EXIT_INPUT
    if getattr(args, "threads", 1) < 1:
        print("error: --threads must be >= 1", file=sys.stderr)
        return EXIT_INPUT
    try:
        return args.func(args)
    except BudgetExhausted as exc:
        print(f"budget exhausted: {exc}", file=sys.stderr)
        return EXIT_BUDGET
    except (ConvergenceError, ArithmeticError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except ValueError as exc:
        print(f"invalid input: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
