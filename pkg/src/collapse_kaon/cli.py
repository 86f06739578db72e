"""Command-line front end: compare, simulate, sweep-theta, wick-table, validate."""
from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import math
import sys
from fractions import Fraction
from pathlib import Path
from typing import Sequence

import numpy as np

from . import analytic
from .assembly import assemble_oscillation, assemble_survival, cross_term_breakdown
from .config import ConfigError, RunConfig, load_config
from .core import Flavor, MassState, as_fraction, format_fraction
from .montecarlo import OBSERVABLES, Scheme, estimate
from .wick import wick_table_rows

log = logging.getLogger(__name__)

EXIT_OK, EXIT_FAIL, EXIT_CONFIG, EXIT_OVERFLOW = 0, 1, 2, 3

COMPARE_OBSERVABLES = ("P_SS", "P_LL", "P_K0K0", "P_K0K0bar")


class MonteCarloOverflow(RuntimeError):
    pass


def _cell(value) -> str:
    if value is None:
        return ""
    if isinstance(value, (float, np.floating)):
        return "" if math.isnan(value) else repr(float(value))
    return str(value)


def render(rows: list[dict], columns: Sequence[str], fmt: str) -> str:
    """Serialize rows as RFC 4180 CSV or a JSON array, deterministically."""
    if fmt == "json":
        def clean(v):
            if isinstance(v, (float, np.floating)):
                return None if math.isnan(v) else float(v)
            if isinstance(v, (np.integer,)):
                return int(v)
            return v
        return json.dumps([{c: clean(r.get(c)) for c in columns} for r in rows], indent=2) + "\n"
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\r\n")
    writer.writerow(columns)
    for row in rows:
        writer.writerow([_cell(row.get(c)) for c in columns])
    return buf.getvalue()


def emit(text: str, out: str | None) -> None:
    if out:
        Path(out).write_bytes(text.encode())
    else:
        sys.stdout.write(text)


def scheme_for_theta(theta0, preferred: Scheme) -> Scheme | None:
    """Trajectory scheme realizing ``theta0``, preferring the configured one."""
    theta0 = as_fraction(theta0)
    if preferred.theta0 == theta0:
        return preferred
    return {Fraction(0): Scheme.LEFT_POINT, Fraction(1, 2): Scheme.MIDPOINT_UNITARY,
            Fraction(1): Scheme.RIGHT_POINT}.get(theta0)


def compare_columns() -> list[str]:
    cols = ["t", "theta0"]
    for obs in COMPARE_OBSERVABLES:
        cols += [f"{obs}_analytic", f"{obs}_assembly", f"{obs}_mc", f"{obs}_mc_stderr"]
    return cols


def cmd_compare(config: RunConfig) -> list[dict]:
    """Analytic, assembled and Monte Carlo probabilities side by side.

    Monte Carlo cells stay empty for theta0 values no scheme realizes.
    Raises :class:`MonteCarloOverflow` after the table is built if any
    trajectory overflowed; the rows are attached to the exception.
    """
    params = config.params
    t = np.array(config.times)
    oscillates = params.m_L != params.m_S
    series = {
        "P_SS": assemble_survival(MassState.S, params),
        "P_LL": assemble_survival(MassState.L, params),
    }
    if oscillates:
        series["P_K0K0"] = assemble_oscillation(Flavor.K0, Flavor.K0, params)
        series["P_K0K0bar"] = assemble_oscillation(Flavor.K0, Flavor.K0bar, params)
    mc_cache: dict[Scheme, object] = {}
    failed = 0
    rows = []
    for theta0 in config.theta0:
        ref = {
            "P_SS": analytic.survival_probability("S", params, theta0, t),
            "P_LL": analytic.survival_probability("L", params, theta0, t),
        }
        if oscillates:
            ref["P_K0K0"] = analytic.oscillation_probability(Flavor.K0, params, theta0, t)
            ref["P_K0K0bar"] = analytic.oscillation_probability(Flavor.K0bar, params, theta0, t)
        scheme = scheme_for_theta(theta0, config.scheme)
        mc = None
        if scheme is not None:
            if scheme not in mc_cache:
                mc_cache[scheme] = estimate(scheme, params, config.trajectories, config.dt, t,
                                            config.master_seed, config.grid)
                failed += mc_cache[scheme].n_failed
            mc = mc_cache[scheme]
        for k, tk in enumerate(t):
            row = {"t": float(tk), "theta0": float(theta0)}
            for obs in COMPARE_OBSERVABLES:
                have = obs in series
                row[f"{obs}_analytic"] = float(ref[obs][k]) if have else math.nan
                row[f"{obs}_assembly"] = float(series[obs].evaluate(theta0, tk)) if have else math.nan
                row[f"{obs}_mc"] = float(mc.mean[obs][k]) if mc is not None else math.nan
                row[f"{obs}_mc_stderr"] = float(mc.stderr[obs][k]) if mc is not None else math.nan
            rows.append(row)
    if failed:
        exc = MonteCarloOverflow(f"{failed} trajectories overflowed")
        exc.rows = rows
        raise exc
    return rows


def breakdown_lines(config: RunConfig) -> list[str]:
    lines = []
    for mu, nu in ((MassState.S, MassState.S), (MassState.L, MassState.L), (MassState.S, MassState.L)):
        for a, b, poly in cross_term_breakdown(mu, nu, config.params):
            lines.append(f"branch=({mu.value},{nu.value}) a={a} b={b}: {poly}")
    return lines


def simulate_columns() -> list[str]:
    cols = ["t", "scheme"]
    for obs in OBSERVABLES:
        cols += [obs, f"{obs}_stderr"]
    return cols + ["n_trajectories", "n_failed"]


def cmd_simulate(config: RunConfig) -> list[dict]:
    """Monte Carlo time series for the configured scheme."""
    est = estimate(config.scheme, config.params, config.trajectories, config.dt,
                   np.array(config.times), config.master_seed, config.grid)
    rows = []
    for k, tk in enumerate(est.t):
        row = {"t": float(tk), "scheme": est.scheme.value,
               "n_trajectories": est.n_trajectories, "n_failed": est.n_failed}
        for obs in OBSERVABLES:
            row[obs] = float(est.mean[obs][k])
            row[f"{obs}_stderr"] = float(est.stderr[obs][k])
        rows.append(row)
    if est.n_failed:
        exc = MonteCarloOverflow(f"{est.n_failed} trajectories overflowed")
        exc.rows = rows
        raise exc
    return rows


SWEEP_COLUMNS = (
    "theta0",
    "survival_S_linear", "survival_S_quadratic",
    "survival_L_linear", "survival_L_quadratic",
    "oscillation_linear", "oscillation_quadratic",
    "survival_S_linear_exact", "survival_S_quadratic_exact",
    "survival_L_linear_exact", "survival_L_quadratic_exact",
    "oscillation_linear_exact", "oscillation_quadratic_exact",
)


def cmd_sweep_theta(config: RunConfig, thetas: Sequence[float] | None = None) -> list[dict]:
    """Assembled t and t^2 coefficients of the survival and oscillation brackets vs theta0."""
    params = config.params
    surv = {mu: assemble_survival(mu, params).branch(mu, mu) for mu in MassState}
    osc = None
    if params.m_L != params.m_S:
        # the (S, L) branch carries weight 1/4 of the bracket
        osc = 4 * assemble_oscillation(Flavor.K0, Flavor.K0, params).branch(MassState.S, MassState.L)
    rows = []
    for theta0 in (thetas if thetas is not None else config.theta0):
        th = as_fraction(theta0)
        exact = {
            "survival_S_linear": surv[MassState.S].t_coefficient(1).evaluate(th, 0),
            "survival_S_quadratic": surv[MassState.S].t_coefficient(2).evaluate(th, 0),
            "survival_L_linear": surv[MassState.L].t_coefficient(1).evaluate(th, 0),
            "survival_L_quadratic": surv[MassState.L].t_coefficient(2).evaluate(th, 0),
        }
        if osc is not None:
            exact["oscillation_linear"] = osc.t_coefficient(1).evaluate(th, 0)
            exact["oscillation_quadratic"] = osc.t_coefficient(2).evaluate(th, 0)
        row = {"theta0": float(theta0)}
        for name, value in exact.items():
            row[name] = float(value)
            row[f"{name}_exact"] = format_fraction(value)
        rows.append(row)
    return rows


WICK_COLUMNS = ("layout", "pairing", "k", "j", "coefficient")


def cmd_wick_table(max_order: int = 4) -> list[dict]:
    return wick_table_rows(max_order)


def cmd_validate(only: Sequence[int] | None = None, report: str | None = None) -> int:
    from .validation import run_all

    results = run_all(only)
    width = max(len(r.name) for r in results)
    for r in results:
        status = "PASS" if r.passed else "FAIL"
        print(f"[{status}] {r.number}. {r.name:<{width}}  ({r.elapsed:.1f} s)  {r.detail}")
    ok = all(r.passed for r in results)
    print(f"{sum(r.passed for r in results)}/{len(results)} criteria passed")
    if report or not ok:
        path = Path(report or "validation_report.json")
        path.write_text(json.dumps([r.to_dict() for r in results], indent=2) + "\n")
    return EXIT_OK if ok else EXIT_FAIL


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", metavar="PATH", help="JSON run configuration")
    common.add_argument("--theta", type=float, action="append", metavar="F",
                        help="theta(0) value; repeatable, replaces the config list")
    common.add_argument("--scheme", choices=[s.value for s in Scheme])
    common.add_argument("--trajectories", type=int, metavar="N")
    common.add_argument("--dt", type=float, metavar="F")
    common.add_argument("--seed", type=int, metavar="U64")
    common.add_argument("--t-max", type=float, metavar="F")
    common.add_argument("--steps", type=int, metavar="N")
    common.add_argument("--out", metavar="PATH")
    common.add_argument("--format", choices=["csv", "json"])

    parser = argparse.ArgumentParser(
        prog="collapse-kaon",
        description="Collapse-model neutral kaon probabilities: perturbative, Wick and Monte Carlo paths.")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)
    compare = sub.add_parser("compare", parents=[common], help="analytic vs assembly vs Monte Carlo")
    compare.add_argument("--breakdown", action="store_true",
                         help="print the per-cross-term polynomials to stderr")
    sub.add_parser("simulate", parents=[common], help="Monte Carlo time series")
    sub.add_parser("sweep-theta", parents=[common], help="bracket coefficients vs theta(0)")
    wick = sub.add_parser("wick-table", parents=[common], help="exact Wick integral table")
    wick.add_argument("--max-order", type=int, default=4)
    validate = sub.add_parser("validate", help="run the acceptance criteria")
    validate.add_argument("--only", type=int, action="append", metavar="N",
                          help="run only criterion N (repeatable)")
    validate.add_argument("--report", metavar="PATH", help="write the JSON report here")
    return parser


def _resolve_config(args) -> RunConfig:
    config = load_config(args.config) if args.config else RunConfig()
    try:
        return config.with_overrides(
            theta0=tuple(args.theta) if args.theta else None,
            scheme=Scheme.parse(args.scheme) if args.scheme else None,
            trajectories=args.trajectories,
            dt=args.dt,
            master_seed=args.seed,
            t_max=args.t_max,
            t_steps=args.steps,
            output=args.out,
            format=args.format,
        )
    except ValueError as exc:
        raise ConfigError(f"command-line override: {exc}") from None


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if args.command == "validate":
        return cmd_validate(args.only, args.report)
    try:
        config = _resolve_config(args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG

    status = EXIT_OK
    if args.command == "compare":
        if args.breakdown:
            print("\n".join(breakdown_lines(config)), file=sys.stderr)
        columns = compare_columns()
        try:
            rows = cmd_compare(config)
        except MonteCarloOverflow as exc:
            print(f"error: {exc}", file=sys.stderr)
            rows, status = exc.rows, EXIT_OVERFLOW
    elif args.command == "simulate":
        columns = simulate_columns()
        try:
            rows = cmd_simulate(config)
        except MonteCarloOverflow as exc:
            print(f"error: {exc}", file=sys.stderr)
            rows, status = exc.rows, EXIT_OVERFLOW
    elif args.command == "sweep-theta":
        columns, rows = SWEEP_COLUMNS, cmd_sweep_theta(config)
    else:
        columns, rows = WICK_COLUMNS, cmd_wick_table(args.max_order)
    emit(render(rows, columns, config.format), config.output)
    return status


if __name__ == "__main__":
    sys.exit(main())
