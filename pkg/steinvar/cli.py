import argparse
import dataclasses
import logging
import os
import sys
from datetime import datetime, timezone

import numpy as np

from steinvar import __version__
from steinvar.constants import (
    BLOCK_SIZE,
    CHECKED_MIN_ORDER,
    DEFAULT_REPLICATES,
    DEFAULT_XI_GRID,
    PROPERTY_TOLERANCE,
    VERDICT_STD_ERRS,
)
from steinvar.domain.checks import run_checks
from steinvar.domain.errors import (
    DataError,
    NumericalError,
    ParameterError,
    PropertyViolation,
    SteinvarError,
)
from steinvar.domain.estimators import EstimatorSpec, phi_bz, phi_gb
from steinvar.domain.regression import compute_stats
from steinvar.domain.risk import (
    compare_paired,
    derive_seed,
    risk_difference_exact,
    risk_grid,
    unbiased_risk,
)
from steinvar.domain.sampling import ALGORITHMS, MixingLaw, SimConfig
from steinvar.services.config_file import ConfigFileError, load_config_file, seed_from_env
from steinvar.services.logging_utils import setup_logging
from steinvar.services.results_io import (
    CURVE_HEADERS,
    read_regression_csv,
    write_csv,
    write_json,
)

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_PROPERTY = 3
EXIT_VERIFY = 4

TRUE_WORDS = {"1", "true", "yes", "on"}
FALSE_WORDS = {"0", "false", "no", "off", ""}


class UsageParser(argparse.ArgumentParser):
    """ArgumentParser whose usage errors exit with status 1."""

    def error(self, message: str) -> None:
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def non_negative_int(value: str) -> int:
    try:
        ivalue = int(value, 0)
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"Invalid integer value: {value}") from exc
    if ivalue < 0:
        raise argparse.ArgumentTypeError("Value must be a non-negative integer.")
    return ivalue


def positive_int(value: str) -> int:
    try:
        ivalue = int(value)
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"Invalid integer value: {value}") from exc
    if ivalue <= 0:
        raise argparse.ArgumentTypeError("Value must be a positive integer.")
    return ivalue


def positive_float(value: str) -> float:
    try:
        fvalue = float(value)
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"Invalid float value: {value}") from exc
    if not fvalue > 0:
        raise argparse.ArgumentTypeError("Value must be a positive number.")
    return fvalue


def xi_grid(value: str) -> tuple[float, ...]:
    try:
        values = tuple(float(part) for part in value.split(",") if part.strip())
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"Invalid xi grid: {value}") from exc
    if not values or any(not xi >= 0 for xi in values):
        raise argparse.ArgumentTypeError("xi grid must be a comma list of non-negative numbers.")
    return values


def estimator_spec(value: str) -> EstimatorSpec:
    try:
        return EstimatorSpec.parse(value)
    except ParameterError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from exc


def mixing_law(value: str) -> MixingLaw:
    try:
        return MixingLaw.parse(value)
    except ParameterError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from exc


def _common_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument(
        "--config",
        default=None,
        help="Flat key=value file supplying defaults; explicit flags take precedence.",
    )
    common.add_argument(
        "--format",
        choices=("csv", "json"),
        default="csv",
        help="Output format (default: csv).",
    )
    common.add_argument(
        "--output",
        default=None,
        help="Write results to this path (default: stdout).",
    )
    common.add_argument(
        "--log-dir",
        default=None,
        help="Directory for app.log and simulation.log (default: console only).",
    )
    common.add_argument(
        "--quiet",
        action="store_true",
        help="Only warnings and errors on the console.",
    )
    return common


def _simulation_parent() -> argparse.ArgumentParser:
    parent = argparse.ArgumentParser(add_help=False)
    parent.add_argument(
        "--seed",
        type=non_negative_int,
        default=None,
        help="Master seed (default: $STEINVAR_SEED, else drawn from OS entropy and echoed).",
    )
    parent.add_argument(
        "--threads",
        type=positive_int,
        default=os.cpu_count() or 1,
        help="Worker threads for the simulation (default: available CPUs).",
    )
    parent.add_argument(
        "--report",
        default=None,
        help=(
            "Write the paired-comparison JSON report to this path (default: stdout, in which "
            "case the CSV results are only written when --output is given)."
        ),
    )
    return parent


def build_parser() -> UsageParser:
    parser = UsageParser(
        prog="steinvar",
        description="Shrinkage variance estimators under Stein's loss: estimates, phi tables, risk simulation.",
    )
    parser.add_argument(
        "--version",
        action="version",
        version=f"steinvar {__version__}",
    )
    common = _common_parser()
    simulation = _simulation_parent()
    commands = parser.add_subparsers(dest="command", required=True, metavar="command")

    estimate = commands.add_parser(
        "estimate",
        parents=[common],
        help="Estimate the error variance of a regression CSV (first column y).",
    )
    estimate.add_argument("data", help="CSV file: response in the first column, predictors after it.")
    estimate.add_argument(
        "--estimator",
        dest="estimators",
        type=estimator_spec,
        nargs="+",
        default=[EstimatorSpec.unbiased(), EstimatorSpec.stein(), EstimatorSpec.brewster_zidek()],
        help="Estimators: u, stein, bz, gb:a=<a>, h, sbstar (default: u stein bz).",
    )

    phi_table = commands.add_parser(
        "phi-table",
        parents=[common],
        help="Tabulate phi_BZ and phi_GB_a over an R^2 grid.",
    )
    phi_table.add_argument("--n", type=positive_int, required=True, help="Number of observations.")
    phi_table.add_argument("--p", type=positive_int, required=True, help="Number of predictors.")
    phi_table.add_argument(
        "--a",
        dest="orders",
        type=positive_float,
        nargs="+",
        default=[2.0],
        help="Shrinkage orders a for phi_GB_a (default: 2).",
    )
    phi_table.add_argument(
        "--grid-size",
        type=positive_int,
        default=101,
        help="Number of equally spaced R^2 points in [0, 1] (default: 101).",
    )
    phi_table.add_argument(
        "--estimators",
        dest="extra_estimators",
        type=estimator_spec,
        nargs="+",
        default=[],
        help="Additional phi columns, e.g. stein sbstar.",
    )

    risk_sim = commands.add_parser(
        "risk-sim",
        parents=[common, simulation],
        help="Monte Carlo Stein-loss risk curve, or a paired dominance comparison.",
    )
    risk_sim.add_argument("--n", type=positive_int, required=True, help="Number of observations.")
    risk_sim.add_argument("--p", type=positive_int, required=True, help="Number of predictors.")
    risk_sim.add_argument(
        "--estimator",
        type=estimator_spec,
        default=EstimatorSpec.unbiased(),
        help="Estimator for a risk curve (default: u).",
    )
    risk_sim.add_argument(
        "--baseline",
        type=estimator_spec,
        default=EstimatorSpec.unbiased(),
        help="Baseline of a paired comparison (default: u).",
    )
    risk_sim.add_argument(
        "--challenger",
        type=estimator_spec,
        default=None,
        help="Challenger; switches to a paired common-random-number comparison.",
    )
    risk_sim.add_argument(
        "--mixing",
        type=mixing_law,
        nargs="+",
        default=[MixingLaw.point_mass()],
        help="Scale-mixing laws: gauss, t:<nu>, two:<v1>,<v2>,<w> (default: gauss).",
    )
    risk_sim.add_argument(
        "--xi",
        type=xi_grid,
        default=DEFAULT_XI_GRID,
        help="Comma list of noncentralities (default: 0,1,4,16,64,256).",
    )
    risk_sim.add_argument(
        "--replicates",
        type=positive_int,
        default=DEFAULT_REPLICATES,
        help=f"Monte Carlo replicates per point (default: {DEFAULT_REPLICATES}).",
    )
    risk_sim.add_argument(
        "--sigma-sq",
        type=positive_float,
        default=1.0,
        help="True error variance (default: 1).",
    )
    risk_sim.add_argument(
        "--threshold",
        type=positive_float,
        default=VERDICT_STD_ERRS,
        help=f"Verdict threshold in standard errors (default: {VERDICT_STD_ERRS:g}).",
    )
    risk_sim.add_argument(
        "--certified",
        action="store_true",
        help="Require a monotone phi-form challenger before simulating.",
    )
    risk_sim.add_argument(
        "--exact",
        action="store_true",
        help="Add deterministic risk values computed by quadrature.",
    )

    verify = commands.add_parser(
        "verify",
        parents=[common],
        help="Run numerical self-checks and print a JSON report.",
    )
    verify.add_argument(
        "--level",
        choices=("quick", "full"),
        default="quick",
        help="quick: anchors, identities, normalizations; full adds oracle and dominance checks.",
    )
    verify.add_argument(
        "--report",
        default=None,
        help="Write the JSON report to this path (default: stdout).",
    )
    return parser


def _config_path(argv: list[str]) -> str | None:
    pre = argparse.ArgumentParser(add_help=False)
    pre.add_argument("--config", default=None)
    known, _ = pre.parse_known_args(argv)
    return known.config


def _apply_config(parser: UsageParser, argv: list[str], values: dict[str, str]) -> None:
    commands = next(
        action for action in parser._actions if isinstance(action, argparse._SubParsersAction)
    )
    command = next((arg for arg in argv if arg in commands.choices), None)
    if command is None:
        return
    subparser = commands.choices[command]
    actions: dict[str, argparse.Action] = {}
    for action in subparser._actions:
        actions[action.dest] = action
        for option in action.option_strings:
            actions[option.lstrip("-").replace("-", "_")] = action
    defaults: dict[str, object] = {}
    for key, raw in values.items():
        action = actions.get(key)
        if action is None or action.dest in {"help", "config"}:
            parser.error(f"unknown key '{key}' in config file for '{command}'")
        if action.nargs == 0:
            word = raw.lower()
            if word not in TRUE_WORDS | FALSE_WORDS:
                parser.error(f"config key '{key}' expects true or false, got '{raw}'")
            defaults[action.dest] = word in TRUE_WORDS
        elif action.nargs == "+":
            try:
                defaults[action.dest] = [action.type(part) if action.type else part for part in raw.split()]
            except argparse.ArgumentTypeError as exc:
                parser.error(f"config key '{key}': {exc}")
        else:
            # String defaults go through the action's type converter at parse time.
            defaults[action.dest] = raw
        if action.required:
            action.required = False
    subparser.set_defaults(**defaults)


def parse_args(argv: list[str] | None = None) -> argparse.Namespace:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    path = _config_path(argv)
    if path is not None:
        try:
            values = load_config_file(path)
        except OSError as exc:
            parser.error(f"cannot read config file {path}: {exc}")
        except ConfigFileError as exc:
            parser.error(str(exc))
        _apply_config(parser, argv, values)
    args = parser.parse_args(argv)
    args.argv = argv
    return args


def resolve_seed(seed: int | None) -> int:
    if seed is not None:
        return seed
    from_env = seed_from_env()
    if from_env is not None:
        return from_env
    return int(np.random.SeedSequence().entropy)


def run_metadata(args: argparse.Namespace, **extra) -> dict:
    metadata = {
        "version": __version__,
        "argv": args.argv,
        "command": args.command,
        "algorithms": ALGORITHMS,
        "block_size": BLOCK_SIZE,
        "created_at": datetime.now(timezone.utc).isoformat(timespec="seconds"),
    }
    metadata.update(extra)
    return metadata


def cmd_estimate(args: argparse.Namespace, app_logger: logging.Logger) -> int:
    data = read_regression_csv(args.data)
    stats = compute_stats(data)
    rows = []
    for spec in args.estimators:
        spec.validate(stats.n, stats.p)
        estimate = spec.estimate(stats)
        rows.append((spec.label, stats.n, stats.p, stats.rss, stats.r_squared, estimate.phi, estimate.value))
    app_logger.info("estimate data=%s n=%d p=%d estimators=%d", args.data, stats.n, stats.p, len(rows))
    if args.format == "json":
        write_json(
            args.output,
            {
                "n": stats.n,
                "p": stats.p,
                "rss": stats.rss,
                "total_ss": stats.total_ss,
                "r_squared": stats.r_squared,
                "estimates": [{"estimator": row[0], "phi": row[5], "delta": row[6]} for row in rows],
            },
        )
    else:
        write_csv(args.output, ("estimator", "n", "p", "rss", "r_squared", "phi", "delta"), rows)
    return EXIT_OK


def _assert_table(name: str, values: np.ndarray, lower: np.ndarray | None = None) -> None:
    drops = np.diff(values)
    if drops.size and float(drops.min()) < -PROPERTY_TOLERANCE:
        raise PropertyViolation(f"Column {name} is not nondecreasing (largest drop {-drops.min():.3g}).")
    if lower is not None:
        if float(np.max(lower - values)) > PROPERTY_TOLERANCE or float(np.max(values - 1.0)) > PROPERTY_TOLERANCE:
            raise PropertyViolation(f"Column {name} leaves the bracket phi_BZ <= phi <= 1.")


def cmd_phi_table(args: argparse.Namespace, app_logger: logging.Logger) -> int:
    n, p = args.n, args.p
    for a in args.orders:
        EstimatorSpec.generalized_bayes(a).validate(n, p)
    for spec in args.extra_estimators:
        spec.validate(n, p)
    grid = np.linspace(0.0, 1.0, args.grid_size)
    bz = np.asarray(phi_bz(grid, n, p))
    _assert_table("bz", bz)
    headers = ["r_squared", "bz"]
    columns = [grid, bz]
    for a in args.orders:
        values = np.asarray(phi_gb(a, grid, n, p))
        label = EstimatorSpec.generalized_bayes(a).label
        if a >= CHECKED_MIN_ORDER:
            _assert_table(label, values, bz)
        else:
            app_logger.info(
                "phi-table %s: orders below %g are not bracketed, column left unchecked",
                label,
                CHECKED_MIN_ORDER,
            )
        headers.append(label)
        columns.append(values)
    for spec in args.extra_estimators:
        values = np.asarray(spec.phi(grid, n, p), dtype=float)
        _assert_table(spec.label, values)
        headers.append(spec.label)
        columns.append(values)
    rows = [tuple(float(column[index]) for column in columns) for index in range(grid.size)]
    app_logger.info("phi-table n=%d p=%d columns=%s rows=%d", n, p, ",".join(headers[1:]), len(rows))
    if args.format == "json":
        write_json(args.output, {"n": n, "p": p, "columns": headers, "rows": rows})
    else:
        write_csv(args.output, headers, rows)
    return EXIT_OK


def _risk_curve(args: argparse.Namespace, seed: int, app_logger: logging.Logger) -> int:
    if len(args.mixing) != 1:
        raise ParameterError("A risk curve takes exactly one --mixing law; use --challenger for several.")
    mixing = args.mixing[0]
    spec = args.estimator
    spec.validate(args.n, args.p)
    curve = risk_grid(
        spec,
        mixing,
        args.n,
        args.p,
        args.xi,
        args.replicates,
        seed,
        sigma_sq=args.sigma_sq,
        workers=args.threads,
    )
    headers = list(CURVE_HEADERS)
    rows = curve.rows()
    if args.exact:
        if not spec.is_phi_form:
            raise ParameterError(f"--exact needs a phi-form estimator, got {spec.label}.")
        base = unbiased_risk(args.n, args.p, mixing)
        headers.append("exact_risk")
        rows = [row + (base - risk_difference_exact(spec, args.n, args.p, row[0], mixing),) for row in rows]
    metadata = run_metadata(
        args,
        seed=seed,
        estimator=spec.label,
        mixing=mixing.as_dict(),
        n=args.n,
        p=args.p,
        sigma_sq=args.sigma_sq,
        replicates=args.replicates,
        threshold=args.threshold,
    )
    if args.format == "json":
        write_json(args.output, {"metadata": metadata, "columns": headers, "rows": rows})
    else:
        write_csv(args.output, headers, rows, metadata)
    app_logger.info("risk-sim curve estimator=%s points=%d seed=%d", spec.label, len(rows), seed)
    return EXIT_OK


def _paired(args: argparse.Namespace, seed: int, app_logger: logging.Logger) -> int:
    configs = []
    laws = {}
    for index, (mixing, xi) in enumerate((law, xi) for law in args.mixing for xi in args.xi):
        laws[mixing.label] = mixing
        configs.append(
            SimConfig(args.n, args.p, xi, args.sigma_sq, mixing, derive_seed(seed, index), args.replicates)
        )
    report = compare_paired(
        args.baseline,
        args.challenger,
        configs,
        certified=args.certified,
        threshold=args.threshold,
        workers=args.threads,
    )
    if args.exact:
        exact = []
        for point in report.points:
            law = laws[point.mixing]
            exact.append(
                risk_difference_exact(args.challenger, args.n, args.p, point.xi, law)
                - risk_difference_exact(args.baseline, args.n, args.p, point.xi, law)
            )
        report = dataclasses.replace(report, exact=tuple(exact))

    headers = ["mixing", "xi", "delta", "std_err", "unpaired_std_err", "baseline_risk", "challenger_risk", "replicates"]
    rows = [
        (
            point.mixing,
            point.xi,
            point.delta,
            point.std_err,
            point.unpaired_std_err,
            point.baseline_risk,
            point.challenger_risk,
            point.replicates,
        )
        for point in report.points
    ]
    if report.exact:
        headers.append("exact_delta")
        rows = [row + (value,) for row, value in zip(rows, report.exact)]
    metadata = run_metadata(
        args,
        seed=seed,
        baseline=args.baseline.label,
        challenger=args.challenger.label,
        mixing=[law.as_dict() for law in args.mixing],
        n=args.n,
        p=args.p,
        sigma_sq=args.sigma_sq,
        replicates=args.replicates,
        threshold=args.threshold,
    )
    payload = report.as_dict()
    payload["metadata"] = metadata
    # Results go to stdout when --output is absent, unless the report already claims stdout.
    if args.output is not None or args.report is not None:
        if args.format == "json":
            write_json(args.output, payload)
        else:
            write_csv(args.output, headers, rows, metadata)
    write_json(args.report, payload)
    app_logger.info(
        "risk-sim paired baseline=%s challenger=%s verdict=%s seed=%d",
        args.baseline.label,
        args.challenger.label,
        report.verdict.value,
        seed,
    )
    return EXIT_OK


def cmd_risk_sim(args: argparse.Namespace, app_logger: logging.Logger) -> int:
    seed = resolve_seed(args.seed)
    app_logger.info("risk-sim seed=%d threads=%d", seed, args.threads)
    if args.challenger is None:
        return _risk_curve(args, seed, app_logger)
    return _paired(args, seed, app_logger)


def cmd_verify(args: argparse.Namespace, app_logger: logging.Logger) -> int:
    results = run_checks(args.level)
    failed = [result.name for result in results if not result.passed]
    payload = {
        "version": __version__,
        "level": args.level,
        "passed": not failed,
        "failed": failed,
        "checks": [result.as_dict() for result in results],
    }
    write_json(args.report if args.report is not None else args.output, payload)
    if failed:
        app_logger.error("verify %s failed %d checks: %s", args.level, len(failed), ", ".join(failed))
        return EXIT_VERIFY
    app_logger.info("verify %s passed %d checks", args.level, len(results))
    return EXIT_OK


COMMANDS = {
    "estimate": cmd_estimate,
    "phi-table": cmd_phi_table,
    "risk-sim": cmd_risk_sim,
    "verify": cmd_verify,
}


def main(argv: list[str] | None = None) -> int:
    args = parse_args(argv)
    app_logger, _ = setup_logging(args.log_dir, quiet=args.quiet)
    try:
        return COMMANDS[args.command](args, app_logger)
    except ConfigFileError as exc:
        app_logger.error("Configuration error: %s", exc)
        return EXIT_USAGE
    except ParameterError as exc:
        app_logger.error("Invalid parameters: %s", exc)
        return EXIT_USAGE
    except (DataError, OSError) as exc:
        app_logger.error("Data error: %s", exc)
        return EXIT_DATA
    except NumericalError as exc:
        app_logger.error("Numerical failure: %s", exc)
        return EXIT_PROPERTY
    except SteinvarError as exc:
        app_logger.error("Failed: %s", exc)
        return EXIT_USAGE
    except Exception:
        app_logger.exception("Unexpected failure in %s.", args.command)
        return EXIT_PROPERTY
