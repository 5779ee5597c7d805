"""Command-line entry point.

Subcommands: rearrange, functional, check, certify and experiment. Results
are JSON on stdout (or --out) with sorted keys; structured logs go to
stderr. Exit codes: 0 success or certified, 2 property or certificate
failure, 1 usage, input or numeric error.
"""

import argparse
import json
import logging
import math
import os
import sys
from collections.abc import Callable, Sequence
from datetime import datetime, timezone
from pathlib import Path
from typing import Any, Dict, List, NoReturn, Optional, Tuple

from aws_lambda_powertools import Logger
from aws_lambda_powertools.logging.utils import copy_config_to_registered_loggers
from data_processing.csv_writer import CsvWriteError, CsvWriter
from pydantic import BaseModel, ValidationError
from utils.error_handling import (
    EXIT_ERROR,
    EXIT_NOT_CERTIFIED,
    EXIT_OK,
    ErrorResponse,
    NumericError,
    ToolkitError,
    handle_domain_error,
    handle_input_error,
    handle_numeric_error,
    handle_processing_error,
    handle_validation_error,
)

from polya_szego.certify import (
    verify_calc,
    verify_calc_half,
    verify_region,
)
from polya_szego.conditions import (
    check_even,
    check_joint_convexity_K,
    check_power_convex,
    check_qq_condition,
    check_sufficient_thm4,
    kcal_negativity_probe,
    sharp_power_exponent,
)
from polya_szego.config import ToolkitConfig
from polya_szego.experiments import (
    ColumnExponents,
    Grid2D,
    find_j_counterexample,
    i_suite,
    preconv_probe,
    quasiconv_scan,
    script_A_profile,
    steiner_grid_demo,
    trials_frame,
)
from polya_szego.function_model import (
    ExponentSpec,
    PiecewiseLinear,
    parse_exponent,
)
from polya_szego.functionals import functional_pair, integrate_functional, layered_I
from polya_szego.rearrange import (
    level_frame,
    level_profile,
    sample_profile,
    symmetrize,
)
from polya_szego.regions import region_catalog

logger = Logger(
    service="polya-szego",
    level=os.environ.get("POWERTOOLS_LOG_LEVEL", "WARNING"),
    logger_handler=logging.StreamHandler(sys.stderr),
)

LIBRARY_LOGGERS = {"polya_szego", "data_processing", "models", "utils"}
META_FIELDS = frozenset({"wall_time", "timestamp", "generated_at"})
DEFAULT_EPS = (4e-3, 2e-3, 1e-3)

Result = Tuple[Any, int]


class InputDocumentError(Exception):
    """Exception raised when an input file cannot be read or parsed."""

    def __init__(self, source: str, cause: Exception):
        super().__init__(f"{source}: {cause}")
        self.source = source
        self.cause = cause


class InputValidationError(Exception):
    """Exception raised when an input document fails model validation."""

    def __init__(self, source: str, error: ValidationError):
        super().__init__(f"{source}: {error}")
        self.source = source
        self.error = error


class _Parser(argparse.ArgumentParser):
    """ArgumentParser that reports usage errors with exit code 1."""

    def error(self, message: str) -> NoReturn:
        self.print_usage(sys.stderr)
        self.exit(EXIT_ERROR, f"{self.prog}: error: {message}\n")


def _positive_float(text: str) -> float:
    value = float(text)
    if not value > 0.0 or math.isnan(value):
        raise argparse.ArgumentTypeError(f"expected a positive number, got {text}")
    return value


def _positive_int(text: str) -> int:
    value = int(text)
    if value <= 0:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {text}")
    return value


def _nonnegative_int(text: str) -> int:
    value = int(text)
    if value < 0:
        raise argparse.ArgumentTypeError(f"expected a nonnegative integer, got {text}")
    return value


def _point_count(text: str) -> int:
    value = int(text)
    if value < 2:
        raise argparse.ArgumentTypeError(f"need at least 2 points, got {text}")
    return value


def _q_max(text: str) -> float:
    value = float(text)
    if not value >= 0.0:
        raise argparse.ArgumentTypeError(f"expected q_max >= 0 or inf, got {text}")
    return value


class _KcalProbeAction(argparse.Action):
    """Stores (y, c) for --kcal-probe; c must be positive."""

    def __call__(self, parser, namespace, values, option_string=None) -> None:
        y, c = values
        if not c > 0.0 or math.isnan(y):
            parser.error(f"{option_string}: expected Y and C > 0, got {y} {c}")
        setattr(namespace, self.dest, (y, c))


def _read_document(path: str) -> Any:
    try:
        return json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as e:
        raise InputDocumentError(path, e) from e


def _load(path: str, validate: Callable[[Any], Any]) -> Any:
    document = _read_document(path)
    try:
        return validate(document)
    except ValidationError as e:
        raise InputValidationError(path, e) from e


def _load_exponent(path: str) -> ExponentSpec:
    return _load(path, parse_exponent)


def _dump(model: Optional[BaseModel]) -> Any:
    return None if model is None else model.model_dump(mode="json")


def _strip_meta(value: Any) -> Any:
    if isinstance(value, dict):
        return {k: _strip_meta(v) for k, v in value.items() if k not in META_FIELDS}
    if isinstance(value, list):
        return [_strip_meta(v) for v in value]
    return value


def _write_csv(frame, path: Optional[str]) -> None:
    if path is not None:
        CsvWriter(schema=frame.schema).write_dataframe(frame, path)


def run_rearrange(args: argparse.Namespace, config: ToolkitConfig) -> Result:
    u = _load(args.input, PiecewiseLinear.model_validate)
    if args.csv:
        _write_csv(sample_profile(u, args.samples), args.csv)
    if args.levels:
        _write_csv(level_frame(level_profile(u)), args.levels)
    return _dump(symmetrize(u)), EXIT_OK


def run_functional(args: argparse.Namespace, config: ToolkitConfig) -> Result:
    u = _load(args.input, PiecewiseLinear.model_validate)
    p = _load_exponent(args.p)
    quadrature = config.with_overrides(
        rel_tol=args.rel_tol, abs_tol=args.abs_tol
    ).quadrature
    if args.compare:
        original, symmetrized = functional_pair(u, p, args.which, quadrature)
        payload: Dict[str, Any] = _dump(original)
        payload["symmetrized"] = _dump(symmetrized)
        payload["gap"] = original.value - symmetrized.value
    else:
        payload = _dump(integrate_functional(u, p, args.which, quadrature))
    if args.layered:
        payload["layered_I"] = _dump(layered_I(u, p, quadrature))
    return payload, EXIT_OK


def run_check(args: argparse.Namespace, config: ToolkitConfig) -> Result:
    p = _load_exponent(args.p)
    payload: Dict[str, Any] = {}
    verdicts = []
    selected = any(
        [
            args.thm4,
            args.joint_k,
            args.kcal_probe is not None,
            args.qq,
            args.even,
            args.power_convex is not None,
            args.sharp_exponent is not None,
        ]
    )
    if args.thm4 or not selected:
        result = check_sufficient_thm4(p)
        payload["thm4"] = _dump(result)
        # Either sufficient condition is enough.
        verdicts.append(result.part1.passed or result.part2.passed)
    if args.even:
        verdict = check_even(p)
        payload["even"] = _dump(verdict)
        verdicts.append(verdict.passed)
    if args.power_convex is not None:
        verdict = check_power_convex(p, args.power_convex)
        payload["power_convex"] = _dump(verdict)
        verdicts.append(verdict.passed)
    if args.joint_k:
        verdict = check_joint_convexity_K(p, args.mesh_w, args.mesh_x)
        payload["joint_convexity_K"] = _dump(verdict)
        verdicts.append(verdict.passed)
    if args.qq:
        verdict = check_qq_condition(p, args.mesh_x)
        payload["qq_condition"] = _dump(verdict)
        verdicts.append(verdict.passed)
    if args.kcal_probe is not None:
        y, c = args.kcal_probe
        payload["kcal_negative_at_d"] = kcal_negativity_probe(p, y, c)
    if args.sharp_exponent is not None:
        payload["sharp_power_exponent"] = sharp_power_exponent(args.sharp_exponent)
    return payload, EXIT_OK if all(verdicts) else EXIT_NOT_CERTIFIED


def _certify_options(args: argparse.Namespace, config: ToolkitConfig) -> dict:
    return {
        "budget": args.budget or config.cell_budget,
        "threshold_scale": args.threshold_scale,
        "step_scale": args.step_scale,
        "threads": args.threads or config.threads,
        "use_monotone_factors": not args.no_factors,
    }


def run_certify(args: argparse.Namespace, config: ToolkitConfig) -> Result:
    options = _certify_options(args, config)
    if args.target == "calc":
        master = verify_calc(**options)
    elif args.target == "calc-half":
        master = verify_calc_half(**options)
    else:
        spec = region_catalog()[args.name].with_overrides(
            step1=args.step1, step2=args.step2, threshold=args.threshold
        )
        certificate = verify_region(spec, dump_path=args.dump, **options)
        return _dump(certificate), (
            EXIT_OK if certificate.passed else EXIT_NOT_CERTIFIED
        )
    return _dump(master), EXIT_OK if master.passed else EXIT_NOT_CERTIFIED


def run_experiment(args: argparse.Namespace, config: ToolkitConfig) -> Result:
    seed = getattr(args, "seed", None)
    seed = config.seed if seed is None else seed
    kind = args.kind
    if kind == "j-counterexample":
        found = find_j_counterexample(_load_exponent(args.p), cfg=config.quadrature)
        return {"counterexample": _dump(found)}, EXIT_OK
    if kind == "i-suite":
        suite = i_suite(
            _load_exponent(args.p),
            args.trials,
            seed,
            threads=args.threads or config.threads,
            plateaus=args.plateaus,
            cfg=config.quadrature,
        )
        _write_csv(trials_frame(suite.trials), args.csv)
        return _dump(suite), EXIT_OK if suite.all_passed else EXIT_NOT_CERTIFIED
    if kind == "preconv":
        probe = preconv_probe(
            _load_exponent(args.p),
            args.x1,
            args.x2,
            args.s,
            args.t,
            args.eps,
            config.quadrature,
        )
        passed = all(trial.passed for trial in probe.trials)
        return _dump(probe), EXIT_OK if passed else EXIT_NOT_CERTIFIED
    if kind == "quasiconv":
        violation = quasiconv_scan(_load_exponent(args.p), args.trials, seed)
        return {"violation": _dump(violation)}, EXIT_OK
    if kind == "steiner":
        p2d = _load(args.p2d, ColumnExponents.model_validate)
        grid = _load(args.grid, Grid2D.model_validate)
        return _dump(steiner_grid_demo(p2d, grid)), EXIT_OK
    q_values = _profile_grid(args.q_max, args.points)
    frame = script_A_profile(q_values)
    _write_csv(frame, args.csv)
    return {"profile": frame.to_dicts()}, EXIT_OK


def _profile_grid(q_max: float, points: int) -> List[float]:
    if math.isinf(q_max):
        # q in [0, 1] then q = 1/r for r in (0, 1].
        head = [i / (points - 1) for i in range(points)]
        tail = [(points - 1) / i for i in range(points - 2, 0, -1)]
        return head + tail
    return [q_max * i / (points - 1) for i in range(points)]


def _add_certify_options(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--budget", type=_positive_int, help="Cells per region")
    parser.add_argument("--threads", type=_positive_int, help="Worker threads")
    parser.add_argument(
        "--no-factors",
        action="store_true",
        help="Disable the monotone-factor tightening in the (w, q) chart",
    )
    parser.add_argument(
        "--threshold-scale",
        type=_positive_float,
        default=1.0,
        help="Multiply the A-bound thresholds",
    )
    parser.add_argument(
        "--step-scale",
        type=_positive_float,
        default=1.0,
        help="Multiply the initial mesh steps",
    )


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(
        prog="polya-szego",
        description="Rearrangement inequalities for variable-exponent functionals",
    )
    parser.add_argument("--out", help="Write the JSON result here instead of stdout")
    parser.add_argument(
        "--no-meta",
        action="store_true",
        help="Omit wall times and timestamps so output is reproducible",
    )
    parser.add_argument("--verbose", action="store_true", help="Log at INFO level")
    commands = parser.add_subparsers(dest="command", required=True)

    rearrange = commands.add_parser("rearrange", help="Symmetrize a function")
    rearrange.add_argument("--in", dest="input", required=True, help="u JSON")
    rearrange.add_argument("--csv", help="Write u and u* on a uniform grid as CSV")
    rearrange.add_argument(
        "--samples", type=_point_count, default=201, help="Grid points for --csv"
    )
    rearrange.add_argument("--levels", help="Write the distribution profile as CSV")
    rearrange.set_defaults(handler=run_rearrange)

    functional = commands.add_parser("functional", help="Evaluate J or I")
    functional.add_argument("--in", dest="input", required=True, help="u JSON")
    functional.add_argument("--p", required=True, help="Exponent JSON")
    functional.add_argument("--which", choices=["I", "J"], default="I")
    functional.add_argument("--rel-tol", type=_positive_float, help="Relative tol")
    functional.add_argument("--abs-tol", type=_positive_float, help="Absolute tol")
    functional.add_argument(
        "--compare", action="store_true", help="Add the value at u* and the gap"
    )
    functional.add_argument(
        "--layered", action="store_true", help="Add the level-band evaluation of I"
    )
    functional.set_defaults(handler=run_functional)

    check = commands.add_parser("check", help="Conditions on the exponent")
    check.add_argument("--p", required=True, help="Exponent JSON")
    check.add_argument("--thm4", action="store_true", help="Sufficient conditions")
    check.add_argument("--even", action="store_true", help="Evenness of p")
    check.add_argument(
        "--power-convex", type=float, metavar="M", help="Convexity of q^(1-M)"
    )
    check.add_argument("--joint-k", action="store_true", help="det(K'') scan")
    check.add_argument("--qq", action="store_true", help="Sharp qq'' condition")
    check.add_argument(
        "--kcal-probe",
        nargs=2,
        type=float,
        action=_KcalProbeAction,
        metavar=("Y", "C"),
        help="det(Kcal'') < 0 at height Y with C > 0",
    )
    check.add_argument("--mesh-w", type=_positive_int, default=64)
    check.add_argument("--mesh-x", type=_positive_int, default=201)
    check.add_argument("--sharp-exponent", type=_q_max, metavar="QMAX")
    check.set_defaults(handler=run_check)

    certify = commands.add_parser("certify", help="Certified bounds on A")
    targets = certify.add_subparsers(dest="target", required=True)
    for target in ("calc", "calc-half"):
        _add_certify_options(targets.add_parser(target))
    region = targets.add_parser("region")
    region.add_argument("--name", required=True, choices=sorted(region_catalog()))
    region.add_argument("--step1", type=_positive_float)
    region.add_argument("--step2", type=_positive_float)
    region.add_argument("--threshold", type=float)
    region.add_argument("--dump", help="Write every leaf cell as CSV")
    _add_certify_options(region)
    certify.set_defaults(handler=run_certify)

    experiment = commands.add_parser("experiment", help="Numerical experiments")
    kinds = experiment.add_subparsers(dest="kind", required=True)
    j_search = kinds.add_parser("j-counterexample")
    j_search.add_argument("--p", required=True)
    suite = kinds.add_parser("i-suite")
    suite.add_argument("--p", required=True)
    suite.add_argument("--trials", type=_positive_int, default=1000)
    suite.add_argument("--seed", type=_nonnegative_int)
    suite.add_argument("--threads", type=_positive_int)
    suite.add_argument("--plateaus", action="store_true")
    suite.add_argument("--csv", help="Write per-trial gaps as CSV")
    preconv = kinds.add_parser("preconv")
    preconv.add_argument("--p", required=True)
    preconv.add_argument("--x1", type=float, required=True)
    preconv.add_argument("--x2", type=float, required=True)
    preconv.add_argument("--s", type=_positive_float, required=True)
    preconv.add_argument("--t", type=_positive_float, required=True)
    preconv.add_argument(
        "--eps", type=_positive_float, nargs="+", default=list(DEFAULT_EPS)
    )
    quasiconv = kinds.add_parser("quasiconv")
    quasiconv.add_argument("--p", required=True)
    quasiconv.add_argument("--trials", type=_positive_int, default=10_000)
    quasiconv.add_argument("--seed", type=_nonnegative_int)
    steiner = kinds.add_parser("steiner")
    steiner.add_argument("--p2d", required=True, help="Column exponents JSON")
    steiner.add_argument("--grid", required=True, help="Grid2D JSON")
    profile = kinds.add_parser("script-a-profile")
    profile.add_argument("--q-max", type=_q_max, default=math.inf)
    profile.add_argument("--points", type=_point_count, default=101)
    profile.add_argument("--csv", help="Write the profile as CSV")
    experiment.set_defaults(handler=run_experiment)
    return parser


def _configure_logging(verbose: bool) -> None:
    if verbose:
        logger.setLevel("INFO")
    copy_config_to_registered_loggers(source_logger=logger, include=LIBRARY_LOGGERS)


def _emit(payload: Any, args: argparse.Namespace) -> None:
    if args.no_meta:
        payload = _strip_meta(payload)
    elif isinstance(payload, dict):
        payload = {**payload, "generated_at": datetime.now(timezone.utc).isoformat()}
    text = json.dumps(payload, sort_keys=True, indent=2) + "\n"
    if args.out:
        Path(args.out).write_text(text)
    else:
        sys.stdout.write(text)


def _error_payload(error: Exception, operation: str) -> ErrorResponse:
    if isinstance(error, InputValidationError):
        return handle_validation_error(error.error, error.source)
    if isinstance(error, ValidationError):
        return handle_validation_error(error, operation)
    if isinstance(error, InputDocumentError):
        return handle_input_error(error.cause, error.source)
    if isinstance(error, NumericError):
        return handle_numeric_error(error, operation)
    if isinstance(error, ToolkitError):
        return handle_domain_error(error, operation)
    return handle_processing_error(error, operation)


def main(argv: Optional[Sequence[str]] = None) -> int:
    """Run one subcommand and return its exit code."""
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return int(e.code or 0)
    _configure_logging(args.verbose)
    parts = (args.command, getattr(args, "target", None), getattr(args, "kind", None))
    operation = " ".join(part for part in parts if part)

    try:
        config = ToolkitConfig.from_env()
        payload, code = args.handler(args, config)
    except (
        InputValidationError,
        InputDocumentError,
        ValidationError,
        ToolkitError,
        CsvWriteError,
    ) as e:
        response = _error_payload(e, operation)
        _emit(response.model_dump(mode="json"), args)
        return response.exit_code
    except Exception as e:
        response = handle_processing_error(e, operation)
        _emit(response.model_dump(mode="json"), args)
        return response.exit_code

    logger.info("Command complete", extra={"command": operation, "exit_code": code})
    _emit(payload, args)
    return code


if __name__ == "__main__":
    sys.exit(main())
