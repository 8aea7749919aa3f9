"""Command line interface for splitstream."""

from __future__ import annotations

import argparse
import logging
import math
import os
import sys
from pathlib import Path
from typing import Any, Dict, Iterable, List, Optional, Sequence

import numpy as np

from .analytic import (
    asymptotic_slope,
    assemble_matrix,
    det_M,
    det_scan,
    find_lambda_c,
    fluctuation_F,
    mean_size_series,
    solve_constants,
)
from .arprocess import laplace_x_inf, laplace_x_inf_binary_closed, laplace_x_inf_symmetric
from .chunks import chunk_rng
from .errors import ConfigError, InvalidLaw, NoSignChange, NotApplicable, NotArithmetic, SingularNearLambdaC
from .models import ArrivalLaw, BranchingLaw, SeriesParams, SplittingMeasure
from .schemas import (
    AtomPayload,
    ExperimentConfig,
    LambdaCOutput,
    MeasureOutput,
    SeriesParamsPayload,
    SolveOutput,
)
from .simulation import (
    DEFAULT_NODE_BUDGET,
    estimate_hitting_time,
    estimate_mean_size,
    stability_probe,
)
from .splitting import describe_measure, validate_assumptions
from .storage import OutputWriter, load_config, load_measure_or_law, make_provenance
from .tracker import run_validate

logger = logging.getLogger(__name__)

SEED_ENV = "SPLITSTREAM_SEED"
LAWS_DIR = Path(__file__).resolve().parent / "data" / "laws"

EXIT_OK = 0
EXIT_FAILED = 1
EXIT_USAGE = 2


def _configure_logging(verbose: int, quiet: bool) -> None:
    if quiet:
        level = logging.WARNING
    elif verbose >= 2:
        level = logging.DEBUG
    elif verbose == 1:
        level = logging.INFO
    else:
        level = logging.WARNING
    logging.basicConfig(
        level=level,
        stream=sys.stderr,
        format="%(levelname)s %(name)s: %(message)s",
        force=True,
    )
    logging.captureWarnings(True)


def resolve_law_path(name: str | Path) -> Path:
    """A file path, or the name of a shipped law such as ``symmetric_binary``."""

    path = Path(name)
    if path.exists():
        return path
    shipped = LAWS_DIR / f"{name}.json"
    if shipped.exists():
        return shipped
    raise ConfigError(f"no law file {name!r} and no shipped law of that name")


def _float_list(text: str) -> List[float]:
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from exc


def _int_list(text: str) -> List[int]:
    try:
        return [int(v) for v in text.split(",") if v.strip()]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from exc


def _count(text: str) -> int:
    """A positive whole number, also written like ``1e6``."""

    try:
        return _positive(int(text), text)
    except ValueError:
        pass
    try:
        value = float(text)
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"expected a count, got {text!r}") from exc
    if not value.is_integer():
        raise argparse.ArgumentTypeError(f"expected a whole count, got {text!r}")
    return _positive(int(value), text)


def _positive(value: int, text: str) -> int:
    if value < 1:
        raise argparse.ArgumentTypeError(f"expected a positive count, got {text!r}")
    return value


def _grid(text: str) -> List[float]:
    """``lo:hi:step`` as the points lo, lo + step, ... up to hi inclusive."""

    parts = text.split(":")
    try:
        lo, hi, step = (float(v) for v in parts)
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"expected LO:HI:STEP, got {text!r}") from exc
    if step <= 0 or hi < lo:
        raise argparse.ArgumentTypeError(f"expected LO <= HI and STEP > 0, got {text!r}")
    count = math.floor((hi - lo) / step + 1e-9) + 1
    return [round(lo + k * step, 12) for k in range(count)]


class _BracketAction(argparse.Action):
    """Accepts ``LO:HI`` as one token or ``LO HI`` as two."""

    def __call__(self, parser, namespace, values, option_string=None):
        tokens = values[0].split(":") if len(values) == 1 else list(values)
        try:
            lo, hi = (float(v) for v in tokens)
        except ValueError:
            parser.error(f"{option_string} expects LO:HI or LO HI, got {' '.join(values)!r}")
        setattr(namespace, self.dest, [lo, hi])


class CLI:
    def __init__(self, stdout=None) -> None:
        self.stdout = stdout
        self.config: Optional[ExperimentConfig] = None

    # --- Parser ----------------------------------------------------------
    def build_parser(self) -> argparse.ArgumentParser:
        common = argparse.ArgumentParser(add_help=False)
        common.add_argument("--seed", type=int, help=f"Random seed (default: config, then ${SEED_ENV}, then 0)")
        common.add_argument("--workers", type=int, help="Worker threads; results do not depend on it")
        common.add_argument("--out", type=Path, help="Output file or directory (default: stdout)")
        common.add_argument("--config", type=Path, help="Experiment config (JSON)")
        common.add_argument("-v", "--verbose", action="count", default=0, help="More logging (repeatable)")
        common.add_argument("--quiet", action="store_true", help="Only warnings and errors")

        law = argparse.ArgumentParser(add_help=False)
        law.add_argument(
            "--law", "--measure", dest="law",
            help="Branching law or splitting measure JSON, or a shipped law name",
        )

        system = argparse.ArgumentParser(add_help=False, parents=[law])
        system.add_argument("--d", type=int, help="Threshold D: groups of size >= D split")
        system.add_argument("--arrivals", help="none | poisson:<lam> | deterministic:<a> | pmf:<v>=<p>,...")

        series = argparse.ArgumentParser(add_help=False)
        series.add_argument(
            "--lam", "--lambda", dest="lam", type=float, help="Poisson arrival rate (default: from --arrivals)"
        )
        series.add_argument("--k-max", "--kmax", dest="k_max", type=int, help="Series truncation depth")
        series.add_argument("--mc-paths", "--paths", dest="mc_paths", type=_count, help="Monte Carlo weight paths")
        series.add_argument("--xinf-tol", type=float, help="Truncation tolerance for X_inf")
        series.add_argument("--chunk-size", type=_count, help="Paths per seeded chunk")
        series.add_argument(
            "--no-regularize", dest="regularize", action="store_false", default=None,
            help="Use the raw per-depth terms",
        )

        parser = argparse.ArgumentParser(
            prog="splitstream",
            description="Splitting-tree collision resolution with immigration: simulation and analysis",
        )
        sub = parser.add_subparsers(dest="command", required=True)

        sub.add_parser("derive-measure", parents=[common, law], help="Splitting measure of a branching law")
        sub.add_parser("check", parents=[common, law], help="Check the measure assumptions")

        simulate = sub.add_parser("simulate", parents=[common, system], help="Monte Carlo mean tree size")
        simulate.add_argument("--n", type=_int_list, default=[2], help="Initial group sizes, comma separated")
        simulate.add_argument("--trials", type=_count, default=10_000)
        simulate.add_argument(
            "--node-budget", "--budget", dest="node_budget", type=_count, default=DEFAULT_NODE_BUDGET,
            help="Nodes per tree (slots per chain) before a run counts as censored",
        )
        simulate.add_argument("--hitting", action="store_true", help="Run the stack chain instead of trees")

        probe = sub.add_parser(
            "probe", parents=[common, system], help="Classify stability from backlog drift",
            description=(
                "A line is fitted to the mean backlog over the second half of the horizon. "
                "The run is stable when the slope +- 2 standard errors lies wholly below "
                "--min-drift, unstable when wholly above it, and inconclusive otherwise. "
                "A drift floor stands in for the plain sign of the drift, which is never "
                "exactly zero in a finite run."
            ),
        )
        probe.add_argument("--horizon", type=_count, default=100_000)
        probe.add_argument("--reps", type=_count, default=20)
        probe.add_argument(
            "--min-drift", type=float, default=2e-3,
            help="Drift floor in items per slot separating stable from unstable (default: 2e-3)",
        )
        probe.add_argument("--trajectory", action="store_true", help="Emit the mean backlog path instead")
        probe.add_argument(
            "--lambda-grid", type=_grid, metavar="LO:HI:STEP",
            help="Sweep Poisson arrival rates and emit one row per rate",
        )

        xinf = sub.add_parser("xinf", parents=[common, law], help="Laplace transform of X_inf")
        xinf.add_argument("--s", type=_float_list, default=[0.05, 0.1, 0.5])
        xinf.add_argument("--samples", type=_count, default=1_000_000)
        xinf.add_argument("--xinf-tol", type=float, default=1e-10)

        sub.add_parser("solve", parents=[common, system, series], help="Boundary matrix and constants C")

        lambda_c = sub.add_parser("lambda-c", parents=[common, system, series], help="Stability threshold")
        lambda_c.add_argument(
            "--bracket", nargs="+", action=_BracketAction, default=[0.05, 0.5], metavar="LO:HI",
            help="Search interval as LO:HI (or LO HI)",
        )
        lambda_c.add_argument("--tol", type=float, default=1e-3)
        lambda_c.add_argument("--seeds", type=_count, default=3)
        lambda_c.add_argument("--scan", type=int, metavar="POINTS", help="Emit det M on a grid instead")

        mean_size = sub.add_parser("mean-size", parents=[common, system, series], help="Exact series E(R_n)")
        mean_size.add_argument("--n", "--n-grid", dest="n", type=_int_list, default=[1, 2, 4, 8, 16, 32, 64])

        asym = sub.add_parser("asymptotics", parents=[common, system, series], help="Limit of E(R_n)/n")
        asym.add_argument("--variant", choices=("corrected", "as_printed"), default="corrected")
        asym.add_argument("--n", type=_int_list, default=[2**k for k in range(4, 17)])
        asym.add_argument(
            "--x-grid", type=_grid, metavar="LO:HI:STEP",
            help="Emit the fluctuation curves F_i(x) of a lattice measure instead",
        )

        sub.add_parser("validate", parents=[common, system, series], help="Run the cross-validation suite")
        return parser

    # --- Dispatch --------------------------------------------------------
    def run(self, argv: Iterable[str] | None = None) -> int:
        parser = self.build_parser()
        args = parser.parse_args(list(argv) if argv is not None else None)
        _configure_logging(args.verbose, args.quiet)
        handlers = {
            "derive-measure": self._handle_derive_measure,
            "check": self._handle_check,
            "simulate": self._handle_simulate,
            "probe": self._handle_probe,
            "xinf": self._handle_xinf,
            "solve": self._handle_solve,
            "lambda-c": self._handle_lambda_c,
            "mean-size": self._handle_mean_size,
            "asymptotics": self._handle_asymptotics,
            "validate": self._handle_validate,
        }
        try:
            self.config = load_config(args.config) if args.config else None
            return handlers[args.command](args)
        except (ConfigError, InvalidLaw, NotApplicable, NoSignChange, SingularNearLambdaC) as exc:
            logger.debug("command failed", exc_info=True)
            print(f"splitstream: error: {exc}", file=sys.stderr)
            return EXIT_USAGE
        except ValueError as exc:
            print(f"splitstream: error: {exc}", file=sys.stderr)
            return EXIT_USAGE

    # --- Resolution: flags > config > environment > defaults ---------------
    def _seed(self, args: argparse.Namespace) -> int:
        if args.seed is not None:
            seed = args.seed
        elif self.config is not None and self.config.seed is not None:
            seed = self.config.seed
        elif os.environ.get(SEED_ENV):
            try:
                seed = int(os.environ[SEED_ENV])
            except ValueError as exc:
                raise ConfigError(f"{SEED_ENV} must be an integer") from exc
        else:
            seed = 0
        if seed < 0:
            raise ConfigError("seeds must be nonnegative")
        return seed

    def _workers(self, args: argparse.Namespace) -> int:
        if args.workers is not None:
            return max(1, args.workers)
        if self.config is not None and self.config.workers is not None:
            return self.config.workers
        return os.cpu_count() or 1

    def _law_path(self, args: argparse.Namespace) -> Path:
        if getattr(args, "law", None):
            return resolve_law_path(args.law)
        if self.config is not None:
            return self.config.law
        raise ConfigError("no law given; pass --law or --config")

    def _measure(self, args: argparse.Namespace) -> tuple[SplittingMeasure, BranchingLaw | None]:
        return load_measure_or_law(self._law_path(args))

    def _law(self, args: argparse.Namespace) -> BranchingLaw:
        _, law = self._measure(args)
        if law is None:
            raise ConfigError("simulation needs a branching law, not only a splitting measure")
        return law

    def _d(self, args: argparse.Namespace) -> int:
        if args.d is not None:
            d = args.d
        elif self.config is not None:
            d = self.config.d
        else:
            d = 2
        if d < 1:
            raise ConfigError("d must be at least 1")
        return d

    def _arrivals(self, args: argparse.Namespace) -> ArrivalLaw:
        if getattr(args, "lam", None) is not None:
            return ArrivalLaw.poisson(args.lam)
        if args.arrivals is not None:
            return ArrivalLaw.parse(args.arrivals)
        if self.config is not None:
            return self.config.arrival_law()
        return ArrivalLaw.none()

    def _lam(self, args: argparse.Namespace) -> float:
        arrivals = self._arrivals(args)
        if arrivals.kind not in ("none", "poisson"):
            raise ConfigError("the analytic commands need Poisson arrivals")
        return arrivals.lam

    def _series(self, args: argparse.Namespace, measure: SplittingMeasure) -> SeriesParams:
        payload = self.config.series if self.config is not None else SeriesParamsPayload()
        overrides: Dict[str, Any] = {
            "k_max": args.k_max,
            "mc_paths": args.mc_paths,
            "xinf_tol": args.xinf_tol,
            "chunk_size": args.chunk_size,
            "regularize": args.regularize,
        }
        payload = payload.model_copy(update={k: v for k, v in overrides.items() if v is not None})
        return payload.to_domain(measure, seed=self._seed(args), workers=self._workers(args))

    def _writer(self, args: argparse.Namespace, settings: Dict[str, Any]) -> OutputWriter:
        seed = self._seed(args)
        effective = {"command": args.command, "seed": seed, **settings}
        provenance = make_provenance(args.command, seed, effective)
        target = args.out
        if target is None and self.config is not None and args.command == "validate":
            target = self.config.outputs
        return OutputWriter(provenance, target=target, stream=self.stdout)

    def _print(self, text: str) -> None:
        print(text, file=self.stdout or sys.stdout)

    # --- Handlers --------------------------------------------------------
    def _handle_derive_measure(self, args: argparse.Namespace) -> int:
        measure, _ = self._measure(args)
        writer = self._writer(args, {"measure": measure.to_dict()})
        moments = describe_measure(measure)
        if "json" in writer.formats:
            output = MeasureOutput(
                provenance=writer.provenance,
                atoms=[AtomPayload(w=w, q=q) for w, q in measure.atoms],
                delta=measure.delta,
                **moments,
            )
            writer.write_json("measure.json", output)
        if "csv" in writer.formats:
            # moments repeat on every atom row
            writer.write_csv(
                "measure.csv",
                ["w", "q", "delta", *moments],
                [(w, q, measure.delta, *moments.values()) for w, q in measure.atoms],
            )
        return EXIT_OK

    def _handle_check(self, args: argparse.Namespace) -> int:
        measure, _ = self._measure(args)
        report = validate_assumptions(measure)
        moments = describe_measure(measure)
        span = "absent" if report.span is None else repr(report.span)
        rows = [
            ("delta", repr(report.delta)),
            ("span", span),
            ("h2", repr(report.h2_value)),
            ("mean_abs_log_w", repr(moments["mean_abs_log_w"])),
            ("mean_G", repr(moments["mean_G"])),
            ("mean_w", repr(moments["mean_w"])),
        ]
        if args.out is not None:
            writer = self._writer(args, {"measure": measure.to_dict()})
            writer.write_csv("check.csv", ["quantity", "value"], rows)
        else:
            for name, value in rows:
                self._print(f"{name}={value}")
        return EXIT_OK

    def _handle_simulate(self, args: argparse.Namespace) -> int:
        law = self._law(args)
        d = self._d(args)
        arrivals = self._arrivals(args)
        seed, workers = self._seed(args), self._workers(args)
        settings = {
            "law": law.to_dict(), "d": d, "arrivals": arrivals.describe(), "n": args.n,
            "trials": args.trials, "node_budget": args.node_budget, "hitting": args.hitting,
        }
        writer = self._writer(args, settings)
        rows = []
        for n in args.n:
            if args.hitting:
                estimate = estimate_hitting_time(
                    n, d, law, arrivals, args.trials, horizon=args.node_budget, rng=seed, workers=workers
                )
            else:
                estimate = estimate_mean_size(
                    n, d, arrivals, law, args.trials, node_budget=args.node_budget, rng=seed, workers=workers
                )
            rows.append(
                (n, estimate.mean, estimate.std_error, estimate.variance, estimate.trials,
                 estimate.censored, estimate.trusted)
            )
        writer.write_csv(
            "simulate.csv",
            ["n", "mean", "std_error", "variance", "trials", "censored", "trusted"],
            rows,
        )
        return EXIT_OK

    def _handle_probe(self, args: argparse.Namespace) -> int:
        law = self._law(args)
        d = self._d(args)
        if args.lambda_grid is not None:
            return self._probe_sweep(args, law, d)
        arrivals = self._arrivals(args)
        settings = {
            "law": law.to_dict(), "d": d, "arrivals": arrivals.describe(), "horizon": args.horizon,
            "reps": args.reps, "min_drift": args.min_drift, "trajectory": args.trajectory,
        }
        writer = self._writer(args, settings)
        report = stability_probe(
            d, law, arrivals, args.horizon, args.reps, rng=self._seed(args),
            min_drift=args.min_drift, workers=self._workers(args),
        )
        if args.trajectory:
            writer.write_csv(
                "probe_trajectory.csv", ["slot", "mean_backlog"],
                zip(report.checkpoints, report.mean_backlog),
            )
        else:
            writer.write_csv(
                "probe.csv",
                ["arrivals", "slope", "slope_std_error", "min_drift", "classification"],
                [(report.arrivals, report.slope, report.slope_std_error, report.min_drift,
                  report.classification)],
            )
        return EXIT_OK

    def _probe_sweep(self, args: argparse.Namespace, law: BranchingLaw, d: int) -> int:
        if args.trajectory:
            raise ConfigError("--trajectory and --lambda-grid cannot be combined")
        settings = {
            "law": law.to_dict(), "d": d, "lambda_grid": args.lambda_grid, "horizon": args.horizon,
            "reps": args.reps, "min_drift": args.min_drift,
        }
        writer = self._writer(args, settings)
        seed, workers = self._seed(args), self._workers(args)
        rows = []
        for lam in args.lambda_grid:
            # common random numbers across rates
            report = stability_probe(
                d, law, ArrivalLaw.poisson(lam), args.horizon, args.reps, rng=seed,
                min_drift=args.min_drift, workers=workers,
            )
            rows.append((lam, report.slope, report.slope_std_error, report.classification))
        writer.write_csv("probe_sweep.csv", ["lambda", "drift", "drift_std_error", "classification"], rows)
        return EXIT_OK

    def _handle_xinf(self, args: argparse.Namespace) -> int:
        measure, law = self._measure(args)
        settings = {"measure": measure.to_dict(), "s": args.s, "samples": args.samples, "xinf_tol": args.xinf_tol}
        writer = self._writer(args, settings)
        seed = self._seed(args)
        binary = _binary_weight(law)
        rows = []
        for index, s in enumerate(args.s):
            estimate, error = laplace_x_inf(measure, s, args.samples, args.xinf_tol, chunk_rng(seed, index))
            closed: Optional[float] = None
            if binary is not None and s > 0:
                closed = laplace_x_inf_symmetric(s) if binary == 0.5 else laplace_x_inf_binary_closed(binary, s)
            rows.append((s, estimate, error, closed))
        writer.write_csv("xinf.csv", ["s", "laplace", "std_error", "closed_form"], rows)
        return EXIT_OK

    def _handle_solve(self, args: argparse.Namespace) -> int:
        measure, _ = self._measure(args)
        d, lam = self._d(args), self._lam(args)
        params = self._series(args, measure)
        writer = self._writer(args, {"measure": measure.to_dict(), "d": d, "lam": lam, "series": _params_dict(params)})
        matrix = assemble_matrix(measure, lam, d, params)
        constants = solve_constants(matrix)
        output = SolveOutput(
            provenance=writer.provenance,
            lam=lam,
            d=d,
            regularize=params.regularize,
            matrix=matrix.entries.tolist(),
            matrix_std_errors=matrix.std_errors.tolist(),
            det=det_M(matrix),
            det_std_error=matrix.det_std_error,
            C=list(constants.c),
            C_inf=constants.c_inf,
            std_errors=list(constants.std_errors),
            residuals=constants.residuals,
        )
        writer.write_json("solve.json", output)
        return EXIT_OK

    def _handle_lambda_c(self, args: argparse.Namespace) -> int:
        measure, _ = self._measure(args)
        d = self._d(args)
        params = self._series(args, measure)
        lo, hi = args.bracket
        settings = {
            "measure": measure.to_dict(), "d": d, "bracket": [lo, hi], "tol": args.tol,
            "seeds": args.seeds, "scan": args.scan, "series": _params_dict(params),
        }
        writer = self._writer(args, settings)
        if args.scan is not None:
            if args.scan < 2:
                raise ConfigError("--scan needs at least 2 points")
            rows = det_scan(measure, d, np.linspace(lo, hi, args.scan), params)
            writer.write_csv("det_scan.csv", ["lam", "det", "det_std_error"], rows)
            return EXIT_OK
        result = find_lambda_c(measure, d, params, bracket=(lo, hi), tol=args.tol, seeds=args.seeds)
        output = LambdaCOutput(
            provenance=writer.provenance,
            d=d,
            lambda_c=result.value,
            uncertainty=result.uncertainty,
            jitter=result.jitter,
            roots=list(result.roots),
            bracket=list(result.bracket),
        )
        writer.write_json("lambda_c.json", output)
        return EXIT_OK

    def _constants(self, args: argparse.Namespace):
        measure, _ = self._measure(args)
        d, lam = self._d(args), self._lam(args)
        params = self._series(args, measure)
        constants = solve_constants(assemble_matrix(measure, lam, d, params))
        return measure, d, lam, params, constants

    def _handle_mean_size(self, args: argparse.Namespace) -> int:
        measure, d, lam, params, constants = self._constants(args)
        settings = {"measure": measure.to_dict(), "d": d, "lam": lam, "n": args.n, "series": _params_dict(params)}
        writer = self._writer(args, settings)
        rows = []
        for n in args.n:
            estimate = mean_size_series(measure, lam, d, constants, n, params)
            rows.append(
                (n, estimate.value, estimate.std_error, estimate.tail_bound, estimate.trusted,
                 estimate.leading_term)
            )
        writer.write_csv(
            "mean_size.csv", ["n", "mean_size", "std_error", "tail_bound", "trusted", "leading_term"], rows
        )
        return EXIT_OK

    def _handle_asymptotics(self, args: argparse.Namespace) -> int:
        measure, d, lam, params, constants = self._constants(args)
        settings = {
            "measure": measure.to_dict(), "d": d, "lam": lam, "n": args.n, "variant": args.variant,
            "x_grid": args.x_grid, "series": _params_dict(params),
        }
        writer = self._writer(args, settings)
        slope = asymptotic_slope(measure, lam, d, constants, args.variant, params)
        if args.x_grid is not None:
            if not slope.arithmetic:
                raise NotArithmetic("-log W is nonarithmetic, so the limit is flat and has no F-curve")
            rows = [
                (x, i, fluctuation_F(measure, i, x, args.variant), slope.at(x))
                for x in args.x_grid
                for i in range(1, d)
            ]
            writer.write_csv("fluctuation.csv", ["x", "i", "F", "slope"], rows)
            return EXIT_OK
        rows = [(n, slope(n), slope.mean, args.variant, slope.arithmetic) for n in args.n]
        writer.write_csv("asymptotics.csv", ["n", "slope", "period_mean", "variant", "arithmetic"], rows)
        return EXIT_OK

    def _handle_validate(self, args: argparse.Namespace) -> int:
        config = self._validation_config(args)
        seed, workers = self._seed(args), self._workers(args)
        writer = self._writer(args, config.model_dump(mode="json", exclude={"outputs", "workers"}))
        report = run_validate(config, seed=seed, workers=workers, provenance=writer.provenance)
        header = ["criterion", "status", "measured", "expected", "tolerance", "seed", "note"]
        rows = [
            (r.criterion, r.status, r.measured, r.expected, r.tolerance, r.seed, r.note) for r in report.rows
        ]
        if "json" in writer.formats:
            writer.write_json("validation.json", report)
        if "csv" in writer.formats:
            writer.write_csv("validation.csv", header, rows)
        if report.failed:
            failed = [r.criterion for r in report.rows if r.status == "fail"]
            logger.warning("%d criteria failed: %s", len(failed), ", ".join(failed))
            return EXIT_FAILED
        return EXIT_OK

    def _validation_config(self, args: argparse.Namespace) -> ExperimentConfig:
        base = self.config
        if base is None:
            base = ExperimentConfig(law=self._law_path(args))
        updates: Dict[str, Any] = {}
        if args.law:
            updates["law"] = resolve_law_path(args.law)
        if args.d is not None:
            updates["d"] = args.d
        if args.lam is not None:
            updates["arrivals"] = ArrivalLaw.poisson(args.lam).describe()
        elif args.arrivals is not None:
            updates["arrivals"] = ArrivalLaw.parse(args.arrivals).describe()
        series = base.series.model_copy(
            update={
                k: v
                for k, v in {
                    "k_max": args.k_max,
                    "mc_paths": args.mc_paths,
                    "xinf_tol": args.xinf_tol,
                    "chunk_size": args.chunk_size,
                    "regularize": args.regularize,
                }.items()
                if v is not None
            }
        )
        updates["series"] = series
        config = base.model_copy(update=updates)
        if config.d < 1:
            raise ConfigError("d must be at least 1")
        return config


def _binary_weight(law: BranchingLaw | None) -> Optional[float]:
    if law is None or len(law.branches) != 1:
        return None
    branch = law.branches[0]
    if branch.g != 2 or len(branch.vectors) != 1:
        return None
    return branch.vectors[0][0]


def _params_dict(params: SeriesParams) -> Dict[str, Any]:
    # workers never change results, so they stay out of the digest
    return {
        "k_max": params.k_max,
        "mc_paths": params.mc_paths,
        "xinf_tol": params.xinf_tol,
        "regularize": params.regularize,
        "chunk_size": params.chunk_size,
    }


def run(argv: Sequence[str] | None = None) -> int:
    return CLI().run(argv)


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
