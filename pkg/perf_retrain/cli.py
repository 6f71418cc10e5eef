"""Command-line front end.

Subcommands ``solve``, ``run``, ``experiment``, ``sweep`` and ``check``
(``experiment all``). Exit status: 0 success or pass, 1 usage or config
error, 2 regime violation, 3 failed check.
"""

from __future__ import annotations

import argparse
import itertools
import logging
from pathlib import Path
from typing import Any, Sequence

import numpy as np

from . import dynamics, log, oracle
from ._version import __version__
from .config import (
    CliConfig,
    ExperimentBlock,
    LossBlock,
    OutputBlock,
    RunBlock,
    ShiftBlock,
    SweepBlock,
)
from .errors import ConfigError, NonContractiveError, RetrainError, WrongRegimeError
from .experiments import ExperimentName, TheoremCheckResult, Verdict, run_all, run_experiment
from .output import columns_of, csv_text, emit, json_text
from .shift_model import ScalarShiftModel, as_linear

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_REGIME = 2
EXIT_CHECK_FAILED = 3


class _Parser(argparse.ArgumentParser):
    def error(self, message: str):
        raise ConfigError(message)


def _common_flags() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    common.add_argument("--config", help="JSON config file; flags override its values")
    common.add_argument("--seed", type=int, help="master seed, an unsigned 64-bit integer")
    common.add_argument("--out", help="output file (default: standard output)")
    common.add_argument("--format", choices=("csv", "json"), help="output format")
    common.add_argument("--reps", type=int, help="Monte Carlo replications R")
    common.add_argument("--threads", type=int, help="worker threads (speed only, never results)")
    common.add_argument("-v", "--verbosity", type=int, help="0 fatal .. 5 trace (default 3)")

    model = common.add_argument_group("shift model")
    model.add_argument("--sigma0", type=float)
    model.add_argument("--sigma", type=float)
    model.add_argument("--mu0", type=float)
    model.add_argument("--mu", type=float)
    model.add_argument("--base", choices=("gaussian", "rademacher"))

    run = common.add_argument_group("retraining")
    run.add_argument("--algo", choices=("rrm", "rerm", "reg-rrm", "reg-rerm"))
    run.add_argument("--reg", choices=("proximal", "ridge"))
    run.add_argument("--lambda", dest="lam", help="weight, 'star', 't' or 't+1'")
    run.add_argument("-T", dest="horizon", type=int, help="horizon")
    run.add_argument("--N", dest="samples", type=float, help="samples per step")
    run.add_argument("--sample-schedule", choices=("constant", "log", "inverse-t"))
    run.add_argument("--mode", choices=("exact", "integer", "effective"))
    run.add_argument("--theta0", type=float, nargs="+")
    run.add_argument("--loss", choices=("squared", "mahalanobis"))
    run.add_argument("--a", type=float, help="loss scale, A = a I")

    sweep = common.add_argument_group("sweep")
    sweep.add_argument("--grid", action="append", metavar="KEY=V1,V2,...")
    sweep.add_argument("--outputs", help="comma-separated sweep columns")
    return common


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="perf-retrain", description="Retraining under performative distribution shift.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    commands = parser.add_subparsers(dest="command", required=True)
    common = _common_flags()
    commands.add_parser("solve", parents=[common], help="closed-form solution concepts")
    commands.add_parser("run", parents=[common], help="one retraining trajectory")
    experiment = commands.add_parser("experiment", parents=[common], help="one check, or 'all'")
    experiment.add_argument(
        "name", nargs="?", help=f"{', '.join(n.value for n in ExperimentName)} or all (default: experiment.name)"
    )
    commands.add_parser("sweep", parents=[common], help="closed forms over a parameter grid")
    commands.add_parser("check", parents=[common], help="the default suite of checks")
    return parser


def _lambda_flag(value: str | None):
    if value is None:
        return None
    try:
        return float(value)
    except ValueError:
        return value


def _grid_flags(entries: Sequence[str] | None) -> dict[str, list[float]] | None:
    if not entries:
        return None
    grid: dict[str, list[float]] = {}
    for entry in entries:
        key, sep, values = entry.partition("=")
        if not sep or not key:
            msg = f"--grid expects KEY=V1,V2,..., got '{entry}'"
            raise ConfigError(msg)
        try:
            grid[key.strip()] = [float(v) for v in values.split(",") if v.strip()]
        except ValueError as exc:
            msg = f"--grid values must be numbers, got '{entry}'"
            raise ConfigError(msg) from exc
    return grid


def flags_config(args: argparse.Namespace) -> CliConfig:
    """The configuration given by explicit flags only."""
    return CliConfig(
        shift=ShiftBlock(sigma0=args.sigma0, sigma=args.sigma, mu0=args.mu0, mu=args.mu, base=args.base),
        loss=LossBlock(kind=args.loss, a=args.a),
        run=RunBlock(
            algo=args.algo,
            reg=args.reg,
            lam=_lambda_flag(args.lam),
            horizon=args.horizon,
            samples=args.samples,
            sample_schedule=args.sample_schedule,
            mode=args.mode,
            theta0=args.theta0,
        ),
        experiment=ExperimentBlock(name=getattr(args, "name", None), replications=args.reps),
        sweep=SweepBlock(
            grid=_grid_flags(args.grid),
            outputs=args.outputs.split(",") if args.outputs else None,
        ),
        output=OutputBlock(path=args.out, format=args.format),
        seed=args.seed,
        threads=args.threads,
    )


def resolve(args: argparse.Namespace) -> CliConfig:
    base = CliConfig.load(args.config) if args.config else CliConfig()
    return base.merged(flags_config(args))


def _flatten(row: dict[str, Any]) -> dict[str, Any]:
    """Vector entries become ``key_0, key_1, ...`` columns."""
    flat: dict[str, Any] = {}
    for key, value in row.items():
        if isinstance(value, (list, tuple, np.ndarray)):
            if len(value) == 1:
                flat[key] = value[0]
            else:
                flat.update({f"{key}_{i}": v for i, v in enumerate(value)})
        else:
            flat[key] = value
    return flat


def _write(config: CliConfig, default_format: str, payload: dict, rows: list[dict]) -> None:
    fmt = config.output.format_or(default_format)
    resolved = config.to_dict()
    if fmt == "json":
        emit(json_text(payload, resolved), config.output.path)
    else:
        emit(csv_text(rows, columns_of(rows), resolved), config.output.path)


def cmd_solve(config: CliConfig) -> int:
    model = config.shift.to_model()
    linear = as_linear(model)
    loss = config.loss.to_loss(linear.d)
    if isinstance(model, ScalarShiftModel) and np.array_equal(loss.a_mat, np.eye(1)):
        report = oracle.solve_scalar(model)
    elif linear.is_mean_shift:
        report = oracle.solve_mean_shift(linear, loss)
    else:
        msg = "closed-form solutions cover the scalar model with A = 1 and mean shifts"
        raise WrongRegimeError(msg)
    summary = {**report.to_dict(), "relative_gap": report.relative_gap}
    logger.info("theta_PS=%s theta_PO=%s gap=%.6g", summary["theta_ps"], summary["theta_po"], report.gap)
    _write(config, "json", {"report": summary}, [_flatten(summary)])
    return EXIT_OK


def cmd_run(config: CliConfig) -> int:
    model = config.shift.to_model()
    linear = as_linear(model)
    loss = config.loss.to_loss(linear.d)
    algorithm = config.run.algorithm()
    run_config = config.run.to_run_config(model, config.seed_value)
    trajectory = dynamics.run(algorithm, model, loss, run_config)
    rows = []
    for record, theta in zip(trajectory.per_step, trajectory.iterates):
        rows.append(
            _flatten(
                {
                    "t": record.t,
                    "theta": theta.tolist(),
                    "N_t": record.n_t,
                    "lambda_t": record.lambda_t,
                    "pr": record.pr,
                    "dist2_ps": record.dist2_ps,
                    "dist2_po": record.dist2_po,
                    "diverged": trajectory.diverged,
                }
            )
        )
    if trajectory.diverged:
        logger.warning("%s diverged after %d steps", algorithm.value, trajectory.iterates.shape[0] - 1)
    payload = {"algorithm": algorithm.value, "diverged": trajectory.diverged, "steps": rows}
    _write(config, "csv", payload, rows)
    return EXIT_OK


def _detail_rows(results: Sequence[TheoremCheckResult]) -> list[dict]:
    rows = []
    for result in results:
        data = result.to_dict()
        for detail in data["details"]:
            rows.append(_flatten({"experiment": data["name"], "verdict": data["verdict"], **detail}))
    return rows


def cmd_experiment(config: CliConfig, name: str | None = None) -> int:
    """Run ``name``, or ``experiment.name`` from the configuration when ``name`` is not given."""
    seed, threads = config.seed_value, config.threads_value
    name = name or config.experiment.name
    if name is None:
        msg = "no experiment given; name one on the command line or set 'experiment.name'"
        raise ConfigError(msg)
    if name == "all":
        if not (config.shift.is_empty() and config.loss.is_empty()):
            logger.warning("the default suite uses its own instances; shift and loss settings are ignored")
        results = run_all(seed=seed, threads=threads, replications=config.experiment.replications)
    else:
        try:
            experiment = ExperimentName(name)
        except ValueError as exc:
            msg = f"unknown experiment '{name}'; use one of {', '.join(n.value for n in ExperimentName)} or all"
            raise ConfigError(msg) from exc
        spec = config.experiment.to_spec(experiment, config.shift, config.run, config.loss, seed, threads)
        results = [run_experiment(spec)]

    for result in results:
        if result.verdict is Verdict.SKIPPED:
            logger.warning("%s skipped: %s", result.name.value, "; ".join(result.notes))
    payload = {"results": [result.to_dict() for result in results]}
    rows = _detail_rows(results)
    _write(config, "json", payload, rows)
    out = config.output.path
    if out is not None and config.output.format_or("json") == "json" and Path(out).suffix != ".csv":
        emit(csv_text(rows, columns_of(rows), config.to_dict()), Path(out).with_suffix(".csv"))
    failed = [result.name.value for result in results if result.verdict is Verdict.FAIL]
    if failed:
        logger.error("failed: %s", ", ".join(failed))
        return EXIT_CHECK_FAILED
    return EXIT_OK


def _sweep_point(config: CliConfig, point: dict[str, float], outputs: Sequence[str]) -> dict[str, Any]:
    shift = config.shift.merged(ShiftBlock(**{k: v for k, v in point.items() if k in ("sigma0", "sigma", "mu0", "mu")}))
    model = shift.to_model()
    linear = as_linear(model)
    if linear.d != 1:
        msg = "sweeps cover the scalar (d = 1) model"
        raise ConfigError(msg)
    sigma0 = float(linear.sigma0[0, 0])
    sigma = float(linear.sigma_map[0, 0, 0])
    mu0 = float(linear.mu0[0])
    mu = float(linear.mu_map[0, 0])
    n = point.get("N", 1.0 if config.run.samples is None else float(config.run.samples))
    horizon = int(point.get("T", config.run.horizon_value()))

    values: dict[str, Any] = {name: None for name in outputs}
    values["contractive"] = abs(mu) < 1
    try:
        if isinstance(model, ScalarShiftModel):
            report = oracle.solve_scalar(model)
        else:
            report = oracle.solve_mean_shift(linear, config.loss.to_loss(1))
    except (NonContractiveError, WrongRegimeError) as exc:
        logger.debug("sweep point %s: %s", point, exc)
    else:
        summary = _flatten({**report.to_dict(), "relative_gap": report.relative_gap})
        values.update({key: summary[key] for key in summary if key in values})
    if sigma == 0 and abs(mu) < 1:
        values["plateau"] = oracle.rerm_plateau(mu, sigma0, n)
        values["final_mse"] = oracle.rerm_mse_closed_form(mu, mu0, sigma0, n, horizon)
    return {name: values[name] for name in outputs}


def cmd_sweep(config: CliConfig) -> int:
    grid = config.sweep.checked_grid()
    outputs = config.sweep.checked_outputs()
    keys = list(grid)
    rows = []
    for combination in itertools.product(*(grid[key] for key in keys)):
        point = dict(zip(keys, combination))
        rows.append({**point, **_sweep_point(config, point, outputs)})
    logger.info("sweep: %d grid points", len(rows))
    _write(config, "csv", {"rows": rows}, rows)
    return EXIT_OK


def main(argv: Sequence[str] | None = None) -> int:
    log.configure(3)
    try:
        args = build_parser().parse_args(argv)
        log.configure(3 if args.verbosity is None else args.verbosity)
        config = resolve(args)
        if args.command == "solve":
            return cmd_solve(config)
        if args.command == "run":
            return cmd_run(config)
        if args.command == "sweep":
            return cmd_sweep(config)
        return cmd_experiment(config, "all" if args.command == "check" else None)
    except (NonContractiveError, WrongRegimeError) as exc:
        logger.error("%s", exc)
        return EXIT_REGIME
    except (RetrainError, ValueError) as exc:
        logger.error("%s", exc)
        return EXIT_CONFIG
