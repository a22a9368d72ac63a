"""Scenario-driven command line: solve | simulate | verify | sweep.

Outputs are CSV files plus a flat key=value manifest listing each file with
its content hash; files are written atomically (temp + rename) so concurrent
runs never see partial files.  Exit codes partition the failure classes:

    0 success          4 singularity / coefficient overflow
    1 usage            5 resource limit
    2 parse / schema   6 verification failure
    3 validation
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import io
import os
import sys
import tempfile
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from . import __version__
from .errors import (
    CoefficientOverflowError,
    ConfigSyntaxError,
    MissingMomentError,
    ResourceLimitError,
    ScenarioValidationError,
    SchemaError,
    SingularityError,
)
from .recursion import solve
from .scenario import (
    Scenario,
    load_scenario_file,
    serialize_scenario,
    with_params,
)
from .simulate import evaluate_cost, propagate_mean, run_ensemble
from .svgplot import line_plot
from .verify import DeviationGrid, inject_gain_scaling, run_verification

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_PARSE = 2
EXIT_VALIDATION = 3
EXIT_SINGULAR = 4
EXIT_RESOURCE = 5
EXIT_VERIFY = 6

TRAJECTORY_ROW_LIMIT = 2_000_000


class _Parser(argparse.ArgumentParser):
    """argparse variant that reports usage problems with exit code 1."""

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _fmt(value) -> str:
    if value is None:
        return ""
    return f"{float(value):.17g}"


def _atomic_write(path: Path, data: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as handle:
            handle.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _write_csv(path: Path, header: list[str], rows) -> None:
    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow(header)
    writer.writerows(rows)
    _atomic_write(path, buffer.getvalue())


def _sha256(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def _write_manifest(out: Path, command: str, sc: Scenario, source: Path,
                    files: list[Path], extras: dict | None = None) -> None:
    digest = hashlib.sha256(serialize_scenario(sc).encode("utf-8")).hexdigest()
    lines = [
        f"tool = mftg {__version__}",
        f"command = {command}",
        f"scenario = {source}",
        f"scenario_digest = sha256:{digest}",
        f"seed = {sc.mc.seed}",
        f"created_utc = {datetime.now(timezone.utc).isoformat()}",
    ]
    for key, value in (extras or {}).items():
        lines.append(f"{key} = {value}")
    for path in files:
        lines.append(f"file {path.name} = sha256:{_sha256(path)}")
    _atomic_write(out / "manifest.txt", "\n".join(lines) + "\n")


def _coefficient_rows(sc: Scenario, table):
    for k in range(sc.horizon + 1):
        for i in range(sc.agents):
            yield [
                k,
                i + 1,
                _fmt(table.alpha_bar[i, k]),
                _fmt(table.alpha[i, k]) if table.alpha is not None else "",
                _fmt(table.gamma_bar[i, k]) if table.gamma_bar is not None else "",
            ]


def _gain_rows(sc: Scenario, gains):
    dev = gains.dev_gain is not None
    for k in range(sc.horizon):
        for i in range(sc.agents):
            yield [
                k,
                i + 1,
                _fmt(gains.mean_gain[i, k]),
                _fmt(gains.dev_gain[i, k]) if dev else "",
                _fmt(gains.c_bar[i, k]),
                _fmt(gains.c[i, k]) if dev else "",
                _fmt(gains.closed_loop_mean[k]),
                _fmt(gains.closed_loop_dev[k]) if dev else "",
            ]


def _write_solve_outputs(out: Path, sc: Scenario, table, gains) -> list[Path]:
    coeff = out / "coefficients.csv"
    _write_csv(coeff, ["k", "agent", "alpha_bar", "alpha", "gamma_bar"],
               _coefficient_rows(sc, table))
    gain = out / "gains.csv"
    _write_csv(
        gain,
        ["k", "agent", "mean_gain", "dev_gain", "c_bar", "c",
         "closed_loop_mean", "closed_loop_dev"],
        _gain_rows(sc, gains),
    )
    return [coeff, gain]


def _meanpath_rows(sc: Scenario, mean):
    for k in range(sc.horizon + 1):
        row = [k, _fmt(mean.x_bar[k])]
        for i in range(sc.agents):
            row.append(_fmt(mean.u_bar[i, k]) if k < sc.horizon else "")
        yield row


COST_HEADER = ["agent", "run_state_mean", "run_state_dev", "run_control_mean",
               "run_control_dev", "terminal_mean", "terminal_dev", "total",
               "predicted", "std_error"]


def _cost_rows(breakdown):
    for b in breakdown:
        yield [b.agent + 1, _fmt(b.run_state_mean), _fmt(b.run_state_dev),
               _fmt(b.run_control_mean), _fmt(b.run_control_dev),
               _fmt(b.terminal_mean), _fmt(b.terminal_dev), _fmt(b.total),
               _fmt(b.predicted), _fmt(b.std_error)]


def cmd_solve(args) -> int:
    sc = load_scenario_file(args.scenario)
    table, gains = solve(sc)
    out = Path(args.out)
    files = _write_solve_outputs(out, sc, table, gains)
    _write_manifest(out, "solve", sc, Path(args.scenario), files)
    return EXIT_OK


def cmd_simulate(args) -> int:
    sc = load_scenario_file(args.scenario)
    table, gains = solve(sc)
    out = Path(args.out)
    mean = propagate_mean(sc, gains)
    header = ["k", "x_bar"] + [f"u_bar_{i + 1}" for i in range(sc.agents)]
    meanpath = out / "meanpath.csv"
    _write_csv(meanpath, header, _meanpath_rows(sc, mean))
    files = [meanpath]
    extras = {"paths": 0, "threads": args.threads}

    paths = args.paths if args.paths is not None else sc.mc.paths
    ensemble = None
    if not sc.family.stochastic:
        if paths:
            print("warning: deterministic scenario; --paths ignored, "
                  "mean path only", file=sys.stderr)
        breakdown = evaluate_cost(sc, mean, table)
    else:
        if paths < 1:
            print("warning: monte_carlo.paths is 0; mean path only", file=sys.stderr)
            breakdown = evaluate_cost(sc, mean, table)
        else:
            ensemble = run_ensemble(sc, gains, paths=paths, seed=args.seed,
                                    threads=args.threads)
            breakdown = evaluate_cost(sc, ensemble, table)
            extras["paths"] = ensemble.n_paths
            extras["ensemble_seed"] = ensemble.seed
            stats = out / "ensemble_stats.csv"
            _write_csv(
                stats,
                ["k", "emp_mean", "emp_var", "emp_moment_2o"],
                (
                    [k, _fmt(ensemble.emp_mean[k]), _fmt(ensemble.dev_m2[k]),
                     _fmt(ensemble.dev_m2o[k])]
                    for k in range(sc.horizon + 1)
                ),
            )
            files.append(stats)
            if ensemble.x is not None and ensemble.n_paths * (sc.horizon + 1) <= TRAJECTORY_ROW_LIMIT:
                traj = out / "trajectories.csv"
                _write_csv(
                    traj,
                    ["path", "k", "x"] + [f"u_{i + 1}" for i in range(sc.agents)],
                    (
                        [m, k, _fmt(ensemble.x[m, k])]
                        + [
                            _fmt(ensemble.u[i, m, k]) if k < sc.horizon else ""
                            for i in range(sc.agents)
                        ]
                        for m in range(ensemble.n_paths)
                        for k in range(sc.horizon + 1)
                    ),
                )
                files.append(traj)

    costs = out / "costs.csv"
    _write_csv(costs, COST_HEADER, _cost_rows(breakdown))
    files.append(costs)

    if args.plot:
        files.extend(_write_plots(out, sc, table, mean, ensemble))
    _write_manifest(out, "simulate", sc, Path(args.scenario), files, extras)
    return EXIT_OK


def _write_plots(out: Path, sc: Scenario, table, mean, ensemble) -> list[Path]:
    steps = list(range(sc.horizon + 1))
    state_series = [("mean state", mean.x_bar)]
    if ensemble is not None:
        state_series.append(("ensemble mean", ensemble.emp_mean))
    plots = [
        ("state.svg", line_plot(steps, state_series, "Closed-loop state", "step", "state")),
        ("controls.svg", line_plot(
            steps[:-1],
            [(f"agent {i + 1}", mean.u_bar[i]) for i in range(sc.agents)],
            "Equilibrium mean controls", "step", "control",
        )),
    ]
    coeff_series = [(f"alpha_bar {i + 1}", table.alpha_bar[i]) for i in range(sc.agents)]
    if table.alpha is not None:
        coeff_series += [(f"alpha {i + 1}", table.alpha[i]) for i in range(sc.agents)]
    plots.append(("coefficients.svg", line_plot(
        steps, coeff_series, "Backward coefficients", "step", "coefficient")))
    written = []
    for name, svg in plots:
        path = out / name
        _atomic_write(path, svg)
        written.append(path)
    return written


def _parse_grid(spec: str | None, paths: int | None, seed: int | None) -> DeviationGrid:
    grid = DeviationGrid()
    if spec:
        try:
            points_str, span_str = spec.lower().split("x")
            grid = DeviationGrid(points=int(points_str), span=float(span_str))
        except ValueError:
            raise SchemaError(f"--grid expects POINTSxSPAN, e.g. 101x0.2, got {spec!r}")
    updates = {}
    if paths is not None:
        updates["paths"] = paths
    if seed is not None:
        updates["seed"] = seed
    if updates:
        from dataclasses import replace
        grid = replace(grid, **updates)
    return grid


def _parse_injection(spec: str, sc: Scenario):
    try:
        agent_str, step_str, factor_str = spec.split(":")
        agent = int(agent_str)
        step = None if step_str == "*" else int(step_str)
        factor = float(factor_str)
    except ValueError:
        raise SchemaError(f"--inject-gain expects AGENT:STEP:FACTOR with STEP an "
                          f"integer or '*', got {spec!r}")
    if not 1 <= agent <= sc.agents:
        raise SchemaError(f"--inject-gain agent must be 1..{sc.agents}, got {agent}")
    if step is not None and not 0 <= step < sc.horizon:
        raise SchemaError(f"--inject-gain step must be 0..{sc.horizon - 1} or '*'")
    return agent - 1, step, factor


def cmd_verify(args) -> int:
    sc = load_scenario_file(args.scenario)
    table, gains = solve(sc)
    injected = None
    if args.inject_gain:
        agent, step, factor = _parse_injection(args.inject_gain, sc)
        gains = inject_gain_scaling(gains, agent, step, factor)
        injected = args.inject_gain
    grid = _parse_grid(args.grid, args.paths, args.seed)
    probes = None
    if args.probes:
        rng = np.random.default_rng(12345)
        probes = tuple(
            (float(rng.uniform(-3.0, 3.0)), float(rng.uniform(0.0, 4.0)))
            for _ in range(args.probes)
        )
    report = run_verification(sc, table, gains, grid=grid, probes=probes)

    out = Path(args.out)
    rows = []
    for dev in report.deviation:
        rows.append(["deviation", "margin", dev.agent + 1, "", _fmt(dev.margin),
                     _fmt(dev.tolerance), "pass" if dev.passed else "fail"])
    rows.append(["stationarity", "max_residual", "", "", _fmt(report.stationarity_max),
                 "1e-09", "pass" if report.stationarity_max <= 1e-9 else "fail"])
    rows.append(["positivity", "tables_positive", "", "", str(report.positivity_ok).lower(),
                 "true", "pass" if report.positivity_ok else "fail"])
    rows.append(["convexity", "sampled_min", "", "", _fmt(report.convexity_min),
                 "> 0", "pass" if report.convexity_min > 0 else "fail"])
    for k, value in enumerate(report.bellman_max_per_step):
        rows.append(["bellman", "residual", "", k, _fmt(value), "1e-10",
                     "pass" if value <= 1e-10 else "fail"])
    report_csv = out / "report.csv"
    _write_csv(report_csv, ["section", "metric", "agent", "step", "value",
                            "tolerance", "status"], rows)

    lines = [f"verification {'PASSED' if report.passed else 'FAILED'}"]
    if injected:
        lines.append(f"gain corruption injected: {injected}")
    for dev in report.deviation:
        lines.append(
            f"agent {dev.agent + 1}: deviation margin {dev.margin:.3e} "
            f"(tolerance {dev.tolerance:.3e}, argmin factor "
            f"{dev.uniform_argmin_factor:.4f}, {dev.worst_mode}) "
            f"{'ok' if dev.passed else 'FAIL'}"
        )
    lines.append(f"stationarity max residual: {report.stationarity_max:.3e}")
    lines.append(f"positivity: {'ok' if report.positivity_ok else 'FAIL'}")
    lines.append(f"convexity sampled min: {report.convexity_min:.6g}")
    lines.append(f"cost-to-go identity max residual: {float(np.max(report.bellman_max_per_step)):.3e}")
    summary = out / "summary.txt"
    _atomic_write(summary, "\n".join(lines) + "\n")
    _write_manifest(out, "verify", sc, Path(args.scenario), [report_csv, summary],
                    {"injected": injected or "none"})

    if not report.passed:
        for failure in report.failures():
            print(f"verification failed: {failure}", file=sys.stderr)
        return EXIT_VERIFY
    return EXIT_OK


def _parse_sweep(spec: str) -> tuple[str, list[int]]:
    if "=" not in spec:
        raise SchemaError("--sweep expects NAME=V1,V2,..., e.g. p=2,3,4")
    name, _, values_str = spec.partition("=")
    name = name.strip()
    if name not in ("p", "o"):
        raise SchemaError(f"sweepable parameters are p and o, got {name!r}")
    values = [v for v in values_str.split(",") if v.strip()]
    if not values:
        raise SchemaError(f"--sweep {name}= needs at least one value")
    try:
        return name, [int(v) for v in values]
    except ValueError:
        raise SchemaError(f"--sweep values for {name} must be integers, got {values_str!r}")


def cmd_sweep(args) -> int:
    sc = load_scenario_file(args.scenario)
    try:
        name, values = _parse_sweep(args.sweep)
    except SchemaError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    out = Path(args.out)
    coeff_rows, gain_rows, mean_rows, cost_rows = [], [], [], []
    failures = []
    for value in values:
        run_dir = out / f"{name}={value}"
        try:
            variant = with_params(sc, **{name: value})
            table, gains = solve(variant)
            files = _write_solve_outputs(run_dir, variant, table, gains)
            mean = propagate_mean(variant, gains)
            header = ["k", "x_bar"] + [f"u_bar_{i + 1}" for i in range(variant.agents)]
            meanpath = run_dir / "meanpath.csv"
            _write_csv(meanpath, header, _meanpath_rows(variant, mean))
            files.append(meanpath)
            if variant.family.stochastic and variant.mc.paths > 0:
                ensemble = run_ensemble(variant, gains)
                breakdown = evaluate_cost(variant, ensemble, table)
            else:
                breakdown = evaluate_cost(variant, mean, table)
            costs = run_dir / "costs.csv"
            _write_csv(costs, COST_HEADER, _cost_rows(breakdown))
            files.append(costs)
            _write_manifest(run_dir, "sweep", variant, Path(args.scenario), files,
                            {"sweep": f"{name}={value}"})
        except Exception as exc:  # noqa: BLE001 - recorded, sweep continues
            failures.append((value, exc))
            print(f"sweep {name}={value} failed: {exc}", file=sys.stderr)
            continue
        for row in _coefficient_rows(variant, table):
            coeff_rows.append([name, value] + row)
        for row in _gain_rows(variant, gains):
            gain_rows.append([name, value] + row)
        for row in _meanpath_rows(variant, mean):
            mean_rows.append([name, value] + row)
        for row in _cost_rows(breakdown):
            cost_rows.append([name, value] + row)

    _write_csv(out / "sweep_coefficients.csv",
               ["param", "value", "k", "agent", "alpha_bar", "alpha", "gamma_bar"],
               coeff_rows)
    _write_csv(out / "sweep_gains.csv",
               ["param", "value", "k", "agent", "mean_gain", "dev_gain", "c_bar", "c",
                "closed_loop_mean", "closed_loop_dev"],
               gain_rows)
    _write_csv(out / "sweep_meanpath.csv",
               ["param", "value", "k", "x_bar"]
               + [f"u_bar_{i + 1}" for i in range(sc.agents)],
               mean_rows)
    _write_csv(out / "sweep_costs.csv", ["param", "value"] + COST_HEADER, cost_rows)
    if failures:
        return _exit_code_for(failures[0][1])
    return EXIT_OK


def _exit_code_for(exc: Exception) -> int:
    if isinstance(exc, (ConfigSyntaxError, SchemaError)):
        return EXIT_PARSE
    if isinstance(exc, (ScenarioValidationError, MissingMomentError)):
        return EXIT_VALIDATION
    if isinstance(exc, (SingularityError, CoefficientOverflowError)):
        return EXIT_SINGULAR
    if isinstance(exc, ResourceLimitError):
        return EXIT_RESOURCE
    raise exc


def _seed_type(text: str) -> int:
    value = int(text)
    if not 0 <= value < 2 ** 64:
        raise argparse.ArgumentTypeError("seed must fit in 64 unsigned bits")
    return value


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="mftg", description=__doc__,
                     formatter_class=argparse.RawDescriptionHelpFormatter)
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def common(p):
        p.add_argument("scenario", help="scenario configuration file (YAML)")
        p.add_argument("--out", default="mftg_out", help="output directory")

    p_solve = sub.add_parser("solve", help="backward coefficient tables and gains")
    common(p_solve)
    p_solve.set_defaults(func=cmd_solve)

    p_sim = sub.add_parser("simulate", help="mean path, ensembles, realized costs")
    common(p_sim)
    p_sim.add_argument("--paths", type=int, default=None, help="Monte Carlo paths")
    p_sim.add_argument("--seed", type=_seed_type, default=None, help="master seed")
    p_sim.add_argument("--threads", type=int, default=1, help="worker threads")
    p_sim.add_argument("--plot", action="store_true", help="write SVG plots")
    p_sim.add_argument("--format", choices=["csv"], default="csv")
    p_sim.set_defaults(func=cmd_simulate)

    p_ver = sub.add_parser("verify", help="equilibrium and identity checks")
    common(p_ver)
    p_ver.add_argument("--grid", default=None, help="deviation grid POINTSxSPAN")
    p_ver.add_argument("--probes", type=int, default=None,
                       help="random probe states for the cost-to-go identity")
    p_ver.add_argument("--paths", type=int, default=None,
                       help="common-noise paths for stochastic deviation tests")
    p_ver.add_argument("--seed", type=_seed_type, default=None,
                       help="seed for the deviation-test noise")
    p_ver.add_argument("--inject-gain", default=None, metavar="AGENT:STEP:FACTOR",
                       help="test hook: scale one agent's mean gain (STEP '*' = all)")
    p_ver.set_defaults(func=cmd_verify)

    p_sweep = sub.add_parser("sweep", help="solve+simulate across parameter values")
    common(p_sweep)
    p_sweep.add_argument("--sweep", required=True, metavar="NAME=V1,V2,...",
                         help="parameter sweep, e.g. p=2,3,4")
    p_sweep.set_defaults(func=cmd_sweep)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return args.func(args)
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (ConfigSyntaxError, SchemaError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_PARSE
    except ScenarioValidationError as exc:
        for diag in exc.diagnostics:
            print(f"validation error [{diag.code}]: {diag.message}", file=sys.stderr)
        return EXIT_VALIDATION
    except MissingMomentError as exc:
        print(f"validation error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except (SingularityError, CoefficientOverflowError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_SINGULAR
    except ResourceLimitError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RESOURCE


def entry() -> None:
    sys.exit(main())
