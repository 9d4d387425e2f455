"""Command-line front end.

Each subcommand wraps one library entry point and writes its artifacts
into the output directory.  Exit codes partition the outcomes:

    0  success (clean validation, certified solve)
    1  validation findings
    2  unreadable input, bad JSON, or bad configuration
    3  solve converged but the physics check failed
    4  solve did not converge or the solver gave up

All artifacts are written deterministically: running a command twice on
the same inputs produces byte-identical files.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import sys
from pathlib import Path

from .analysis import (
    AnalysisError,
    UncertaintySpec,
    compare_joint_separate,
    control_mode_map,
    three_point_estimate,
)
from .model import (
    ScenarioSchemaError,
    scenario_from_dict,
    validate_scenario,
)
from .physics import Solution, eval_residuals
from .scheduler import SolverOptions, SolveError, solve_opwhf

EXIT_OK = 0
EXIT_FINDINGS = 1
EXIT_INPUT = 2
EXIT_UNCERTIFIED = 3
EXIT_NO_CONVERGENCE = 4


class _Fail(Exception):
    """Carries an exit code and a message for run() to report."""

    def __init__(self, code: int, message: str):
        super().__init__(message)
        self.code = code


@dataclasses.dataclass(frozen=True)
class RunConfig:
    """Common run parameters shared by every subcommand."""
    command: str
    scenario_path: Path | None
    options_path: Path | None
    out_dir: Path
    seed: int


def _config_from_args(args) -> RunConfig:
    return RunConfig(
        command=args.command,
        scenario_path=Path(args.scenario) if args.scenario else None,
        options_path=Path(args.options) if args.options else None,
        out_dir=Path(args.out),
        seed=args.seed,
    )


def _load_json(path: Path) -> dict:
    try:
        with open(path) as fh:
            return json.load(fh)
    except OSError as e:
        raise _Fail(EXIT_INPUT, f"cannot read {path}: {e}") from e
    except json.JSONDecodeError as e:
        raise _Fail(EXIT_INPUT, f"{path} is not valid JSON: {e}") from e


def _load_scenario(cfg: RunConfig):
    if cfg.scenario_path is None:
        raise _Fail(EXIT_INPUT, "this command needs --scenario")
    doc = _load_json(cfg.scenario_path)
    try:
        return scenario_from_dict(doc)
    except ScenarioSchemaError as e:
        raise _Fail(EXIT_INPUT, f"{cfg.scenario_path}: {e}") from e


def _build_options(cfg: RunConfig, args) -> SolverOptions:
    """Options file first, then command-line overrides on top."""
    values: dict = {}
    if cfg.options_path is not None:
        doc = _load_json(cfg.options_path)
        known = {f.name for f in dataclasses.fields(SolverOptions)}
        for key in doc:
            if key not in known:
                raise _Fail(EXIT_INPUT, f"unknown solver option {key!r}")
        values.update(doc)
    if args.max_outer is not None:
        values["max_outer"] = args.max_outer
    if args.tol_outer is not None:
        values["eps_outer"] = args.tol_outer
    if args.tol_inner is not None:
        values["eps_inner"] = args.tol_inner
    return SolverOptions(**values)


def _out_dir(cfg: RunConfig) -> Path:
    try:
        cfg.out_dir.mkdir(parents=True, exist_ok=True)
    except OSError as e:
        raise _Fail(EXIT_INPUT, f"cannot create {cfg.out_dir}: {e}") from e
    return cfg.out_dir


def _write(out: Path, name: str, text: str) -> None:
    (out / name).write_text(text)


def _require_clean(s, stream) -> None:
    report = validate_scenario(s)
    if not report.ok:
        for f in report.findings:
            print(f"{f.code}: {f.message}", file=stream)
        raise _Fail(EXIT_FINDINGS, "scenario has validation findings")


# --- subcommands ----------------------------------------------------------

def cmd_validate(cfg: RunConfig, args, stream) -> int:
    s = _load_scenario(cfg)
    report = validate_scenario(s)
    if report.ok:
        print("ok", file=stream)
        return EXIT_OK
    for f in report.findings:
        print(f"{f.code}: {f.message}", file=stream)
    return EXIT_FINDINGS


def cmd_solve(cfg: RunConfig, args, stream) -> int:
    s = _load_scenario(cfg)
    _require_clean(s, stream)
    opts = _build_options(cfg, args)
    out = _out_dir(cfg)
    try:
        res = solve_opwhf(s, opts)
    except SolveError as e:
        print(f"solve failed ({e.status}): {e}", file=stream)
        return EXIT_NO_CONVERGENCE
    payload = {
        "objective": res.objective,
        "status": res.status,
        "converged": res.converged,
        "certified": res.certified,
        "iterations": res.iterations,
        "breakdown": res.breakdown,
        "x_couple": res.x_couple,
        "solution": res.solution.to_dict(),
    }
    _write(out, "solution.json", json.dumps(payload, sort_keys=True, indent=1) + "\n")
    _write(out, "trace.jsonl", res.trace.to_jsonl())
    _write(out, "residuals.json", res.residuals.to_json())
    print(f"status: {res.status}", file=stream)
    print(f"objective: {res.objective:.6f}", file=stream)
    print(f"iterations: {res.iterations}", file=stream)
    print(f"max residual: {res.residuals.max_rel:.3e} "
          f"({res.residuals.worst_family() or 'none'})", file=stream)
    if res.certified:
        return EXIT_OK
    return EXIT_UNCERTIFIED if res.converged else EXIT_NO_CONVERGENCE


def cmd_compare(cfg: RunConfig, args, stream) -> int:
    s = _load_scenario(cfg)
    _require_clean(s, stream)
    opts = _build_options(cfg, args)
    out = _out_dir(cfg)
    try:
        table = compare_joint_separate(s, opts)
    except SolveError as e:
        print(f"solve failed ({e.status}): {e}", file=stream)
        return EXIT_NO_CONVERGENCE
    _write(out, "compare.csv", table.to_csv())
    print(f"separate: {table.separate.total:.6f}", file=stream)
    print(f"joint: {table.joint.total:.6f}", file=stream)
    print(f"savings: {table.savings:.6f}", file=stream)
    if table.separate_certified and table.joint_certified:
        return EXIT_OK
    return EXIT_UNCERTIFIED


def cmd_sensitivity(cfg: RunConfig, args, stream) -> int:
    out = _out_dir(cfg)
    try:
        grid = control_mode_map(tuple(args.length_range),
                                tuple(args.diameter_range),
                                tuple(args.resolution))
    except ValueError as e:
        raise _Fail(EXIT_INPUT, str(e)) from e
    _write(out, "modemap.csv", grid.to_csv())
    modes = sorted({p.mode.value for p in grid.points})
    print(f"grid: {len(grid.points)} points, modes: {', '.join(modes)}",
          file=stream)
    return EXIT_OK


def cmd_uncertainty(cfg: RunConfig, args, stream) -> int:
    s = _load_scenario(cfg)
    _require_clean(s, stream)
    opts = _build_options(cfg, args)
    out = _out_dir(cfg)
    try:
        u = UncertaintySpec(sigma_solar=args.sigma_solar,
                            sigma_power=args.sigma_power,
                            sigma_water=args.sigma_water,
                            sigma_heat=args.sigma_heat)
    except ValueError as e:
        raise _Fail(EXIT_INPUT, str(e)) from e
    try:
        est = three_point_estimate(
            s, u, solve=lambda sc: solve_opwhf(sc, opts).objective)
    except AnalysisError as e:
        print(str(e), file=stream)
        return EXIT_NO_CONVERGENCE
    pct = 100.0 * est.relative_std
    _write(out, "uncertainty.csv",
           "mean,std,relative_std_pct\n"
           f"{est.mean:.6f},{est.std:.6f},{pct:.6f}\n")
    print(f"mean: {est.mean:.6f}", file=stream)
    print(f"relative std: {pct:.6f}%", file=stream)
    return EXIT_OK


def cmd_validate_solution(cfg: RunConfig, args, stream) -> int:
    s = _load_scenario(cfg)
    doc = _load_json(Path(args.solution))
    try:
        sol = Solution.from_dict(doc["solution"] if "solution" in doc else doc)
    except (KeyError, TypeError, ValueError) as e:
        raise _Fail(EXIT_INPUT,
                    f"{args.solution}: not a solution artifact: {e}") from e
    report = eval_residuals(s, sol)
    out = _out_dir(cfg)
    _write(out, "residuals.json", report.to_json())
    print(f"max residual: {report.max_rel:.3e} "
          f"({report.worst_family() or 'none'})", file=stream)
    return EXIT_OK if report.certified(args.tol) else EXIT_UNCERTIFIED


# --- argument wiring ------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="coflow",
        description="Joint scheduling of coupled power, water, and heating networks.")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, scenario_required=True):
        sp.add_argument("--scenario", required=scenario_required,
                        help="scenario document (JSON)")
        sp.add_argument("--options", help="solver options file (JSON)")
        sp.add_argument("--out", default=".", help="artifact directory")
        sp.add_argument("--seed", type=int, default=0,
                        help="seed recorded for randomized studies")
        sp.add_argument("--max-outer", type=int, dest="max_outer")
        sp.add_argument("--tol-outer", type=float, dest="tol_outer")
        sp.add_argument("--tol-inner", type=float, dest="tol_inner")

    sp = sub.add_parser("validate", help="check a scenario document")
    common(sp)
    sp.set_defaults(fn=cmd_validate)

    sp = sub.add_parser("solve", help="solve the joint schedule")
    common(sp)
    sp.set_defaults(fn=cmd_solve)

    sp = sub.add_parser("compare", help="joint versus separate cost table")
    common(sp)
    sp.set_defaults(fn=cmd_compare)

    sp = sub.add_parser("sensitivity", help="pipe control-mode map")
    common(sp, scenario_required=False)
    sp.add_argument("--length-range", type=float, nargs=2,
                    default=(20.0, 400.0), metavar=("LO", "HI"))
    sp.add_argument("--diameter-range", type=float, nargs=2,
                    default=(0.2, 1.2), metavar=("LO", "HI"))
    sp.add_argument("--resolution", type=int, nargs=2, default=(8, 8),
                    metavar=("NLEN", "NDIA"))
    sp.set_defaults(fn=cmd_sensitivity)

    sp = sub.add_parser("uncertainty", help="three-point objective spread")
    common(sp)
    sp.add_argument("--sigma-solar", type=float, default=0.0)
    sp.add_argument("--sigma-power", type=float, default=0.0)
    sp.add_argument("--sigma-water", type=float, default=0.0)
    sp.add_argument("--sigma-heat", type=float, default=0.0)
    sp.set_defaults(fn=cmd_uncertainty)

    sp = sub.add_parser("validate-solution",
                        help="re-check a stored solution against the physics")
    common(sp)
    sp.add_argument("--solution", required=True,
                    help="solution artifact (JSON)")
    sp.add_argument("--tol", type=float, default=1e-3,
                    help="relative residual bound for acceptance")
    sp.set_defaults(fn=cmd_validate_solution)
    return p


def run(argv=None, stream=None) -> int:
    stream = stream if stream is not None else sys.stdout
    args = build_parser().parse_args(argv)
    cfg = _config_from_args(args)
    try:
        return args.fn(cfg, args, stream)
    except _Fail as e:
        print(f"error: {e}", file=stream)
        return e.code


def main(argv=None) -> int:
    return run(argv)


if __name__ == "__main__":
    sys.exit(main())
