"""Command-line entry point.

Exit codes: 0 success, 1 a verification check failed, 2 invalid configuration,
3 numerical fault, 4 non-convergence.  Errors are printed to stderr as one line
of JSON.
"""
from __future__ import annotations

import argparse
import json
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import artifacts
from .elliptic import NewtonFailure, UnsolvableError, fourier_solve_circle, newton_solve
from .fields import FieldSpecError, build_f, build_h0
from .flow import (ConvexityFault, FlowConfig, FlowConfigError, StepUnderflow, run, theta_bisection)
from .geometry import GammaConeError, RadiiError, SupportField
from .sphere import GridError, SphereGrid
from .verify import (check_chou_wang, check_ellipsoid_formulas, check_run_estimates, eccentric_ellipsoids,
                     random_bodies, summary_table)
from .xi import XiSolveError, solve_xi

EXIT_OK, EXIT_CHECK, EXIT_CONFIG, EXIT_NUMERIC, EXIT_NOCONV = 0, 1, 2, 3, 4

DEFAULTS = {
    "grid": "circle:256", "k": None, "f": "constant:1", "h0": "ball:1", "theta": 1.0, "weighted": False,
    "tol": 1e-6, "dt_init": 1e-3, "dt_min": 1e-12, "dt_max": 0.05, "max_time": 200.0, "max_steps": 500_000,
    "margin": 0.0, "snapshot_every": 100, "no_radii": False, "theta_lo": 0.5, "theta_hi": 2.0,
    "rel_window": 1e-3, "jobs": 1, "method": "newton", "n": 1000, "seed": 0, "a": 2.0, "b": 1.0,
    "mesh": False, "out": None,
}


class ConfigError(ValueError):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise ConfigError(message)


def _add_flow_options(p):
    p.add_argument("--h0", help="initial body: ball:rho[@c], ellipsoid:a,b, axial:c,eps,p, file:path")
    p.add_argument("--theta", type=float, help="initial dilation")
    p.add_argument("--weighted", action="store_true", default=None,
                   help="evolve with f*exp(xi.x), xi from the moment equation")
    p.add_argument("--tol", type=float, help="convergence tolerance on sup|h_t|")
    p.add_argument("--dt-init", type=float)
    p.add_argument("--dt-min", type=float)
    p.add_argument("--dt-max", type=float)
    p.add_argument("--max-time", type=float)
    p.add_argument("--max-steps", type=int)
    p.add_argument("--margin", type=float, help="convexity margin on the smallest principal radius")
    p.add_argument("--snapshot-every", type=int, help="accepted steps between snapshots")
    p.add_argument("--no-radii", action="store_true", default=None, help="skip inner/outer radii in snapshots")
    p.add_argument("--mesh", action="store_true", default=None, help="also write the final boundary mesh")


def build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    common.add_argument("--grid", help="circle:N, axisym:N or latlong:NTxNP")
    common.add_argument("--k", type=int, help="order of the curvature function (default n-1)")
    common.add_argument("--f", help="constant:c, exponential:[c@]v, harmonic:eps@m[;...], file:path")
    common.add_argument("--config", help="JSON file of option values; command-line flags take precedence")
    common.add_argument("--out", help="output directory")

    parser = _Parser(prog="cmflow", description="Curvature flows of support functions on S^1 and S^2.")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("flow", parents=[common], help="evolve one initial body")
    _add_flow_options(p)

    p = sub.add_parser("sweep-theta", parents=[common], help="bisect the initial dilation")
    _add_flow_options(p)
    p.add_argument("--theta-lo", type=float)
    p.add_argument("--theta-hi", type=float)
    p.add_argument("--rel-window", type=float, help="stop when the bracket is below this fraction of theta_lo")
    p.add_argument("--jobs", type=int, help="parallel probes per bisection round")

    sub.add_parser("xi", parents=[common], help="solve the moment equation for xi")

    p = sub.add_parser("elliptic", parents=[common], help="solve the stationary equation directly")
    p.add_argument("--method", choices=["fourier", "newton"])
    p.add_argument("--h0", help="initial guess for Newton")
    p.add_argument("--weighted", action="store_true", default=None)

    p = sub.add_parser("verify", parents=[common], help="run a verification check")
    p.add_argument("check", choices=["chou-wang", "ellipsoid", "run"])
    p.add_argument("--n", type=int, help="population size")
    p.add_argument("--seed", type=int)
    p.add_argument("--a", type=float)
    p.add_argument("--b", type=float)
    _add_flow_options(p)
    return parser


def resolve(args: argparse.Namespace) -> dict:
    """Merge defaults, the optional config file and flags (flags win)."""
    cfg = dict(DEFAULTS)
    if args.command == "verify":
        cfg["grid"] = {"chou-wang": "latlong:32x64", "ellipsoid": "axisym:256"}.get(args.check, cfg["grid"])
    if getattr(args, "config", None):
        path = Path(args.config)
        if not path.exists():
            raise ConfigError(f"config file not found: {path}")
        try:
            loaded = json.loads(path.read_text())
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config file is not JSON: {exc}") from exc
        unknown = set(loaded) - set(DEFAULTS)
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        cfg.update(loaded)
    for key, value in vars(args).items():
        if key in DEFAULTS and value is not None:
            cfg[key] = value
    cfg["command"] = args.command
    if args.command == "verify":
        cfg["check"] = args.check
    return cfg


def _grid_and_f(cfg):
    grid = SphereGrid.from_spec(cfg["grid"])
    f = build_f(cfg["f"], grid)
    k = cfg["k"] if cfg["k"] is not None else grid.d
    if not 1 <= k <= grid.d:
        raise ConfigError(f"k={k} must lie in 1..{grid.d} for grid {grid.spec}")
    return grid, f, k


def _flow_config(cfg, grid, f, k) -> FlowConfig:
    xi = None
    if cfg["weighted"]:
        xi = solve_xi(f, grid).xi
    return FlowConfig(k=k, f=f, weighted=bool(cfg["weighted"]), xi=xi, theta=cfg["theta"],
                      dt_init=cfg["dt_init"], dt_min=cfg["dt_min"], dt_max=cfg["dt_max"],
                      tol_converge=cfg["tol"], max_time=cfg["max_time"], max_steps=cfg["max_steps"],
                      convexity_margin=cfg["margin"], snapshot_every=cfg["snapshot_every"],
                      snapshot_radii=not cfg["no_radii"])


def _outdir(cfg) -> Path | None:
    if not cfg["out"]:
        return None
    out = Path(cfg["out"])
    out.mkdir(parents=True, exist_ok=True)
    artifacts.write_json(out / "config.json", {"config": cfg})
    return out


def _run_summary(outcome) -> dict:
    fin = outcome.final
    return {"classification": outcome.classification, "reason": outcome.reason, "theta": outcome.theta,
            "t_final": fin.t, "steps": outcome.steps, "speed_sup": fin.speed_sup, "J": fin.J,
            "rejections": outcome.rejections, "j_violations": outcome.j_violations()}


def _write_run(out: Path, outcome, cfg, flow_cfg: FlowConfig) -> None:
    artifacts.write_timeseries(out / "timeseries.csv", outcome.snapshots)
    artifacts.write_json(out / "final_field.json", artifacts.field_document(outcome.final.h))
    artifacts.write_json(out / "summary.json", {"run": _run_summary(outcome), "flow": flow_cfg.summary(),
                                                "snapshots": outcome.snapshots})
    if cfg["mesh"]:
        artifacts.write_mesh(out / "mesh.obj", outcome.final.h)


def cmd_flow(cfg) -> tuple[int, dict]:
    grid, f, k = _grid_and_f(cfg)
    flow_cfg = _flow_config(cfg, grid, f, k)
    h0 = SupportField(build_h0(cfg["h0"], grid), grid)
    outcome = run(h0, flow_cfg)
    out = _outdir(cfg)
    if out:
        _write_run(out, outcome, cfg, flow_cfg)
    code = EXIT_OK if outcome.classification == "converged" else EXIT_NOCONV
    return code, _run_summary(outcome)


def cmd_sweep(cfg) -> tuple[int, dict]:
    grid, f, k = _grid_and_f(cfg)
    flow_cfg = _flow_config(cfg, grid, f, k)
    h0 = SupportField(build_h0(cfg["h0"], grid), grid)
    res = theta_bisection(h0, flow_cfg, cfg["theta_lo"], cfg["theta_hi"], rel_window=cfg["rel_window"],
                          jobs=cfg["jobs"])
    doc = {"theta_star": res.theta_star, "window": list(res.window), "converged": res.converged,
           "probes": res.probes}
    if res.outcome is not None:
        doc["run"] = _run_summary(res.outcome)
    out = _outdir(cfg)
    if out:
        artifacts.write_json(out / "bisection.json", doc)
        if res.outcome is not None:
            _write_run(out, res.outcome, cfg, replace(flow_cfg, theta=res.outcome.theta))
    return (EXIT_OK if res.converged else EXIT_NOCONV), doc


def cmd_xi(cfg) -> tuple[int, dict]:
    grid, f, _ = _grid_and_f(cfg)
    res = solve_xi(f, grid)
    doc = res.as_dict()
    out = _outdir(cfg)
    if out:
        artifacts.write_json(out / "xi.json", doc)
    return EXIT_OK, doc


def cmd_elliptic(cfg) -> tuple[int, dict]:
    grid, f, k = _grid_and_f(cfg)
    f_eff = f
    if cfg["weighted"]:
        f_eff = f * np.exp(grid.x @ solve_xi(f, grid).xi)
    if cfg["method"] == "fourier":
        if grid.mode != "circle" or k != 1:
            raise ConfigError("the Fourier method needs a circle grid and k=1")
        sol = fourier_solve_circle(f_eff, grid)
    else:
        h0 = SupportField(build_h0(cfg["h0"], grid), grid)
        sol = newton_solve(h0, f_eff, k)
    doc = {k_: v for k_, v in sol.as_dict().items() if k_ != "values"}
    out = _outdir(cfg)
    if out:
        artifacts.write_json(out / "solution.json", sol.as_dict())
    return (EXIT_OK if sol.converged else EXIT_NOCONV), doc


def cmd_verify(cfg) -> tuple[int, dict]:
    check = cfg["check"]
    if check == "chou-wang":
        grid = SphereGrid.from_spec(cfg["grid"])
        bodies = random_bodies(grid, cfg["n"], cfg["seed"])
        if grid.mode != "circle":
            bodies += eccentric_ellipsoids(SphereGrid.axisym(256))
        report = check_chou_wang(bodies, seed=cfg["seed"])
    elif check == "ellipsoid":
        grid = SphereGrid.from_spec(cfg["grid"])
        report = check_ellipsoid_formulas(cfg["a"], cfg["b"], grid)
    else:
        grid, f, k = _grid_and_f(cfg)
        flow_cfg = _flow_config(cfg, grid, f, k)
        flow_cfg.snapshot_radii = True
        outcome = run(SupportField(build_h0(cfg["h0"], grid), grid), flow_cfg)
        report = check_run_estimates(outcome)
        report.details["run"] = _run_summary(outcome)
    out = _outdir(cfg)
    if out:
        (out / "report.json").write_text(report.to_json() + "\n")
        (out / "report.txt").write_text(summary_table([report]) + "\n")
    return (EXIT_OK if report.passed else EXIT_CHECK), report.as_dict()


COMMANDS = {"flow": cmd_flow, "sweep-theta": cmd_sweep, "xi": cmd_xi, "elliptic": cmd_elliptic,
            "verify": cmd_verify}

CONFIG_ERRORS = (ConfigError, FieldSpecError, GridError, FlowConfigError, UnsolvableError)
NUMERIC_ERRORS = (ConvexityFault, StepUnderflow, NewtonFailure, GammaConeError, RadiiError,
                  np.linalg.LinAlgError, FloatingPointError)


def _fail(code: int, kind: str, exc: BaseException) -> int:
    sys.stderr.write(json.dumps({"schema": 1, "error": kind, "message": str(exc)}) + "\n")
    return code


def parse_and_dispatch(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
        cfg = resolve(args)
        code, doc = COMMANDS[cfg["command"]](cfg)
    except CONFIG_ERRORS as exc:
        return _fail(EXIT_CONFIG, "config", exc)
    except XiSolveError as exc:
        return _fail(EXIT_NOCONV, "non_convergence", exc)
    except NUMERIC_ERRORS as exc:
        return _fail(EXIT_NUMERIC, "numerical", exc)
    sys.stdout.write(artifacts.dumps(doc))
    return code


def main() -> None:
    sys.exit(parse_and_dispatch())


if __name__ == "__main__":
    main()
