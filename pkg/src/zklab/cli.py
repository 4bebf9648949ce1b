"""Command-line front end for the ZK laboratory.

Each subcommand runs one module pipeline, writes its tables/series as CSV
or JSON into an output directory, and drops a JSON run manifest next to
the outputs (command, resolved configuration, input hashes, output paths,
wall-clock time, versions).  Exit status: 0 on success, 2 on numerical
failure, 3 on configuration error, 64 on usage error.
"""

from __future__ import annotations

import argparse
import dataclasses
import hashlib
import json
import platform
import sys
import time
from pathlib import Path

import numpy as np
import scipy

from . import __version__
from . import dynamics, functionals, groundstate, profiles, simulator, spectral
from .errors import (
    ConfigError,
    DomainError,
    InvalidConstraintsError,
    InvalidGridError,
    InvalidInputError,
    OutOfRegimeError,
    ZKLabError,
)
from .grids import BoxGrid2D, RadialGrid

EXIT_OK = 0
EXIT_NUMERICAL = 2
EXIT_CONFIG = 3
EXIT_USAGE = 64

_CONFIG_ERRORS = (
    ConfigError,
    DomainError,
    InvalidConstraintsError,
    InvalidGridError,
    InvalidInputError,
    OutOfRegimeError,
)


def _sha256(path) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(65536), b""):
            digest.update(chunk)
    return digest.hexdigest()


def write_manifest(out_dir, command, config, inputs, outputs, wall_clock):
    """JSON manifest next to the outputs; records enough to re-run."""
    manifest = {
        "command": command,
        "config": config,
        "input_hashes": {str(p): _sha256(p) for p in inputs if Path(p).is_file()},
        "outputs": [str(p) for p in outputs],
        "wall_clock_seconds": wall_clock,
        "versions": {
            "zklab": __version__,
            "numpy": np.__version__,
            "scipy": scipy.__version__,
            "python": platform.python_version(),
        },
    }
    path = Path(out_dir) / f"{command}_manifest.json"
    with open(path, "w") as fh:
        json.dump(manifest, fh, indent=2)
        fh.write("\n")
    return path


def _out_dir(args) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _float_list(text: str) -> list[float]:
    try:
        return [float(tok) for tok in text.split(",") if tok.strip()]
    except ValueError as exc:
        raise ConfigError(f"expected comma-separated floats, got {text!r}") from exc


def _json_default(obj):
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    raise TypeError(f"not JSON serializable: {type(obj)!r}")


def _dump_json(path, payload) -> None:
    with open(path, "w") as fh:
        json.dump(payload, fh, indent=2, default=_json_default)
        fh.write("\n")


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------


def cmd_ground_state(args) -> list[Path]:
    out = _out_dir(args)
    grid = RadialGrid.from_rmax(args.dr, args.rmax)
    report = groundstate.solve_ground_state(grid=grid, taylor_rows=args.taylor_rows)
    csv_path = out / "ground_state.csv"
    groundstate.save_ground_state(report, csv_path)

    payload = {
        "dr": args.dr,
        "rmax": args.rmax,
        "iterations": report.iterations,
        "converged": report.converged,
        "residual": report.residual,
        "mass": report.mass,
        "energy": report.energy,
        "identity_gaps": report.identity_gaps,
        "pohozaev": groundstate.pohozaev_report(report.Q),
    }
    if args.oracle:
        oracle = groundstate.shooting_oracle()
        payload["oracle"] = oracle
        payload["mass_vs_oracle_rel"] = abs(report.mass - oracle["mass"]) / oracle["mass"]
    json_path = out / "ground_state.json"
    _dump_json(json_path, payload)
    return [csv_path, Path(str(csv_path) + ".json"), json_path]


def cmd_theta_table(args) -> list[Path]:
    out = _out_dir(args)
    rows = profiles.theta_table(_float_list(args.dr), _float_list(args.L))
    csv_path = out / "theta_table.csv"
    profiles.save_theta_table(rows, csv_path)
    return [csv_path]


def cmd_profiles(args) -> list[Path]:
    out = _out_dir(args)
    pipe = profiles.theta_pipeline(args.dr, args.rmax, taylor_rows=1)
    F = pipe["F"]
    h2, kink_gap = profiles.compute_h2(F)
    box = BoxGrid2D.square(args.half_width, args.h)
    P = profiles.solve_P(pipe["ground_state"].Q, h2, box, F=F)

    csv_path = out / "profiles.csv"
    profiles.save_profiles_csv(F, h2, csv_path)
    fhat_path = out / "fhat.csv"
    profiles.save_fhat_csv(pipe["Fhat"], fhat_path)
    json_path = out / "profiles.json"
    _dump_json(json_path, {
        "theta": pipe["theta"].theta,
        "symmetrization_diff": pipe["symmetrization_diff"],
        "h2_kink_gap": kink_gap,
        "P_diagnostics": P.diagnostics,
    })
    return [csv_path, fhat_path, json_path]


def cmd_spectral_check(args) -> list[Path]:
    out = _out_dir(args)
    grid = RadialGrid.from_rmax(args.dr, args.rmax)
    report = groundstate.solve_ground_state(grid=grid, taylor_rows=1)
    box = BoxGrid2D.square(args.half_width, args.h)
    eig = spectral.eigen_report(report.Q, box)
    json_path = out / "spectral.json"
    spectral.save_report(json_path, eig, box)
    return [json_path]


def cmd_ode(args) -> list[Path]:
    out = _out_dir(args)
    traj = dynamics.integrate(args.b0, args.theta, args.t_end, args.dt)
    pred = dynamics.predict(args.b0, args.theta)
    csv_path = out / "ode_trajectory.csv"
    dynamics.save_trajectory(csv_path, traj, args.theta)
    json_path = out / "ode_prediction.json"
    dynamics.save_prediction(json_path, pred)
    return [csv_path, json_path]


def _build_reference(dr: float, rmax: float) -> simulator.ModulationReference:
    grid = RadialGrid.from_rmax(dr, rmax)
    report = groundstate.solve_ground_state(grid=grid, taylor_rows=1)
    return simulator.ModulationReference.build(report.Q)


def cmd_simulate(args) -> list[Path]:
    out = _out_dir(args)
    config = simulator.parse_config(args.config)
    args.resolved_run_config = dataclasses.asdict(config)
    ref = _build_reference(args.dr, args.rmax)
    result = simulator.run(config, ref)
    csv_path = out / "simulate_series.csv"
    simulator.save_series(csv_path, result)
    json_path = out / "simulate_fit.json"
    simulator.save_fit(json_path, result)
    return [csv_path, json_path]


def cmd_lyapunov(args) -> list[Path]:
    out = _out_dir(args)
    config = simulator.parse_config(args.config)
    args.resolved_run_config = dataclasses.asdict(config)
    ref = _build_reference(args.dr, args.rmax)
    result = simulator.run(config, ref)

    W = functionals.build_weights(args.B)
    series = functionals.lyapunov_series(
        result, W, config.theta, Qb_of_b=ref.qb_field
    )
    csv_path = out / "lyapunov_series.csv"
    functionals.save_series(csv_path, series)

    audit = functionals.weight_inequality_audit(W)
    json_path = out / "lyapunov_audit.json"
    _dump_json(json_path, {
        "B": args.B,
        "exact": audit["exact"],
        "ratios": audit["ratios"],
        "monitor": series["monitor"],
    })
    return [csv_path, json_path]


# ---------------------------------------------------------------------------
# dispatch
# ---------------------------------------------------------------------------


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        # argparse defaults to exit code 2; usage problems must be 64 here
        self.print_usage(sys.stderr)
        raise SystemExit(EXIT_USAGE)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="zklab", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    def add(name, func, **kwargs):
        p = sub.add_parser(name, **kwargs)
        p.set_defaults(func=func)
        p.add_argument("--out", default=".", help="output directory")
        return p

    p = add("ground-state", cmd_ground_state, help="solve the ground state Q")
    p.add_argument("--dr", type=float, default=0.01)
    p.add_argument("--rmax", type=float, default=20.0)
    p.add_argument("--oracle", action="store_true",
                   help="also run the independent shooting oracle")
    p.add_argument("--taylor-rows", type=int, default=1,
                   help="near-origin Taylor rows (1 = plain second-order scheme)")

    p = add("theta-table", cmd_theta_table, help="theta over a (dr, L) grid")
    p.add_argument("--dr", default="0.05,0.02,0.01",
                   help="comma-separated radial steps")
    p.add_argument("--L", default="5,10,15,20",
                   help="comma-separated domain sizes")

    p = add("profiles", cmd_profiles, help="F, h2, Fhat and the P profile")
    p.add_argument("--dr", type=float, default=0.01)
    p.add_argument("--rmax", type=float, default=20.0)
    p.add_argument("--half-width", type=float, default=16.0)
    p.add_argument("--h", type=float, default=0.125)

    p = add("spectral-check", cmd_spectral_check,
            help="eigenvalues and constrained minima of L, A, B")
    p.add_argument("--dr", type=float, default=0.01)
    p.add_argument("--rmax", type=float, default=20.0)
    p.add_argument("--half-width", type=float, default=12.0)
    p.add_argument("--h", type=float, default=0.2)

    p = add("ode", cmd_ode, help="modulation ODE trajectory and regime")
    p.add_argument("--b0", type=float, required=True)
    p.add_argument("--theta", type=float, default=1.66032)
    p.add_argument("--t-end", type=float, default=6.0)
    p.add_argument("--dt", type=float, default=1e-3)

    p = add("simulate", cmd_simulate, help="PDE run with modulation tracking")
    p.add_argument("--config", required=True, help="key=value run config file")
    p.add_argument("--dr", type=float, default=0.01)
    p.add_argument("--rmax", type=float, default=20.0)

    p = add("lyapunov", cmd_lyapunov,
            help="Lyapunov functionals along a run plus the weight audit")
    p.add_argument("--config", required=True, help="key=value run config file")
    p.add_argument("--B", type=float, default=8.0)
    p.add_argument("--dr", type=float, default=0.01)
    p.add_argument("--rmax", type=float, default=20.0)

    return parser


def dispatch(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)

    start = time.time()
    try:
        outputs = args.func(args)
    except _CONFIG_ERRORS as exc:
        print(f"zklab {args.command}: configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except ZKLabError as exc:
        print(f"zklab {args.command}: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL

    config = {
        k: v for k, v in vars(args).items() if k not in ("func", "command")
    }
    inputs = [args.config] if getattr(args, "config", None) else []
    write_manifest(Path(args.out), args.command, config, inputs,
                   outputs, time.time() - start)
    return EXIT_OK


def main(argv=None) -> int:
    return dispatch(argv)


if __name__ == "__main__":
    sys.exit(main())
