"""Command-line entry point: ``relaxns <subcommand> ...``."""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from pathlib import Path

import yaml

from . import inequalities
from .initial import INITIAL_DATA, REGIMES, check_hypotheses, format_certificate, make_ns_initial, make_well_prepared
from .linear import run_linear
from .model import RelaxParams, SystemState, load_snapshot, save_snapshot
from .ns import NsSolverConfig, NsTrajectory, SolverDivergence, ns_state, run_ns
from .relax import relax_run
from .spectral import TorusGrid
from .sweep import SweepPlan, run_sweep

log = logging.getLogger("relaxns")

EXIT_DIVERGED = 3


def _add_ic(p: argparse.ArgumentParser):
    p.add_argument("--n", type=int, default=64, help="grid points per direction")
    p.add_argument("--ic", choices=INITIAL_DATA, default="taylor-green")
    p.add_argument("--seed", type=int, default=0)


def _add_params(p: argparse.ArgumentParser):
    p.add_argument("--epsilon", type=float, required=True)
    p.add_argument("--delta", type=float, required=True)
    p.add_argument("--a", type=float, default=1.0, help="energy exponent")
    p.add_argument("--friction", action="store_true")


def _add_run(p: argparse.ArgumentParser):
    p.add_argument("--T", type=float, required=True, help="final time")
    p.add_argument("--dt", type=float, default=None)
    p.add_argument("--dt-out", type=float, default=None)
    p.add_argument("--snapshot", type=Path, help="initial state (default: well-prepared data from --ic)")
    p.add_argument("--regime", choices=REGIMES, default="thm23")
    p.add_argument("--out", type=Path, default=Path("."), help="output directory")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="relaxns", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run-ns", help="reference Navier-Stokes run")
    _add_ic(p)
    p.add_argument("--dt", type=float, default=2.5e-4)
    p.add_argument("--T", type=float, required=True)
    p.add_argument("--dt-out", type=float, default=None, help="snapshot cadence (default: every step)")
    p.add_argument("--friction", action="store_true")
    p.add_argument("--out", type=Path, default=Path("."))

    p = sub.add_parser("make-ic", help="write a well-prepared initial state and its certificate")
    _add_ic(p)
    _add_params(p)
    p.add_argument("--regime", choices=REGIMES, default="thm23")
    p.add_argument("--mode", choices=("equilibrium", "rough"), default="equilibrium")
    p.add_argument("--C", type=float, default=10.0, help="constant in the hypothesis bounds")
    p.add_argument("--out", type=Path, default=Path("."))

    p = sub.add_parser("run-relax", help="relaxation run with optional reference comparison")
    _add_ic(p)
    _add_params(p)
    _add_run(p)
    p.add_argument("--reference", type=Path, help="Navier-Stokes trajectory (.npz) for error norms")

    p = sub.add_parser("run-linear", help="intermediate linear system forced by a reference flow")
    _add_ic(p)
    _add_params(p)
    _add_run(p)
    p.add_argument("--ns-trajectory", type=Path, required=True)

    p = sub.add_parser("sweep", help="parameter sweep from a YAML or JSON config")
    p.add_argument("config", type=Path)
    p.add_argument("--out", type=Path, default=None, help="output directory (overrides outputs.dir)")
    p.add_argument("--emit-plot-data", action="store_true")
    p.add_argument("--workers", type=int, default=1)

    p = sub.add_parser("verify-inequalities", help="empirical constants of the interpolation inequalities")
    p.add_argument("--samples", type=int, default=10_000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--gamma", type=float, nargs="+", default=list(inequalities.GAMMAS))
    p.add_argument("--out", type=Path, default=Path("inequalities.csv"))
    return parser


def _initial_state(args, params: RelaxParams) -> SystemState:
    if args.snapshot is not None:
        state, _, _ = load_snapshot(args.snapshot)
        if state.U is None:
            raise ValueError(f"{args.snapshot} has no flux variable U")
        return state
    u0 = make_ns_initial(args.ic, TorusGrid(args.n), seed=args.seed)
    return make_well_prepared(u0, params, args.regime)


def _params(args) -> RelaxParams:
    return RelaxParams(args.epsilon, args.delta, args.a, args.friction)


def cmd_run_ns(args) -> int:
    grid = TorusGrid(args.n)
    u0 = make_ns_initial(args.ic, grid, seed=args.seed)
    config = NsSolverConfig(args.n, args.dt, args.dt_out, friction=args.friction)
    args.out.mkdir(parents=True, exist_ok=True)
    traj, rows = run_ns(u0, config, args.T)
    traj.save(args.out / "ns_trajectory.npz")
    save_snapshot(args.out / "ns_final.npz", traj.state_at(traj.T), None, ic=args.ic, seed=args.seed)
    with open(args.out / "diagnostics.csv", "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=["t", "energy", "max_div"])
        w.writeheader()
        w.writerows({k: repr(float(v)) for k, v in r.items()} for r in rows)
    log.info("wrote %d snapshots to %s", len(traj), args.out)
    return 0


def cmd_make_ic(args) -> int:
    params = _params(args)
    grid = TorusGrid(args.n)
    u0 = make_ns_initial(args.ic, grid, seed=args.seed)
    state = make_well_prepared(u0, params, args.regime, mode=args.mode)
    cert = check_hypotheses(state, ns_state(u0), params, args.regime, C=args.C)
    args.out.mkdir(parents=True, exist_ok=True)
    save_snapshot(args.out / "initial.npz", state, params, ic=args.ic, seed=args.seed, regime=args.regime)
    text = format_certificate(cert, params, args.regime)
    (args.out / "certificate.txt").write_text(text)
    sys.stdout.write(text)
    return 0


def _write_final(args, result, params):
    args.out.mkdir(parents=True, exist_ok=True)
    result.report.write_csv(args.out / "diagnostics.csv")
    save_snapshot(args.out / "final.npz", result.trajectory.final, params)


def cmd_run_relax(args) -> int:
    params = _params(args)
    state = _initial_state(args, params)
    ref = NsTrajectory.load(args.reference) if args.reference else None
    try:
        result = relax_run(state, params, args.T, dt=args.dt, dt_out=args.dt_out, reference=ref)
    except SolverDivergence as err:
        log.error("%s", err)
        return EXIT_DIVERGED
    _write_final(args, result, params)
    return 0


def cmd_run_linear(args) -> int:
    params = _params(args)
    state = _initial_state(args, params)
    ref = NsTrajectory.load(args.ns_trajectory)
    try:
        result = run_linear(state, params, args.T, ref, dt=args.dt, dt_out=args.dt_out)
    except SolverDivergence as err:
        log.error("%s", err)
        return EXIT_DIVERGED
    _write_final(args, result, params)
    return 0


def load_config(path: Path) -> dict:
    text = path.read_text()
    return json.loads(text) if path.suffix == ".json" else yaml.safe_load(text)


def cmd_sweep(args) -> int:
    cfg = load_config(args.config)
    outputs = cfg.get("outputs") or {}
    out = args.out or Path(outputs.get("dir", "."))
    plan = SweepPlan.from_config(cfg)
    out.mkdir(parents=True, exist_ok=True)
    result = run_sweep(plan, workers=args.workers)
    result.write_rates(out / "rates.csv")
    result.write_raw(out / "raw.csv")
    if args.emit_plot_data or outputs.get("plot_data"):
        result.write_plot_data(out)
    for f in result.fits:
        log.info("%-20s vs %-10s order %.3f  residual %.3f", f.functional, f.against, f.order, f.residual)
    for msg in result.failures:
        log.warning("ladder point failed: %s", msg)
    return 0


def cmd_verify_inequalities(args) -> int:
    reports = inequalities.verify_all(args.samples, args.seed, tuple(args.gamma))
    inequalities.write_reports(args.out, reports)
    for r in reports:
        log.info("%-14s gamma=%-5s max=%.6g violations=%d", r.inequality, r.gamma, r.max_ratio, r.violations)
    return 0 if all(r.passed for r in reports) else 1


COMMANDS = {
    "run-ns": cmd_run_ns,
    "make-ic": cmd_make_ic,
    "run-relax": cmd_run_relax,
    "run-linear": cmd_run_linear,
    "sweep": cmd_sweep,
    "verify-inequalities": cmd_verify_inequalities,
}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO, format="%(levelname)s %(message)s")
    try:
        return COMMANDS[args.command](args)
    except (ValueError, FileNotFoundError) as err:
        log.error("%s", err)
        return 2


if __name__ == "__main__":
    sys.exit(main())
