"""
Command-line entry point.

Exit status: 0 success, 2 honest non-convergence (or a failed check in
``verify``), 1 errors including bad flags.
"""

from __future__ import annotations

import argparse
import itertools
import logging
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict
from pathlib import Path

import numpy as np
import yaml

from . import __version__
from .analysis import apriori_bound_check, compute_thresholds, energy_residual_series
from .config import ConfigError, RunConfig, load_config
from .integrator import IntegrationError
from .io import write_checkpoint, write_diagnostics, write_manifest
from .periodic import contraction_estimate, invariant_radius, picard_strong, solve_linear_periodic, solve_periodic
from .spectral import ModeSet, SpectralField, norm, random_field

__all__ = ["main", "run_command", "EXIT_OK", "EXIT_ERROR", "EXIT_NONCONVERGED"]

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_NONCONVERGED = 2

log = logging.getLogger("cbfed")


class _UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise _UsageError(f"{self.prog}: error: {message}")


def _build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="cbfed", description="Time-periodic damped Navier-Stokes solver")
    parser.add_argument("--version", action="version", version=f"cbfed {__version__}")
    parser.add_argument("-v", "--verbose", action="count", default=0)
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def with_config(name: str, help_: str) -> argparse.ArgumentParser:
        p = sub.add_parser(name, help=help_)
        p.add_argument("--config", required=True, help="YAML run configuration")
        p.add_argument("--out", help="output directory (overrides output.directory)")
        p.add_argument("--tol", type=float, help="override solver.tol")
        p.add_argument("--max-iter", type=int, help="override solver.max_iter")
        return p

    with_config("solve-periodic", "fixed point of the period map")
    with_config("solve-linear", "closed-form periodic solution of the linear problem")
    with_config("picard", "whole-period Picard iteration")
    with_config("verify", "solve and run the built-in checks")
    sp = with_config("sweep", "cartesian sweep over beta, gamma and forcing amplitude")
    sp.add_argument("--jobs", type=int, default=1, help="concurrent sweep points")

    th = sub.add_parser("thresholds", help="print uniqueness thresholds")
    for name in ("mu", "alpha", "beta", "gamma", "r", "q", "lambda1"):
        th.add_argument(f"--{name}", type=float, required=name not in ("gamma", "q", "alpha"))
    th.set_defaults(gamma=0.0, q=1.0, alpha=0.0)
    return parser


def _initial_state(cfg: RunConfig) -> SpectralField | None:
    if cfg.initial.seed is None:
        return None
    rng = np.random.Generator(np.random.Philox(cfg.initial.seed))
    return random_field(cfg.grid, ModeSet(cfg.grid, cfg.integrator.galerkin_level), rng, h_norm=cfg.initial.h_norm)


def _thresholds_or_none(cfg: RunConfig):
    try:
        return compute_thresholds(cfg.params).as_dict()
    except ValueError as exc:
        return {"unavailable": str(exc)}


def _manifest(cfg: RunConfig, command: str, wall: float, **extra) -> dict:
    seed = cfg.forcing.random.seed if cfg.forcing.random else None
    return {
        "command": command,
        "code_version": __version__,
        "config": cfg.model_dump(mode="json"),
        "forcing_seed": seed,
        "uniqueness": _thresholds_or_none(cfg),
        "wall_time": wall,
        **extra,
    }


def _outputs(cfg: RunConfig, out: str | None) -> Path:
    path = Path(out or cfg.output.directory)
    path.mkdir(parents=True, exist_ok=True)
    return path


def _verify_checks(cfg: RunConfig, report, f) -> dict:
    p = cfg.params
    checks: dict[str, dict] = {}
    checks["converged"] = {"passed": bool(report.converged), "residual": report.residual_history[-1] if report.residual_history else None}
    traj = report.trajectory
    if traj is not None:
        defect = norm(traj.final - traj.initial, "H")
        checks["periodicity"] = {"passed": defect <= 10 * cfg.solver.tol, "defect": defect}
        er = energy_residual_series(traj, p, f)
        checks["energy_balance"] = {"passed": True, "period_residual": float(er.sum()), "max_window": float(np.abs(er).max(initial=0.0))}
        if p.beta > 0:
            ab = apriori_bound_check(traj, p, f)
            checks["apriori_bound"] = {"passed": ab.satisfied and ab.period_dissipation_ok and ab.running_bound_ok, **asdict(ab)}
            R = invariant_radius(p, f, cfg.grid)
            h0 = norm(report.final_state, "H")
            checks["invariant_ball"] = {"passed": h0 <= R * (1 + 1e-6), "radius": R, "h_norm": h0}
    if report.predicted_rate is not None and len(report.residual_history) >= 3:
        rho = contraction_estimate(report)
        # H-norm factor implied by the squared-norm decay rate
        bound = report.predicted_rate * 1.1
        checks["contraction"] = {"passed": rho <= bound, "empirical": rho, "bound": bound}
    return checks


def _run_single(cfg: RunConfig, command: str, out_dir: Path) -> int:
    f = cfg.build_forcing()
    t0 = time.perf_counter()
    extra: dict = {}
    status = EXIT_OK
    traj = None
    final = None
    if command == "solve-linear":
        traj = solve_linear_periodic(cfg.params, f, cfg.grid, cfg.integrator.n_steps, ModeSet(cfg.grid, cfg.integrator.galerkin_level))
        final = traj.initial
        extra["report"] = {"method": "green_kernel", "final_h_norm": norm(final, "H"), "converged": True}
    else:
        if command == "picard":
            report = picard_strong(
                cfg.params, f, cfg.grid, cfg.integrator, tol=cfg.solver.tol, max_iter=cfg.solver.max_iter,
                harmonic_cutoff=cfg.solver.harmonic_cutoff,
            )
        else:
            report = solve_periodic(
                cfg.params, f, cfg.grid, cfg.integrator, v0_init=_initial_state(cfg), tol=cfg.solver.tol,
                max_iter=cfg.solver.max_iter, acceleration=cfg.solver.acceleration,
            )
        traj, final = report.trajectory, report.final_state
        extra["report"] = report.summary()
        if report.message.startswith("aborted"):
            status = EXIT_ERROR
        elif not report.converged:
            status = EXIT_NONCONVERGED
        if command == "verify":
            checks = _verify_checks(cfg, report, f)
            extra["checks"] = checks
            if status == EXIT_OK and not all(c["passed"] for c in checks.values()):
                status = EXIT_NONCONVERGED
    wall = time.perf_counter() - t0
    extra["status"] = status
    write_diagnostics(traj, out_dir / cfg.output.diagnostics, cfg.params)
    if final is not None:
        write_checkpoint(final, out_dir / cfg.output.checkpoint)
    digest = write_manifest(_manifest(cfg, command, wall, **extra), out_dir / cfg.output.manifest)
    log.info("%s finished with status %d (digest %s)", command, status, digest[:12])
    print(f"{command}: status={status} manifest={out_dir / cfg.output.manifest}")
    return status


def _sweep_point(args: tuple[dict, str, int]) -> dict:
    cfg_data, out_dir, index = args
    cfg = RunConfig.model_validate(cfg_data)
    point = {"index": index, "beta": cfg.params.beta, "gamma": cfg.params.gamma, "amplitude": cfg.forcing.scale}
    try:
        status = _run_single(cfg, "verify", Path(out_dir))
    except (IntegrationError, ValueError, OSError) as exc:
        return {**point, "status": EXIT_ERROR, "error": str(exc)}
    return {**point, "status": status}


def _run_sweep(cfg: RunConfig, out_dir: Path, jobs: int) -> int:
    sw = cfg.sweep
    if sw is None:
        raise ConfigError("sweep: section missing")
    betas = sw.beta or (cfg.params.beta,)
    gammas = sw.gamma or (cfg.params.gamma,)
    amps = sw.amplitude or (1.0,)
    base = cfg.model_dump(mode="json")
    tasks = []
    for i, (b, g, a) in enumerate(itertools.product(betas, gammas, amps)):
        data = yaml.safe_load(yaml.safe_dump(base))
        data["params"].update(beta=b, gamma=g)
        data["forcing"]["scale"] = cfg.forcing.scale * a
        data["sweep"] = None
        point_dir = out_dir / f"point_{i:03d}"
        point_dir.mkdir(parents=True, exist_ok=True)
        data["output"]["directory"] = str(point_dir)
        tasks.append((data, str(point_dir), i))
    t0 = time.perf_counter()
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            rows = list(pool.map(_sweep_point, tasks))
    else:
        rows = [_sweep_point(t) for t in tasks]
    table = out_dir / "sweep.csv"
    with open(table, "w", encoding="utf-8") as fh:
        fh.write("index,beta,gamma,amplitude,status\n")
        for r in rows:
            fh.write(f"{r['index']},{r['beta']!r},{r['gamma']!r},{r['amplitude']!r},{r['status']}\n")
    worst = max((r["status"] for r in rows), default=EXIT_OK)
    status = EXIT_ERROR if worst == EXIT_ERROR else worst
    write_manifest(
        _manifest(cfg, "sweep", time.perf_counter() - t0, points=rows, status=status),
        out_dir / cfg.output.manifest,
    )
    print(f"sweep: {len(rows)} points, status={status}, table={table}")
    return status


def _print_thresholds(ns: argparse.Namespace) -> int:
    rep = compute_thresholds(None, lambda1=ns.lambda1, mu=ns.mu, alpha=ns.alpha, beta=ns.beta, gamma=ns.gamma, r=ns.r, q=ns.q)
    sys.stdout.write(yaml.safe_dump(rep.as_dict(), sort_keys=False))
    return EXIT_OK


def run_command(argv: list[str] | None = None) -> int:
    """Run the CLI on ``argv`` and return the exit status."""
    parser = _build_parser()
    try:
        ns = parser.parse_args(argv)
    except _UsageError as exc:
        print(exc, file=sys.stderr)
        return EXIT_ERROR
    except SystemExit as exc:  # --help / --version
        return EXIT_OK if exc.code in (0, None) else EXIT_ERROR
    logging.basicConfig(level=logging.WARNING - 10 * ns.verbose, format="%(levelname)s %(name)s: %(message)s")
    try:
        if ns.command == "thresholds":
            return _print_thresholds(ns)
        cfg = load_config(ns.config)
        overrides = {k: v for k, v in (("tol", ns.tol), ("max_iter", ns.max_iter)) if v is not None}
        if overrides:
            cfg = cfg.model_copy(update={"solver": cfg.solver.model_copy(update=overrides)})
            cfg = RunConfig.model_validate(cfg.model_dump(mode="json"))
        out_dir = _outputs(cfg, ns.out)
        if ns.command == "sweep":
            if ns.jobs < 1:
                raise ConfigError("--jobs must be >= 1")
            return _run_sweep(cfg, out_dir, ns.jobs)
        return _run_single(cfg, ns.command, out_dir)
    except (ConfigError, ValueError, OSError, IntegrationError) as exc:
        print(f"cbfed: error: {exc}", file=sys.stderr)
        return EXIT_ERROR


def main() -> None:
    sys.exit(run_command())
