"""Command-line interface: arfp-berry <subcommand> --config <path> --out <path>."""

from __future__ import annotations

import argparse
import sys
import time
from pathlib import Path

import numpy as np

from .dressed import ConvergenceError, trap_center, validity_report
from .fields import ConfigError, DoubleWellSplitter, FieldConfig
from .gauge import (
    GaugeDiscontinuityError,
    default_window,
    geometric_phase_path,
    has_closed_form,
    phase_grid_scan,
    ring_phase,
    wrap_phase,
)
from .io import RunConfig, atomic_write, dump_json, envelope, grid_csv, load_run_config
from .oracle import (
    IntegrationError,
    TrajectorySpec,
    commensurate_period,
    convergence_study,
    evolve_exact,
)
from .spin import DegenerateFieldError, Gauge, spin_matrices

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC, EXIT_LOW_FIDELITY = 0, 2, 3, 4
NUMERIC_ERRORS = (DegenerateFieldError, ConvergenceError, IntegrationError, GaugeDiscontinuityError,
                  np.linalg.LinAlgError, FloatingPointError, ZeroDivisionError)


def _trajectory(run: RunConfig, cfg: FieldConfig, default_period: float | None = None) -> TrajectorySpec:
    block = dict(run.trajectory or {})
    if "waypoints" in block and block["waypoints"] is not None:
        block["waypoints"] = tuple(tuple(p) for p in block["waypoints"])
    if "kind" not in block:
        if isinstance(cfg, DoubleWellSplitter):
            block["kind"] = "splitter-ramp"
        else:
            tc = trap_center(cfg)
            block.update(kind="ring-circuit", rho=tc.rho_c, z=tc.z_c)
    if "period" not in block:
        if default_period is None:
            raise ConfigError("trajectory.period is required")
        block["period"] = default_period
    try:
        return TrajectorySpec(**block)
    except TypeError as exc:
        raise ConfigError(str(exc)) from None


def _sidecar(out: Path, suffix: str) -> Path:
    return out.with_suffix(suffix) if out.suffix else out.with_name(out.name + suffix)


# -- subcommands ----------------------------------------------------------

def cmd_scan_phase(run: RunConfig, out: Path) -> tuple[dict, dict, str]:
    cfg = run.field_config()
    rep = spin_matrices(run.spin)
    scan = run.scan
    if "window" in scan:
        window = scan["window"]
        if len(window) != 4 or not all(isinstance(v, (int, float)) for v in window):
            raise ConfigError("scan.window must be [rho_min, rho_max, z_min, z_max]")
    else:
        center = scan.get("center")
        if center is not None and len(center) != 2:
            raise ConfigError("scan.center must be [rho, z]")
        window = default_window(cfg, scan.get("half_width", 0.2), center)
    if not (window[1] > window[0] and window[3] > window[2]):
        raise ConfigError("scan window has zero area")
    res = scan.get("resolution", [101, 101])
    res = [res, res] if isinstance(res, int) else res
    if len(res) != 2 or not all(isinstance(v, int) and v >= 1 for v in res):
        raise ConfigError("scan.resolution must be one or two positive integers")
    route = scan.get("route", "analytic")
    if route not in ("analytic", "numeric"):
        raise ConfigError("scan.route must be 'analytic' or 'numeric'")
    grid = phase_grid_scan(cfg, window, tuple(res), run.branch, run.gauge, rep, route=route,
                           threads=run.threads)
    atomic_write(out, grid_csv(grid))
    data = {"path": out.name, "format": "csv", "columns": ["rho", "z", "gamma_n"],
            "order": "row-major, rho outer, z inner", "shape": list(grid.gamma.shape),
            "route": grid.route, "window": list(map(float, window)),
            "missing": int(np.isnan(grid.gamma).sum())}
    finite = grid.finite()
    if finite.size:
        data["statistics"] = {"std": grid.std(), "max_abs": grid.max_abs(), "mean": float(finite.mean())}
    if scan.get("figure", True):
        png = _sidecar(out, ".png")
        from .plotting import write_phase_map
        write_phase_map(grid, png)
        data["figure"] = png.name
    c = [(window[0] + window[1]) / 2, 0.0, (window[2] + window[3]) / 2]
    verdicts = {"all_points_finite": data["missing"] == 0}
    try:
        v = validity_report(cfg, lambda t: (np.array(c), np.zeros(3)), [0.0], Gauge.ROTATION, rep)
        verdicts["rwa_at_window_center"] = v.rwa_pass
    except NUMERIC_ERRORS:
        verdicts["rwa_at_window_center"] = None
    return data, verdicts, "ok"


def cmd_evolve(run: RunConfig, out: Path) -> tuple[dict, dict, str]:
    cfg = run.field_config()
    rep = spin_matrices(run.spin)
    traj = _trajectory(run, cfg)
    ev = run.evolve
    if ev.get("commensurate", True):
        traj = traj.with_period(commensurate_period(cfg, traj.period))
    if ev.get("initial", "floquet") not in ("floquet", "rwa"):
        raise ConfigError("evolve.initial must be 'floquet' or 'rwa'")
    kw = {"rep": rep, "tol": ev.get("tol", 1e-10), "gauge": run.gauge,
          "initial": ev.get("initial", "floquet"),
          "nonadiabatic_correction": ev.get("nonadiabatic_correction", False),
          "steps_per_period": ev.get("steps_per_period", 40)}
    min_fid = ev.get("min_fidelity", 0.5)
    res = evolve_exact(cfg, traj, run.branch, **kw)
    data = {"trajectory": traj.to_dict(), "result": res.to_dict()}
    verdicts = {"norm_drift_ok": res.norm_drift < 1e-9, "fidelity_ok": res.fidelity > min_fid,
                "validity_pass": res.validity_pass}
    doublings = ev.get("doublings", 0)
    if doublings:
        table = convergence_study(cfg, traj, run.branch, doublings,
                                  workers=max(ev.get("workers", 1), run.threads), **kw)
        data["convergence"] = {"rows": table.rows, "monotone": table.monotone,
                               "shrink_factor": table.shrink_factor}
        verdicts["convergence_monotone"] = table.monotone
    status = "ok" if res.fidelity > min_fid else "low-fidelity"
    return data, verdicts, status


def cmd_trap_center(run: RunConfig, out: Path) -> tuple[dict, dict, str]:
    cfg = run.field_config()
    tc = trap_center(cfg)
    d = tc.to_dict()
    verdicts = {"converged": True}
    if tc.analytic is not None:
        verdicts["matches_analytic"] = tc.analytic_distance < 1e-6
    return d, verdicts, "ok"


def cmd_validity(run: RunConfig, out: Path) -> tuple[dict, dict, str]:
    cfg = run.field_config()
    rep = spin_matrices(run.spin)
    vb = run.validity
    traj = _trajectory(run, cfg, vb.get("period", 1.0e4))
    ts = np.linspace(0.0, traj.period, vb.get("samples", 33))
    rep_v = validity_report(cfg, traj.motion(cfg), ts, run.gauge, rep,
                            rwa_threshold=vb.get("rwa_threshold", 0.15),
                            adiabatic_threshold=vb.get("adiabatic_threshold", 0.1))
    d = rep_v.to_dict()
    d["trajectory"] = traj.to_dict()
    return d, {"rwa": rep_v.rwa_pass, "adiabatic": rep_v.adiabatic_pass}, "ok"


def cmd_gauge_compare(run: RunConfig, out: Path) -> tuple[dict, dict, str]:
    cfg = run.field_config()
    rep = spin_matrices(run.spin)
    traj = _trajectory(run, cfg, 2000.0)
    if not traj.is_closed:
        raise ConfigError("gauge-compare needs a closed trajectory")
    path = traj.path(cfg)
    samples = run.compare.get("samples", 1024)
    phases = {}
    for g in Gauge:
        try:
            phases[g.value] = geometric_phase_path(cfg, path, run.branch, g, rep, samples=samples).gamma
        except GaugeDiscontinuityError as exc:
            phases[g.value] = None
            phases[g.value + "_error"] = str(exc)
    vals = [v for k, v in phases.items() if not k.endswith("_error") and v is not None]
    data = {"path_phases": phases}
    if traj.kind == "ring-circuit" and has_closed_form(cfg):
        data["analytic"] = ring_phase(cfg, traj.rho, traj.z, run.branch, traj.winding)
        vals.append(data["analytic"])
    dev = max((abs(wrap_phase(a - b)) for a in vals for b in vals), default=0.0)
    data["max_deviation"] = dev
    verdicts = {"numeric_invariant": dev < 1e-6}
    if run.compare.get("oracle", False):
        t = traj.with_period(commensurate_period(cfg, traj.period))
        ex = {g.value: evolve_exact(cfg, t, run.branch, rep, gauge=g, check_validity=False)
              .geometric_phase_extracted for g in Gauge}
        odev = max(abs(wrap_phase(a - b)) for a in ex.values() for b in ex.values())
        data["oracle"] = {"extracted": ex, "max_deviation": odev}
        verdicts["oracle_invariant"] = odev < 1e-4
    return data, verdicts, "ok"


COMMANDS = {
    "scan-phase": cmd_scan_phase,
    "evolve": cmd_evolve,
    "trap-center": cmd_trap_center,
    "validity": cmd_validity,
    "gauge-compare": cmd_gauge_compare,
}


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="arfp-berry",
                                description="Geometric phases of atoms in adiabatic rf potentials.")
    sub = p.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        s = sub.add_parser(name)
        s.add_argument("--config", required=True, help="run-configuration JSON")
        s.add_argument("--out", required=True, help="output path")
        s.add_argument("--gauge", choices=["rotation", "cylindrical", "smooth"])
        s.add_argument("--branch", type=float, help="adiabatic branch n")
        s.add_argument("--threads", type=int, help="worker count for scans and sweeps")
        if name == "validity":
            s.add_argument("--rwa-threshold", type=float)
            s.add_argument("--adiabatic-threshold", type=float)
    return p


def _apply_flags(run: RunConfig, args) -> RunConfig:
    from .io import parse_run_config

    doc = run.to_dict()
    if args.gauge:
        doc["gauge"] = args.gauge
    if args.branch is not None:
        doc["branch"] = int(args.branch) if float(args.branch).is_integer() else args.branch
    if args.threads is not None:
        doc["threads"] = args.threads
    for flag, key in (("rwa_threshold", "rwa_threshold"), ("adiabatic_threshold", "adiabatic_threshold")):
        v = getattr(args, flag, None)
        if v is not None:
            doc.setdefault("validity", {})[key] = v
    return parse_run_config(doc)


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_CONFIG if exc.code else EXIT_OK
    out = Path(args.out)
    t0 = time.perf_counter()
    try:
        run = _apply_flags(load_run_config(args.config), args)
        data, verdicts, status = COMMANDS[args.command](run, out)
    except ConfigError as exc:
        print(f"arfp-berry: configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except NUMERIC_ERRORS as exc:
        print(f"arfp-berry: numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    wall = time.perf_counter() - t0
    env = envelope(args.command, run, wall_time=wall, verdicts=verdicts, data=data, status=status)
    target = _sidecar(out, ".json") if args.command == "scan-phase" else out
    atomic_write(target, dump_json(env))
    if status == "low-fidelity":
        print("arfp-berry: final fidelity below threshold; result written and marked",
              file=sys.stderr)
        return EXIT_LOW_FIDELITY
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
