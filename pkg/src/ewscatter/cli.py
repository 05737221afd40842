"""Command-line entry point: ``ewscatter <subcommand> --config FILE [options]``."""
from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
import time
from pathlib import Path

import numpy as np

from .config import ConfigError, ExperimentConfig
from .ewsf import read_ewsf, write_ewsf
from .inversion import (
    correlation_curve,
    recover_phi_hat,
    reconstruct_strength,
    relative_l2,
)
from .lippmann import PlaneWave, VectorField3C, far_field, perpendicular, solve_full
from .randfield import Grid3, sample_potential
from .sweep import collect_sweeps, directions_for, run_sweep, write_manifest

log = logging.getLogger("ewscatter")


def _config(args) -> ExperimentConfig:
    cfg = ExperimentConfig.load(args.config) if args.config else ExperimentConfig().validate()
    if getattr(args, "output_dir", None):
        cfg = cfg.replace(output_dir=args.output_dir)
    return cfg


def _outdir(cfg) -> Path:
    p = Path(cfg.output_dir)
    p.mkdir(parents=True, exist_ok=True)
    return p


def _theta(args, cfg) -> np.ndarray:
    return directions_for(cfg)[args.direction]


def cmd_sample(args) -> int:
    cfg = _config(args)
    out = _outdir(cfg)
    t0 = time.perf_counter()
    paths = []
    for r in range(cfg.realizations):
        rho = sample_potential(cfg.field_spec(r))
        path = out / f"rho_r{r:04d}.ewsf"
        write_ewsf(path, rho.grid, rho.values)
        paths.append(str(path))
    write_manifest(out, cfg, {"seconds": time.perf_counter() - t0}, "sample", {"outputs": paths})
    print("\n".join(paths))
    return 0


def cmd_solve(args) -> int:
    cfg = _config(args)
    out = _outdir(cfg)
    theta = _theta(args, cfg)
    rho = sample_potential(cfg.field_spec(args.realization))
    kind = args.kind or cfg.kind
    wave = PlaneWave(kind, tuple(theta), args.omega, tuple(perpendicular(theta)) if kind == "S" else None)
    u, rep = solve_full(rho, wave, cfg.lame(), tol=cfg.tol, max_iter=cfg.max_iter)
    path = out / f"u_{kind}_d{args.direction:03d}_r{args.realization:04d}_w{args.omega!r}.ewsf"
    write_ewsf(path, u.grid, u.values)
    report = {"iterations": rep.iterations, "residual": rep.residual, "wall_time": rep.wall_time, "field": str(path)}
    write_manifest(out, cfg, {"seconds": rep.wall_time}, "solve", {"report": report})
    print(json.dumps(report))
    return 0


def cmd_farfield(args) -> int:
    cfg = _config(args)
    grid = cfg.grid()
    _, uvals = read_ewsf(args.field, expect_grid=grid)
    rho = sample_potential(cfg.field_spec(args.realization))
    theta = _theta(args, cfg)
    rec = far_field(rho, VectorField3C(grid, uvals), args.omega, cfg.lame(), -theta, theta)
    row = {"omega": rec.omega}
    for name, v in (("up", rec.uinf_p), ("us", rec.uinf_s)):
        for c, z in zip("xyz", v):
            row[f"{name}_{c}_re"], row[f"{name}_{c}_im"] = z.real, z.imag
    w = csv.DictWriter(sys.stdout, fieldnames=list(row))
    w.writeheader()
    w.writerow(row)
    return 0


def cmd_sweep(args) -> int:
    cfg = _config(args)
    res = run_sweep(cfg, max_jobs=args.max_jobs)
    print(json.dumps(res))
    return 0


def write_curves_csv(path, curves) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["direction", "theta_x", "theta_y", "theta_z", "Q", "tau", "re", "im", "stderr"])
        for d, c in enumerate(curves):
            for t, v, s in zip(c.taus, c.values, c.stderr):
                w.writerow([d, *map(repr, map(float, c.theta)), repr(c.Q), repr(float(t)), repr(v.real), repr(v.imag), repr(float(s))])


def cmd_invert(args) -> int:
    cfg = _config(args)
    out = _outdir(cfg)
    t0 = time.perf_counter()
    sweeps = collect_sweeps(cfg)
    Q = cfg.Q * 2**cfg.doublings
    curves = []
    for d in range(cfg.directions):
        sw = sweeps.get((d, args.realization, "born-1"))
        if sw is None:
            raise ConfigError(f"no born-1 sweep for direction {d}, realization {args.realization}; run 'sweep' first")
        curves.append(correlation_curve(sw, cfg.taus, cfg.m, cfg.kind, Q))
    write_curves_csv(out / "curves.csv", curves)
    est = recover_phi_hat(curves, cfg.lame(), cfg.m)
    lo, hi = cfg.grid().support_box()
    target = Grid3(tuple(lo), float(hi[0] - lo[0]), args.target_n)
    est = reconstruct_strength(est, target, taper_start=args.taper_start)
    write_ewsf(out / "phi_estimate.ewsf", target, est.phi.values)
    truth = cfg.strength().descriptor(target.points())
    summary = dict(est.diagnostics, relative_l2=relative_l2(est.phi.values, truth), Q=Q)
    write_manifest(out, cfg, {"seconds": time.perf_counter() - t0}, "invert", {"summary": summary})
    print(json.dumps(summary))
    return 0


def cmd_verify(args) -> int:
    import pytest

    root = Path(__file__).resolve().parents[2]
    target = root / "tests" / ("test_acceptance.py" if not args.all else "")
    extra = [] if args.slow else ["-m", "not slow"]
    return int(pytest.main([str(target), "-q", *extra]))


def cmd_report(args) -> int:
    """Concatenate every ``curves.csv`` under the given directories into one table."""
    rows = []
    for d in args.dirs:
        for path in sorted(Path(d).rglob("curves.csv")):
            with open(path, newline="") as fh:
                for r in csv.DictReader(fh):
                    r["run"] = str(path.parent)
                    rows.append(r)
    if not rows:
        print("no curves.csv found", file=sys.stderr)
        return 1
    out = Path(args.output)
    with open(out, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=["run"] + [k for k in rows[0] if k != "run"])
        w.writeheader()
        w.writerows(rows)
    print(out)
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="ewscatter", description="Elastic scattering by random potentials: forward sweeps and correlation-based inversion.")
    p.add_argument("--log-level", default="WARNING")
    sub = p.add_subparsers(dest="command", required=True)

    def with_config(sp):
        sp.add_argument("--config", help="key = value experiment file (defaults apply when omitted)")
        sp.add_argument("--output-dir", help="override output_dir from the config")
        return sp

    with_config(sub.add_parser("sample", help="write potential realizations as EWSF")).set_defaults(func=cmd_sample)

    sp = with_config(sub.add_parser("solve", help="one full solve at a frequency"))
    sp.add_argument("--omega", type=float, required=True)
    sp.add_argument("--kind", choices=["P", "S"])
    sp.add_argument("--direction", type=int, default=0)
    sp.add_argument("--realization", type=int, default=0)
    sp.set_defaults(func=cmd_solve)

    sp = with_config(sub.add_parser("farfield", help="backscatter far field of a stored total field"))
    sp.add_argument("--field", required=True)
    sp.add_argument("--omega", type=float, required=True)
    sp.add_argument("--direction", type=int, default=0)
    sp.add_argument("--realization", type=int, default=0)
    sp.set_defaults(func=cmd_farfield)

    sp = with_config(sub.add_parser("sweep", help="run (direction, frequency, realization) jobs; resumable"))
    sp.add_argument("--max-jobs", type=int, help="stop after this many jobs")
    sp.set_defaults(func=cmd_sweep)

    sp = with_config(sub.add_parser("invert", help="correlation curves, phi_hat recovery and reconstruction"))
    sp.add_argument("--realization", type=int, default=0)
    sp.add_argument("--target-n", type=int, default=32)
    sp.add_argument("--taper-start", type=float, default=1.0)
    sp.set_defaults(func=cmd_invert)

    sp = sub.add_parser("verify", help="run the acceptance suite")
    sp.add_argument("--slow", action="store_true", help="include the long negligibility run")
    sp.add_argument("--all", action="store_true", help="run every test module, not only acceptance")
    sp.set_defaults(func=cmd_verify)

    sp = sub.add_parser("report", help="merge curves.csv tables")
    sp.add_argument("dirs", nargs="+")
    sp.add_argument("--output", default="report.csv")
    sp.set_defaults(func=cmd_report)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=args.log_level.upper(), format="%(levelname)s %(name)s %(message)s")
    try:
        return args.func(args)
    except (ConfigError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
