"""Resumable, seeded sweep over (direction, frequency, realization) jobs.

Each job writes one CSV row file and then an empty ``.done`` marker, so an
interrupted sweep resumes by running only the jobs without markers. Jobs
sharing a (direction, realization) pair are batched onto one worker so the
potential is sampled once per batch.
"""
from __future__ import annotations

import csv
import io
import json
import logging
import os
import platform
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import scipy

from . import __version__
from .config import ExperimentConfig
from .inversion import FrequencySweep, orders_at, relaxed_hemisphere
from .lippmann import born1_backscatter, kv
from .randfield import sample_potential

log = logging.getLogger(__name__)

WORKERS_ENV = "EWSCATTER_WORKERS"
RECORD_FIELDS = ["direction", "realization", "omega_index", "omega", "order_tag", "theta_x", "theta_y", "theta_z"] + [
    f"{p}_{c}_{part}" for p in ("up", "us") for c in "xyz" for part in ("re", "im")
]


@dataclass(frozen=True)
class Job:
    direction: int
    realization: int
    omega_index: int

    @property
    def stem(self) -> str:
        return f"d{self.direction:03d}_r{self.realization:04d}_w{self.omega_index:05d}"


def directions_for(cfg: ExperimentConfig) -> np.ndarray:
    return relaxed_hemisphere(cfg.directions)


def all_jobs(cfg: ExperimentConfig) -> list[Job]:
    nw = len(cfg.omegas())
    return [Job(d, r, k) for d in range(cfg.directions) for r in range(cfg.realizations) for k in range(nw)]


def record_dir(outdir) -> Path:
    return Path(outdir) / "records"


def is_done(outdir, job: Job) -> bool:
    return (record_dir(outdir) / f"{job.stem}.done").exists()


def pending_jobs(cfg: ExperimentConfig, outdir) -> list[Job]:
    return [j for j in all_jobs(cfg) if not is_done(outdir, j)]


def worker_count(cfg: ExperimentConfig) -> int:
    env = os.environ.get(WORKERS_ENV)
    if env:
        n = int(env)
        if n < 1:
            raise ValueError(f"{WORKERS_ENV} must be a positive integer")
        return n
    return cfg.workers


def _row(job: Job, omega: float, tag: str, theta, up, us) -> list:
    row = [job.direction, job.realization, job.omega_index, repr(float(omega)), tag] + [repr(float(t)) for t in theta]
    for v in (up, us):
        for c in v:
            row += [repr(float(c.real)), repr(float(c.imag))]
    return row


def _write_job(outdir, job: Job, rows: list) -> None:
    d = record_dir(outdir)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(RECORD_FIELDS)
    w.writerows(rows)
    tmp = d / f"{job.stem}.csv.tmp"
    tmp.write_text(buf.getvalue())
    tmp.replace(d / f"{job.stem}.csv")
    (d / f"{job.stem}.done").touch()


def run_batch(cfg_text: str, outdir: str, direction: int, realization: int, omega_indices: list) -> int:
    """Compute and persist the jobs of one (direction, realization) pair."""
    cfg = ExperimentConfig.loads(cfg_text)
    lame = cfg.lame()
    theta = directions_for(cfg)[direction]
    omegas = cfg.omegas()
    rho = sample_potential(cfg.field_spec(realization))
    idx = np.asarray(omega_indices)
    ws = omegas[idx]
    full_tags = [t for t in cfg.order_tags if t != "born-1"]
    b1p = born1_backscatter(rho, theta, ws, lame, "P") if "born-1" in cfg.order_tags else None
    b1s = born1_backscatter(rho, theta, ws, lame, "S") if "born-1" in cfg.order_tags else None
    for i, k in enumerate(idx):
        job = Job(direction, realization, int(k))
        rows = []
        if b1p is not None:
            rows.append(_row(job, ws[i], "born-1", theta, b1p[i], b1s[i]))
        if full_tags:
            per = orders_at(rho, theta, ws[i], lame, (cfg.kind,), cfg.tol, cfg.max_iter)
            for tag in full_tags:
                rows.append(_row(job, ws[i], tag, theta, *per[tag]))
        _write_job(outdir, job, rows)
    return len(idx)


def run_sweep(cfg: ExperimentConfig, outdir=None, max_jobs: int | None = None) -> dict:
    """Run all pending jobs; ``max_jobs`` stops early (used to exercise resume)."""
    outdir = Path(outdir or cfg.output_dir)
    record_dir(outdir).mkdir(parents=True, exist_ok=True)
    t0 = time.perf_counter()
    todo = pending_jobs(cfg, outdir)
    if max_jobs is not None:
        todo = todo[:max_jobs]
    batches: dict = {}
    for j in todo:
        batches.setdefault((j.direction, j.realization), []).append(j.omega_index)
    text = cfg.dumps()
    nworkers = worker_count(cfg)
    done = 0
    if nworkers == 1 or len(batches) <= 1:
        for (d, r), ks in sorted(batches.items()):
            done += run_batch(text, str(outdir), d, r, ks)
    else:
        with ProcessPoolExecutor(max_workers=nworkers) as pool:
            futs = [pool.submit(run_batch, text, str(outdir), d, r, ks) for (d, r), ks in sorted(batches.items())]
            done = sum(f.result() for f in futs)
    elapsed = time.perf_counter() - t0
    log.info(kv(event="sweep", jobs=done, pending_before=len(todo), workers=nworkers, seconds=elapsed))
    write_manifest(outdir, cfg, {"sweep_seconds": elapsed, "jobs_run": done, "workers": nworkers}, command="sweep")
    return {"jobs_run": done, "seconds": elapsed, "remaining": len(pending_jobs(cfg, outdir))}


def load_records(outdir) -> list[dict]:
    rows = []
    for path in sorted(record_dir(outdir).glob("*.csv")):
        with open(path, newline="") as fh:
            rows.extend(csv.DictReader(fh))
    return rows


def collect_sweeps(cfg: ExperimentConfig, outdir=None) -> dict:
    """``{(direction, realization, order_tag): FrequencySweep}`` from persisted records."""
    outdir = Path(outdir or cfg.output_dir)
    groups: dict = {}
    for row in load_records(outdir):
        key = (int(row["direction"]), int(row["realization"]), row["order_tag"])
        groups.setdefault(key, []).append(row)
    lame = cfg.lame()
    out = {}
    for key, rows in sorted(groups.items()):
        rows.sort(key=lambda r: int(r["omega_index"]))
        theta = [float(rows[0][f"theta_{c}"]) for c in "xyz"]
        vec = lambda r, p: [complex(float(r[f"{p}_{c}_re"]), float(r[f"{p}_{c}_im"])) for c in "xyz"]
        out[key] = FrequencySweep(
            theta,
            [float(r["omega"]) for r in rows],
            [vec(r, "up") for r in rows],
            [vec(r, "us") for r in rows],
            key[2],
            lame,
        )
    return out


def environment_versions() -> dict:
    return {
        "python": sys.version.split()[0],
        "numpy": np.__version__,
        "scipy": scipy.__version__,
        "ewscatter": __version__,
        "platform": platform.platform(),
    }


def write_manifest(outdir, cfg: ExperimentConfig, timings: dict, command: str, extra: dict | None = None) -> Path:
    """JSON run manifest: config echo, versions, seeds and timings."""
    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    doc = {
        "command": command,
        "config": cfg.dumps(),
        "seed": cfg.seed,
        "realizations": list(range(cfg.realizations)),
        "versions": environment_versions(),
        "timings": timings,
    }
    if extra:
        doc.update(extra)
    path = outdir / f"manifest_{command}.json"
    path.write_text(json.dumps(doc, indent=2, sort_keys=True))
    return path
