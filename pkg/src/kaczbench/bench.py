"""Calibrate-then-time measurement protocol.

Phase one determines, for each (method, system), the number of
iterations needed to reach a squared error below epsilon against the
reference solution, checking after every iteration; the per-seed counts
are aggregated by median.  Phase two re-runs the method for exactly that
many iterations with no stopping checks inside the loop and records
wall-clock times over the configured seeds, after one untimed warm-up
run to populate caches.  Timing covers the iteration loop only; dataset
generation, calibration, and I/O are never inside the timed region.

Campaigns evaluate a methods-by-datasets grid from a JSON config and
emit one CSV row per cell.  The worker count is capped by the
``KZM_THREADS`` environment variable (default 1); the timed seeds of a
single cell always run sequentially.
"""

from __future__ import annotations

import csv
import dataclasses
import json
import logging
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .datasets import DatasetSpec, GeneratedSystem, generate
from .rng import derive_seed
from .solvers import (METHOD_IDS, DETERMINISTIC_METHODS, BreakdownError,
                      DivergenceError, SolverConfig, SolveRun, check_convergence,
                      solve)

log = logging.getLogger(__name__)

DEFAULT_EPSILON = 1e-8
DEFAULT_SEED_COUNT = 10
DEFAULT_ITERATION_CAP = 10_000_000

CSV_FIELDS = ("family", "method", "m", "n", "epsilon", "calibrated_k",
              "seed_count", "mean_time_ns", "std_time_ns",
              "mean_final_sq_error", "status")

STATUS_OK = "ok"
STATUS_NO_CONVERGENCE = "no-convergence"
STATUS_DIVERGED = "diverged"


class ConfigError(ValueError):
    """Campaign configuration is malformed; the message names the field."""


@dataclass
class CalibrationResult:
    method: str
    per_seed_k: list
    k: Optional[int]
    status: str


@dataclass
class BenchRecord:
    """One benchmark cell: method x dataset x size."""

    family: str
    method: str
    m: int
    n: int
    epsilon: float
    calibrated_k: Optional[int]
    seed_count: int
    times_ns: list = field(default_factory=list)
    mean_time_ns: Optional[float] = None
    std_time_ns: Optional[float] = None
    mean_final_sq_error: Optional[float] = None
    status: str = STATUS_OK
    x_mean: Optional[np.ndarray] = None


def run_seeds(master_seed: int, count: int) -> list:
    """Per-run seeds: master seed XOR run index."""
    return [derive_seed(master_seed, r) for r in range(count)]


def _run_once(method: str, gen: GeneratedSystem, iterations: int, seed: int,
              reference=None, epsilon=None) -> SolveRun:
    config = SolverConfig(method=method, max_iterations=iterations, seed=seed)
    return solve(gen.system, config, reference=reference, epsilon=epsilon)


def calibrate(method: str, gen: GeneratedSystem, epsilon: float,
              seeds: Sequence[int], cap: int = DEFAULT_ITERATION_CAP) -> CalibrationResult:
    """First iteration count reaching squared error < epsilon, per seed.

    Deterministic methods run once.  A seed that fails to converge
    within ``cap`` iterations marks the whole cell as non-convergent.
    The aggregate is the median, rounded up to stay an iteration count.
    """
    reference = gen.reference
    if reference is None:
        raise ValueError("calibration needs a reference solution")
    if method in DETERMINISTIC_METHODS:
        seeds = seeds[:1]
    per_seed = []
    for seed in seeds:
        try:
            run = _run_once(method, gen, cap, seed, reference, epsilon)
        except (DivergenceError, BreakdownError):
            per_seed.append(None)
            continue
        converged = check_convergence(run.x_final, reference, epsilon)
        per_seed.append(run.iterations_used if converged else None)
    if any(k is None for k in per_seed):
        return CalibrationResult(method, per_seed, None, STATUS_NO_CONVERGENCE)
    k = int(math.ceil(float(np.median(per_seed))))
    return CalibrationResult(method, per_seed, max(k, 1), STATUS_OK)


def timed_run(method: str, gen: GeneratedSystem, k: int,
              seeds: Sequence[int], epsilon: float = DEFAULT_EPSILON) -> BenchRecord:
    """Time ``len(seeds)`` fixed-budget runs of exactly k iterations."""
    reference = gen.reference
    record = BenchRecord(
        family=gen.spec.family.upper(), method=method,
        m=gen.system.A.m, n=gen.system.A.n,
        epsilon=epsilon, calibrated_k=k, seed_count=len(seeds))
    _run_once(method, gen, k, seeds[0])  # warm-up, untimed
    finals = []
    errors = []
    for seed in seeds:
        try:
            run = _run_once(method, gen, k, seed)
        except (DivergenceError, BreakdownError) as exc:
            log.warning("%s seed %d diverged: %s", method, seed, exc)
            record.status = STATUS_DIVERGED
            continue
        record.times_ns.append(run.wall_time_ns)
        finals.append(run.x_final)
        if reference is not None:
            d = run.x_final - reference
            errors.append(float(d @ d))
    if record.times_ns:
        record.mean_time_ns = float(np.mean(record.times_ns))
        record.std_time_ns = float(np.std(record.times_ns))
    if finals:
        record.x_mean = np.mean(finals, axis=0)
    if errors:
        record.mean_final_sq_error = float(np.mean(errors))
    return record


def bench_cell(method: str, gen: GeneratedSystem, epsilon: float,
               seeds: Sequence[int], cap: int = DEFAULT_ITERATION_CAP) -> BenchRecord:
    """Calibrate one (method, system) cell, then time it."""
    calibration = calibrate(method, gen, epsilon, seeds, cap)
    if calibration.status != STATUS_OK:
        return BenchRecord(
            family=gen.spec.family.upper(), method=method,
            m=gen.system.A.m, n=gen.system.A.n, epsilon=epsilon,
            calibrated_k=None, seed_count=len(seeds),
            status=calibration.status)
    return timed_run(method, gen, calibration.k, seeds, epsilon)


# ---------------------------------------------------------------------------
# Campaigns.
# ---------------------------------------------------------------------------

def _require(config: dict, key: str, kind, path: str = ""):
    where = f"{path}.{key}" if path else key
    if key not in config:
        raise ConfigError(f"{where}: missing required field")
    value = config[key]
    if not isinstance(value, kind):
        raise ConfigError(f"{where}: expected {kind.__name__}, got {type(value).__name__}")
    return value


def parse_campaign_config(config: dict) -> dict:
    """Validate a campaign config, reporting the offending field path."""
    datasets = _require(config, "datasets", list)
    if not datasets:
        raise ConfigError("datasets: must list at least one dataset")
    specs = []
    for idx, entry in enumerate(datasets):
        where = f"datasets[{idx}]"
        if not isinstance(entry, dict):
            raise ConfigError(f"{where}: expected an object")
        family = _require(entry, "family", str, where).lower()
        m = _require(entry, "m", int, where)
        n = _require(entry, "n", int, where)
        seed = _require(entry, "seed", int, where)
        try:
            specs.append(DatasetSpec(family=family, m_max=m, n_max=n, seed=seed))
        except ValueError as exc:
            raise ConfigError(f"{where}: {exc}") from exc
    methods = _require(config, "methods", list)
    for idx, method in enumerate(methods):
        if method not in METHOD_IDS:
            raise ConfigError(f"methods[{idx}]: unknown method id {method!r}")
    epsilon = float(config.get("epsilon", DEFAULT_EPSILON))
    if not epsilon > 0:
        raise ConfigError("epsilon: must be positive")
    seeds = int(config.get("seeds", DEFAULT_SEED_COUNT))
    if seeds < 1:
        raise ConfigError("seeds: must be >= 1")
    cap = int(config.get("iteration_cap", DEFAULT_ITERATION_CAP))
    if cap < 1:
        raise ConfigError("iteration_cap: must be >= 1")
    master_seed = int(config.get("master_seed", 0))
    return {"specs": specs, "methods": list(methods), "epsilon": epsilon,
            "seeds": seeds, "iteration_cap": cap, "master_seed": master_seed}


def load_campaign_config(path: str) -> dict:
    with open(path, "r", encoding="utf-8") as fh:
        try:
            raw = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ConfigError(
                f"{path}: invalid JSON at line {exc.lineno} column {exc.colno}: {exc.msg}"
            ) from exc
    if not isinstance(raw, dict):
        raise ConfigError(f"{path}: top level must be an object")
    return parse_campaign_config(raw)


def _cell_task(args) -> BenchRecord:
    spec_kwargs, method, epsilon, seeds, cap = args
    gen = generate(DatasetSpec(**spec_kwargs))
    return bench_cell(method, gen, epsilon, seeds, cap)


def worker_count() -> int:
    value = os.environ.get("KZM_THREADS", "1")
    try:
        return max(1, int(value))
    except ValueError:
        log.warning("ignoring non-integer KZM_THREADS=%r", value)
        return 1


def run_campaign(parsed: dict, progress=None) -> list:
    """Evaluate every (dataset, method) cell of a parsed campaign config."""
    seeds = run_seeds(parsed["master_seed"], parsed["seeds"])
    cells = [(spec, method) for spec in parsed["specs"] for method in parsed["methods"]]
    records = []
    workers = worker_count()
    if workers > 1 and len(cells) > 1:
        tasks = [(dataclasses.asdict(spec), method, parsed["epsilon"], seeds,
                  parsed["iteration_cap"]) for spec, method in cells]
        with ProcessPoolExecutor(max_workers=workers) as pool:
            records = list(pool.map(_cell_task, tasks))
        if progress:
            for record in records:
                progress(record)
        return records
    generated = {}
    for spec, method in cells:
        if spec not in generated:
            generated[spec] = generate(spec)
        record = bench_cell(method, generated[spec], parsed["epsilon"], seeds,
                            parsed["iteration_cap"])
        records.append(record)
        if progress:
            progress(record)
    return records


def _format_field(value) -> str:
    if value is None:
        return ""
    if isinstance(value, float):
        return repr(value)
    return str(value)


def write_csv(records: Sequence[BenchRecord], path: str) -> None:
    with open(path, "w", newline="", encoding="ascii") as fh:
        writer = csv.writer(fh)
        writer.writerow(CSV_FIELDS)
        for rec in records:
            writer.writerow([_format_field(getattr(rec, name)) for name in CSV_FIELDS])


def summary_rows(records: Sequence[BenchRecord]) -> list:
    """Methods ranked by mean time within each (family, m, n) group."""
    groups = {}
    for rec in records:
        groups.setdefault((rec.family, rec.m, rec.n), []).append(rec)
    rows = []
    for key in sorted(groups):
        ok = [r for r in groups[key] if r.status == STATUS_OK and r.mean_time_ns]
        ok.sort(key=lambda r: r.mean_time_ns)
        fastest = ok[0].mean_time_ns if ok else None
        for rank, rec in enumerate(ok, start=1):
            rows.append({
                "family": rec.family, "m": rec.m, "n": rec.n, "rank": rank,
                "method": rec.method, "calibrated_k": rec.calibrated_k,
                "mean_time_ns": rec.mean_time_ns,
                "relative_time": rec.mean_time_ns / fastest,
            })
        for rec in sorted((r for r in groups[key] if r.status != STATUS_OK),
                          key=lambda r: r.method):
            rows.append({
                "family": rec.family, "m": rec.m, "n": rec.n, "rank": "",
                "method": rec.method, "calibrated_k": "",
                "mean_time_ns": "", "relative_time": "",
            })
    return rows


def write_summary(records: Sequence[BenchRecord], path: str) -> None:
    fields = ("family", "m", "n", "rank", "method", "calibrated_k",
              "mean_time_ns", "relative_time")
    with open(path, "w", newline="", encoding="ascii") as fh:
        writer = csv.DictWriter(fh, fieldnames=fields)
        writer.writeheader()
        for row in summary_rows(records):
            writer.writerow({k: _format_field(v) if not isinstance(v, str) else v
                             for k, v in row.items()})
