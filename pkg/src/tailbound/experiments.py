"""Repeated-run experiment loops on the bivariate normal benchmark."""
from __future__ import annotations

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace

import numpy as np

from .calibration import CalibrationConfig, SampleSet, calibrate, sample_normal
from .pricing import thread_cap
from .presets import TRUTH, target, true_normal_constraints
from .solver import SolveReport, SolverOptions, solve

log = logging.getLogger("tailbound.experiments")

QUANTILES = (0.0, 0.05, 0.25, 0.5, 0.75, 0.95, 1.0)


def run_seed(seed: int, run: int) -> int:
    return int(np.random.SeedSequence([seed, run]).generate_state(1)[0])


@dataclass
class RunRecord:
    run: int
    seed: int
    target: str
    value: float
    best_c: float
    status: str
    error: str = ""
    report: SolveReport | None = None

    @property
    def completed(self) -> bool:
        return not self.error

    def row(self) -> dict:
        return {"run": self.run, "seed": self.seed, "target": self.target, "value": self.value,
                "best_c": self.best_c, "status": self.status, "truth": TRUTH[self.target],
                "covers_truth": int(self.value >= TRUTH[self.target]), "error": self.error}


def _opts_for(opts: SolverOptions, seed: int) -> SolverOptions:
    return replace(opts, budget=replace(opts.budget, seed=seed))


def _run_one(run, seed, name, job):
    try:
        rep = job(seed)
        return RunRecord(run, seed, name, rep.value, rep.best_c, rep.status, report=rep)
    except Exception as exc:   # a failed run is recorded, the loop continues
        log.warning("run %d failed: %s", run, exc)
        return RunRecord(run, seed, name, math.nan, math.nan, "error", error=f"{type(exc).__name__}: {exc}")


def _loop(reps, seed, name, job, workers):
    workers = min(workers or thread_cap(), max(reps, 1))
    seeds = [run_seed(seed, r) for r in range(reps)]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(lambda r: _run_one(r, seeds[r], name, job), range(reps)))


def true_distribution_runs(name: str, reps: int = 50, seed: int = 0, opts: SolverOptions = SolverOptions(),
                           c_grid=1, rel: float = 0.005, box_bound: float | None = None,
                           workers: int | None = None) -> list:
    """Solve the true-moment instance ``reps`` times with independently seeded pricing."""
    cs = true_normal_constraints(rel)
    bnd = target(name)
    return _loop(reps, seed, name, lambda s: solve(cs, bnd, c_grid, _opts_for(opts, s), box_bound), workers)


def data_driven_runs(name: str, m: int = 100_000, preset: str = "95", reps: int = 50, seed: int = 0,
                     alpha: float = 0.05, opts: SolverOptions = SolverOptions(), c_grid=3,
                     bootstrap_reps: int = 1000, box_bound: float | None = None,
                     workers: int | None = None) -> list:
    """Fresh sample, calibration and solve per run."""
    bnd = target(name)

    def job(s):
        pts = sample_normal(m, s)
        cfg = CalibrationConfig.from_preset(preset, alpha=alpha, bootstrap_reps=bootstrap_reps, rng_seed=s)
        cs = calibrate(SampleSet(pts), cfg)
        rep = solve(cs, bnd, c_grid, _opts_for(opts, s), box_bound)
        rep.diagnostics["constraints"] = cs.to_dict()
        return rep

    return _loop(reps, seed, name, job, workers)


def summarize(records: list) -> dict:
    vals = np.array([r.value for r in records if r.completed and np.isfinite(r.value)])
    name = records[0].target if records else ""
    out = {"target": name, "runs": len(records), "completed": sum(r.completed for r in records),
           "truth": TRUTH.get(name, math.nan)}
    for q in QUANTILES:
        out[f"q{int(round(q * 100)):02d}"] = float(np.quantile(vals, q)) if vals.size else math.nan
    out["covers_truth_fraction"] = float(np.mean(vals >= out["truth"])) if vals.size else math.nan
    return out
