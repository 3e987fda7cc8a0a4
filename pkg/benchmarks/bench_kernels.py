"""Time the numba kernels against the pure-numpy fallback.

Each backend runs in its own interpreter because the choice is fixed at
import time by ``TAILBOUND_NUMBA``.  The numba timings exclude compilation
(one warm-up call per workload).

    python3 benchmarks/bench_kernels.py [--repeat 3]
"""
from __future__ import annotations

import argparse
import json
import os
import subprocess
import sys
import time

import numpy as np


def _workloads():
    from tailbound import geometry, kernels
    from tailbound.oracle import mc_probability
    from tailbound.presets import target, true_normal_constraints
    from tailbound.pricing import Duals, PricingBudget, PricingContext, grid_price, polish, random_start
    from tailbound.solver import DiscreteMixture, build_problem, evaluate_column

    problem = build_problem(true_normal_constraints(), target("S1"), 5.176e-4)
    ctx = PricingContext(problem, 96)
    rng = np.random.default_rng(0)
    duals = Duals(norm=0.05, capX=0.0, capY=0.0, rows=rng.normal(0, 0.05, problem.n), omega=1.0)
    atoms = [random_start(ctx, np.random.default_rng([1, i])) for i in range(400)]
    mixture = DiscreteMixture(atoms[:20], np.full(20, 0.05))
    g = geometry.RareEventBoundary.affine(2.0, 0.0, 0.0)

    def columns():
        return sum(evaluate_column(problem, a).objective_coeff for a in atoms)

    def dp():
        return grid_price(ctx, duals, PricingBudget())[1]

    def nelder_mead():
        return sum(polish(ctx, duals, a, 1500)[1] for a in atoms[:4])

    def sampling():
        return mc_probability(mixture, problem.boundary, 200_000, seed=1)[0]

    def three_step():
        return sum(geometry.step_objective(geometry.three_step_subproblem(g, 0.0, 1.0, 0.0, 3.0, m, 0.0), g, 0.0)
                   for m in np.linspace(0.2, 1.5, 6))

    return {"evaluate_column x400": columns, "dp grid pricing": dp, "nelder-mead polish x4": nelder_mead,
            "staircase sampling 2e5": sampling, "three-step x6": three_step}, kernels.USE_NUMBA


def child(repeat: int) -> None:
    work, numba_on = _workloads()
    out = {"numba": numba_on, "timings": {}, "values": {}}
    for name, fn in work.items():
        val = fn()   # warm-up (jit compile / cache load)
        best = min(_timed(fn) for _ in range(repeat))
        out["timings"][name] = best
        out["values"][name] = float(val)
    print(json.dumps(out))


def _timed(fn) -> float:
    t = time.perf_counter()
    fn()
    return time.perf_counter() - t


def run_backend(flag: str, repeat: int) -> dict:
    env = dict(os.environ, TAILBOUND_NUMBA=flag)
    res = subprocess.run([sys.executable, __file__, "--child", "--repeat", str(repeat)], env=env,
                         capture_output=True, text=True, check=True)
    return json.loads(res.stdout.strip().splitlines()[-1])


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=3)
    ap.add_argument("--child", action="store_true", help=argparse.SUPPRESS)
    args = ap.parse_args()
    if args.child:
        child(args.repeat)
        return
    jit = run_backend("1", args.repeat)
    ref = run_backend("0", args.repeat)
    # the polish rows use different simplex implementations, so only they may differ visibly
    print(f"{'workload':<26}{'numba [s]':>12}{'numpy [s]':>12}{'speedup':>10}{'rel diff':>11}")
    for name, t_jit in jit["timings"].items():
        t_np = ref["timings"][name]
        a, b = jit["values"][name], ref["values"][name]
        rel = abs(a - b) / max(abs(a), abs(b), 1e-300)
        print(f"{name:<26}{t_jit:>12.4f}{t_np:>12.4f}{t_np / t_jit:>9.1f}x{rel:>11.1e}")


if __name__ == "__main__":
    main()
