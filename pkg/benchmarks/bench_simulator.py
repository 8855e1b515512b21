"""Throughput of the pure-Python and compiled path kernels.

Runs the same batch through both kernels, checks that the outcomes are
bit-identical and reports paths per second.

    python benchmarks/bench_simulator.py --paths 20000
"""
from __future__ import annotations

import argparse
import time

import numpy as np

from parisian_levy import Scenario, reference_models
from parisian_levy.simulation import SimConfig
from parisian_levy.simulation._pykernel import BARRIER, PARISIAN
from parisian_levy.simulation.simulator import _params, get_kernel

CASES = (
    # name, model, mode, step
    ("cl_parisian", "cramer_lundberg", PARISIAN, None),
    ("cl_barrier", "cramer_lundberg", BARRIER, None),
    ("jd_parisian", "jump_diffusion", PARISIAN, 1e-3),
    ("jd_barrier", "jump_diffusion", BARRIER, 1e-3),
)


def _time(fn, repeat):
    best = float("inf")
    out = None
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = fn()
        best = min(best, time.perf_counter() - t0)
    return best, out


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.split("\n")[0])
    ap.add_argument("--paths", type=int, default=20_000, help="paths for the compiled kernel")
    ap.add_argument("--py-paths", type=int, default=2_000, help="paths for the Python kernel")
    ap.add_argument("--repeat", type=int, default=3)
    ap.add_argument("--seed", type=int, default=7)
    args = ap.parse_args(argv)

    py, _ = get_kernel("python")
    try:
        cc, _ = get_kernel("compiled")
    except ImportError as exc:
        raise SystemExit(f"compiled kernel unavailable: {exc}")

    models = reference_models()
    s = Scenario(q=0.05, r=1.0, a=-1.0, b=2.0, x=0.0)
    print(f"{'case':<12} {'python paths/s':>15} {'compiled paths/s':>17} {'speedup':>8}  identical")
    for name, model, mode, step in CASES:
        cfg = SimConfig(args.paths, seed=args.seed, euler_step=step)
        P = _params(models[model], s.q, s.r, s.a, s.b, s.x, mode, cfg)
        n_py = min(args.py_paths, args.paths)
        t_py, out_py = _time(lambda: py.run_batch_arrays(P, 0, n_py), 1)
        t_cc, out_cc = _time(lambda: cc.run_batch_arrays(P, 0, args.paths), args.repeat)
        same = all(np.array_equal(a, b[:n_py]) for a, b in zip(out_py, out_cc))
        r_py, r_cc = n_py / t_py, args.paths / t_cc
        print(f"{name:<12} {r_py:>15.0f} {r_cc:>17.0f} {r_cc / r_py:>7.1f}x  {same}")


if __name__ == "__main__":
    main()
