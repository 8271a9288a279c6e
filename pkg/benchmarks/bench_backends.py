"""Time the compiled kernels against the plain numpy lane.

Both lanes expose identical block functions, so each benchmark calls
them with the same inputs and reports wall time plus the speedup. The
compiled lane pays its JIT cost in an untimed warmup call.

Usage: python3 benchmarks/bench_backends.py [--particles N] [--steps K]
       [--nodes NX] [--pde-steps KP] [--repeats R]
"""
import argparse
import math
import time

import numpy as np

from ranklab.backends import numba_backend, numpy_backend
from ranklab.rng import replica_rng


def time_call(fn, repeats):
    best = math.inf
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def bench_particles(n, steps, repeats):
    rng = replica_rng(7, 100)
    pos = np.sort(rng.standard_normal(n))
    noise = rng.standard_normal((steps, n))
    u_nodes = np.array([0.0, 1.0])
    drift_nodes = np.array([0.1, -0.1])
    sigma_nodes = np.array([1.0, 1.3])
    args = (pos, noise, 1e-3, 0, u_nodes, drift_nodes, sigma_nodes)

    rows = []
    for name, lane in (("numpy", numpy_backend), ("numba", numba_backend)):
        if lane is None:
            continue
        lane.em_block(pos[:64].copy(), noise[:2, :64], 1e-3, 0,
                      u_nodes, drift_nodes, sigma_nodes)  # JIT warmup
        rows.append((name, time_call(lambda: lane.em_block(*args), repeats)))
    return rows


def bench_pde(nx, steps, repeats):
    x = np.linspace(-8.0, 8.0, nx)
    R0 = 0.5 * (1.0 + np.tanh(x))
    dx = float(x[1] - x[0])
    u_nodes = np.array([0.0, 1.0])
    sigma_nodes = np.array([math.sqrt(2.0), math.sqrt(2.0)])
    drift_nodes = np.array([0.2, 0.2])
    tt = np.array([0.0, 1.0])
    tx = np.array([-8.0, 8.0])
    th = np.zeros((2, 2))

    rows = []
    for name, lane in (("numpy", numpy_backend), ("numba", numba_backend)):
        if lane is None:
            continue
        warm = np.empty((3, nx))
        lane.pde_loop(R0, x, 2, 1e-4, dx, 1, u_nodes, sigma_nodes, drift_nodes,
                      False, tt, tx, th, False, True, 1e-12, warm)
        out = np.empty((steps + 1, nx))

        def run(lane=lane, out=out):
            lane.pde_loop(R0, x, steps, 1e-4, dx, 1, u_nodes, sigma_nodes,
                          drift_nodes, False, tt, tx, th, False, True, 1e-12, out)

        rows.append((name, time_call(run, repeats)))
    return rows


def print_table(title, rows):
    print(f"\n{title}")
    base = dict(rows).get("numpy")
    for name, seconds in rows:
        speedup = "" if base is None else f"  ({base / seconds:4.1f}x vs numpy)"
        print(f"  {name:6s} {seconds * 1e3:10.1f} ms{speedup}")


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--particles", type=int, default=20000)
    parser.add_argument("--steps", type=int, default=200)
    parser.add_argument("--nodes", type=int, default=1601)
    parser.add_argument("--pde-steps", type=int, default=5000)
    parser.add_argument("--repeats", type=int, default=3)
    args = parser.parse_args()

    print_table(
        f"particle stepping: N={args.particles}, {args.steps} steps",
        bench_particles(args.particles, args.steps, args.repeats),
    )
    print_table(
        f"CDF time loop: {args.nodes} nodes, {args.pde_steps} steps",
        bench_pde(args.nodes, args.pde_steps, args.repeats),
    )


if __name__ == "__main__":
    main()
