"""Time the compiled RK4 kernel against the numpy fallback.

Usage: python benchmarks/bench_kernels.py [--n-points 201] [--steps 3000]
"""

import argparse
import time

import numpy as np

from cavsol import dynamics1d as d1
from cavsol import kernels
from cavsol.core import SimulationParams, build_ensemble


def run(backend, psi0, ham, w, steps, dt):
    t0 = time.perf_counter()
    out = kernels.propagate(psi0, *ham, w, chiN=-2.0, dt=dt, n_steps=steps,
                            sample_every=steps, backend=backend)
    return time.perf_counter() - t0, out[-1]


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--n-points", type=int, default=201)
    ap.add_argument("--steps", type=int, default=3000)
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args()

    params = SimulationParams(n_momentum=args.n_points)
    ens = build_ensemble(params)
    psi0 = d1.initial_state(ens).as_array()
    ham = d1._hamiltonian(ens, -2.0, None)
    backends = ["python"] + (["compiled"] if kernels.BACKEND == "compiled" else [])
    results = {}
    for b in backends:
        times = []
        for _ in range(args.repeat):
            dt_run, final = run(b, psi0, ham, ens.weights, args.steps, params.dt_natural)
            times.append(dt_run)
        results[b] = (min(times), final)
        rate = args.steps * args.n_points / min(times)
        print(f"{b:9s} best of {args.repeat}: {min(times):.3f} s  ({rate:.3g} point-steps/s)")
    if len(results) == 2:
        diff = np.max(np.abs(results["python"][1] - results["compiled"][1]))
        print(f"speed-up {results['python'][0] / results['compiled'][0]:.1f}x, "
              f"max |difference| {diff:.2e}")
    else:
        print("compiled kernel not built; only the numpy path was timed")


if __name__ == "__main__":
    main()
