"""Compare the numba and numpy quadrature kernels.

Usage: python benchmarks/bench_kernels.py [--repeat N]

Times one full amplitude table (all modes, refinement included) per backend
at a few trajectories and reports the largest difference between backends.
"""

import argparse
import time

import numpy as np

from relgate import _kernels, amplitudes, model


def time_table(config, kernel, repeat):
    amplitudes.build_table(config, kernel=kernel)  # warm-up / JIT compile
    best = np.inf
    for _ in range(repeat):
        t0 = time.perf_counter()
        table = amplitudes.build_table(config, kernel=kernel)
        best = min(best, time.perf_counter() - t0)
    return best, table


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--modes", type=int, default=20)
    args = ap.parse_args()

    kernels = {"numpy": _kernels.mode_integrals_numpy}
    if _kernels.HAVE_NUMBA:
        kernels["numba"] = _kernels.mode_integrals_numba
    else:
        print("numba not available; timing numpy only")

    base = model.SimulationConfig().replace(**{"cavity.modes": args.modes})
    print(f"{'a':>5} {'T':>5} " + " ".join(f"{k:>10}" for k in kernels) + "   max |diff|")
    for a, T in [(0.5, 0.5), (1.0, 1.0), (2.3, 1.5)]:
        cfg = base.replace(**{"probe.a": a, "probe.T": T})
        times, tables = {}, {}
        for name, kern in kernels.items():
            times[name], tables[name] = time_table(cfg, kern, args.repeat)
        diff = 0.0
        if len(tables) == 2:
            t1, t2 = tables["numpy"], tables["numba"]
            diff = max(np.max(np.abs(t1.totals - t2.totals)), np.max(np.abs(t1.K - t2.K)))
        row = " ".join(f"{times[k] * 1e3:>8.2f}ms" for k in kernels)
        print(f"{a:>5} {T:>5} {row}   {diff:.2e}")


if __name__ == "__main__":
    main()
