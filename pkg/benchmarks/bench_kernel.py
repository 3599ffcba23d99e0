#!/usr/bin/env python3
"""Time the compiled chain stepper against the pure-numpy fallback.

The stepper is the hot loop of every energy sweep (one 6000-step delayed
integration per grid cell), which is why it ships as a Cython extension with
the numpy implementation as a behavioral reference. This script runs both
backends on the bundled scenarios, reports wall times and the speedup, and
verifies that the trajectories agree to 1e-12.

Usage: python benchmarks/bench_kernel.py [repeats]
"""

import sys
import time
from pathlib import Path

sys.path.insert(0, str(Path(__file__).resolve().parent.parent / "src"))

import numpy as np

from cavchain.kernel import HAVE_COMPILED
from cavchain.model import atc_chain, hv_chain
from cavchain.simulate import (LeadProfile, SimSettings, build_equilibrium,
                               simulate)


def bench(chain, label, repeats):
    eq = build_equilibrium(chain)
    lead, settings = LeadProfile(), SimSettings()
    results = {}
    for backend in ("compiled", "python"):
        if backend == "compiled" and not HAVE_COMPILED:
            print(f"{label:28s} compiled: extension not built, skipping")
            continue
        best = float("inf")
        for _ in range(repeats):
            t0 = time.perf_counter()
            traj = simulate(chain, eq, lead, settings, backend=backend)
            best = min(best, time.perf_counter() - t0)
        results[backend] = (best, traj)
        print(f"{label:28s} {backend:8s}: {best * 1e3:9.2f} ms")
    if len(results) == 2:
        (tc, trc), (tp, trp) = results["compiled"], results["python"]
        same = (np.allclose(trc.v, trp.v, atol=1e-12, rtol=0)
                and np.allclose(trc.s, trp.s, atol=1e-12, rtol=0))
        print(f"{label:28s} speedup x{tp / tc:6.1f}   trajectories agree: {same}")
        if not same:
            raise SystemExit("backend disagreement")
    print()


def main():
    repeats = int(sys.argv[1]) if len(sys.argv) > 1 else 3
    print(f"compiled kernel available: {HAVE_COMPILED}\n")
    bench(hv_chain(11, v_star=20.0), "hv chain (12 vehicles)", repeats)
    bench(atc_chain(10, v_star=25.0), "atc chain (12 vehicles)", repeats)
    bench(atc_chain(18, v_star=25.0), "atc chain (20 vehicles)", repeats)


if __name__ == "__main__":
    main()
