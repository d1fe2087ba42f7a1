"""Time the numba and numpy kernel backends on the same workloads.

Each backend runs in its own interpreter because the choice is fixed at
import time by ROBUSTMCD_BACKEND. Usage::

    python benchmarks/bench_kernels.py [--repeat 3]
"""

import argparse
import json
import os
import subprocess
import sys

WORKER = r"""
import json, sys, time
import numpy as np
from robustmcd import backend, cstep_mcd, exact_mcd, functional_mcd, WeightedMeasure

repeat = int(sys.argv[1])
rng = np.random.default_rng(0)
cases = {
    "cstep n=1000 k=2": (lambda X: cstep_mcd(X, 0.5, starts=50, seed=1), rng.standard_normal((1000, 2))),
    "cstep n=5000 k=3": (lambda X: cstep_mcd(X, 0.75, starts=50, seed=1), rng.standard_normal((5000, 3))),
    "exact n=18 k=2": (lambda X: exact_mcd(X, 0.5), rng.standard_normal((18, 2))),
    "weighted n=2000 k=2": (
        lambda P: functional_mcd(P, 0.5, starts=50, seed=1),
        WeightedMeasure.normalized(rng.standard_normal((2000, 2)), rng.uniform(0.5, 1.0, 2000)),
    ),
}
out = {"backend": backend(), "cases": {}}
for name, (fn, data) in cases.items():
    fit = fn(data)  # warm-up, also triggers compilation
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fit = fn(data)
        times.append(time.perf_counter() - t0)
    out["cases"][name] = {"seconds": min(times), "det": fit.det}
print(json.dumps(out))
"""


def run_backend(name, repeat):
    env = dict(os.environ, ROBUSTMCD_BACKEND=name)
    proc = subprocess.run(
        [sys.executable, "-c", WORKER, str(repeat)], env=env, capture_output=True, text=True, check=True
    )
    return json.loads(proc.stdout)


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args()
    res = {b: run_backend(b, args.repeat) for b in ("numba", "numpy")}
    print(f"{'case':<22}{'numba [s]':>12}{'numpy [s]':>12}{'speedup':>10}  det match")
    for case in res["numba"]["cases"]:
        a, b = res["numba"]["cases"][case], res["numpy"]["cases"][case]
        match = abs(a["det"] - b["det"]) <= 1e-12 * abs(b["det"])
        print(f"{case:<22}{a['seconds']:>12.4f}{b['seconds']:>12.4f}{b['seconds'] / a['seconds']:>9.1f}x  {match}")


if __name__ == "__main__":
    main()
