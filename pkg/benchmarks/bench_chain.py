"""Compare the compiled and pure-Python Metropolis kernels on identical inputs.

    python3 benchmarks/bench_chain.py [--steps N] [--states K] [--repeat R]

Both kernels consume the same pre-drawn uniforms, so besides timing the script
checks that the two trajectories agree step for step.
"""

import argparse
import sys
import time

import numpy as np

from kstruct.rng import make_rng
from kstruct.sampler import _chain_py

try:
    from kstruct.sampler import _chain_ext
except ImportError:
    _chain_ext = None


def best_time(fn, repeat):
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return min(times)


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--steps", type=int, default=200_000)
    ap.add_argument("--states", type=int, default=20)
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args(argv)

    rng = make_rng(0, 0)
    acts = np.sort(10.0 * rng.random(args.states))[::-1].copy()
    temps = np.geomspace(10.0, 1e-3, args.steps)
    uniforms = rng.random((args.steps, 2))

    results = {}
    kernels = {"python": _chain_py.run_chain}
    if _chain_ext is not None:
        kernels["cython"] = _chain_ext.run_chain
    for name, fn in kernels.items():
        for kind, label in ((_chain_py.NEIGHBOR_STEP, "neighbor"), (_chain_py.UNIFORM_JUMP, "uniform")):
            states = np.empty(args.steps, dtype=np.int64)
            accepted = np.empty(args.steps, dtype=np.uint8)
            t = best_time(lambda: fn(acts, 0, kind, temps, uniforms, states, accepted), args.repeat)
            results[name, label] = (t, states.copy(), accepted.copy())
            print(f"{name:>7} {label:>9}: {t:8.4f} s  ({args.steps / t / 1e6:7.2f} M steps/s)")

    if _chain_ext is None:
        print("compiled kernel not built; only the fallback was timed")
        return 0
    ok = True
    for label in ("neighbor", "uniform"):
        tp, sp, ap_ = results["python", label]
        tc, sc, ac = results["cython", label]
        same = np.array_equal(sp, sc) and np.array_equal(ap_, ac)
        ok &= same
        print(f"{label:>9}: speedup {tp / tc:6.1f}x, trajectories identical: {same}")
    return 0 if ok else 1


if __name__ == "__main__":
    sys.exit(main())
