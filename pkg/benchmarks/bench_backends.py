"""Compare the compiled kernels with the numpy fallback.

Usage: python benchmarks/bench_backends.py [--trials 2000] [--repeat 3]
"""
import argparse
import time

import numpy as np

from hesssketch import _backend, _pycore
from hesssketch.datagen import SyntheticSpec, gen_factor


def best_of(fn, repeat):
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return min(times)


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--trials", type=int, default=2000)
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args()
    try:
        compiled = _backend.get("compiled")
    except ImportError:
        compiled = None
        print("compiled extension not built; timing the numpy fallback only")

    f = gen_factor(SyntheticSpec(5000, 100, "gaussian", 0))
    ids = np.arange(args.trials, dtype=np.int64)
    rng = np.random.default_rng(0)
    print(f"{'kernel':<34}{'python [s]':>12}{'compiled [s]':>14}{'speedup':>10}")
    cases = []
    for m in (10, 30, 50):
        sel = _pycore.splitmix_selectors(1, ids, f.n, m, True)
        cases.append((f"selectors m={m}", lambda mod, m=m: mod.splitmix_selectors(1, ids, f.n, m, True)))
        cases.append((f"trial_batch m={m}", lambda mod, sel=sel: mod.trial_batch(f.phi, sel)))
    for k in (10, 50):
        x = rng.standard_normal((args.trials // 4, k, k))
        a = x + x.transpose(0, 2, 1)
        cases.append((f"eigvalsh batch {a.shape[0]}x{k}x{k}", lambda mod, a=a: mod.sym_eigvalsh_batch(a)))
    for label, fn in cases:
        tp = best_of(lambda: fn(_pycore), args.repeat)
        if compiled is None:
            print(f"{label:<34}{tp:>12.4f}{'-':>14}{'-':>10}")
            continue
        tc = best_of(lambda: fn(compiled), args.repeat)
        print(f"{label:<34}{tp:>12.4f}{tc:>14.4f}{tp / tc:>9.1f}x")


if __name__ == "__main__":
    main()
