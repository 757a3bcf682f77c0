"""Compiled vs numpy-fallback timings for the cube kernels.

Usage: python3 benchmarks/bench_kernels.py [--n 200000] [--repeat 3] [--skip-bfs]
"""
from __future__ import annotations

import argparse
import time

import numpy as np

from cuberl import _kernels_py, cube, oracle

try:
    from cuberl import _kernels as compiled
except ImportError:  # extension not built
    compiled = None


def best_of(fn, repeat: int) -> float:
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return min(times)


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--n", type=int, default=200_000, help="states per rank/unrank batch")
    ap.add_argument("--repeat", type=int, default=3)
    ap.add_argument("--skip-bfs", action="store_true")
    args = ap.parse_args()

    rng = np.random.default_rng(0)
    idx = rng.integers(0, cube.N_STATES, size=args.n)
    states = _kernels_py.unrank_states(idx, cube.SLOT_STICKERS, cube.CUBIE_COLORS)
    perm_t, ori_t = oracle.coordinate_tables()

    cases = {
        "rank": lambda k: k.rank_states(states, cube.SLOT_STICKERS, cube.COLOR_LOOKUP),
        "unrank": lambda k: k.unrank_states(idx, cube.SLOT_STICKERS, cube.CUBIE_COLORS),
    }
    if not args.skip_bfs:
        cases["bfs (full table)"] = lambda k: k.bfs_depths(perm_t, ori_t)

    backends = {"python": _kernels_py}
    if compiled is not None:
        backends["compiled"] = compiled
    else:
        print("compiled extension not available; timing the fallback only")

    print(f"{'kernel':<18}" + "".join(f"{b:>12}" for b in backends) + ("     speedup" if compiled else ""))
    for name, fn in cases.items():
        t = {b: best_of(lambda k=k: fn(k), 1 if name.startswith("bfs") else args.repeat)
             for b, k in backends.items()}
        row = f"{name:<18}" + "".join(f"{t[b]:>11.3f}s" for b in backends)
        if compiled is not None:
            row += f"{t['python'] / t['compiled']:>11.1f}x"
        print(row)


if __name__ == "__main__":
    main()
