"""Compare the compiled kernels with the numpy fallback.

    python3 benchmarks/bench_kernels.py [--pmax 20000] [--repeat 3]
"""

import argparse
import time

import numpy as np

from qml import kernels
from qml.lcentral import odd_primes_between, spf_table, truncation_lengths


def best_of(fn, repeat):
    times = []
    for _ in range(repeat):
        start = time.perf_counter()
        fn()
        times.append(time.perf_counter() - start)
    return min(times)


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--pmax", type=int, default=20000)
    parser.add_argument("--repeat", type=int, default=3)
    args = parser.parse_args()

    ps = odd_primes_between(3, args.pmax)
    ns = truncation_lengths(ps, 1e-8)
    spf = spf_table(int(ns.max()))
    p_big, n_big = int(ps[-1]), int(ns[-1])
    a = np.arange(1, 20001, dtype=np.int64)
    cases = {
        "batch_afe": lambda k: k.batch_afe(ps, ns, spf),
        "chi8p_fill": lambda k: k.chi8p_fill(p_big, n_big, spf),
        "chi8p_matrix": lambda k: k.chi8p_matrix(ps[:200], a[:2000]),
        "jacobi x20000": lambda k: [k.jacobi(int(x), 1000003) for x in a],
    }
    backends = kernels.available_backends()
    print(f"{len(ps)} primes up to {args.pmax}, N up to {int(ns.max())}; default backend {kernels.BACKEND}")
    print(f"{'kernel':<16}" + "".join(f"{name:>14}" for name in backends) + f"{'speedup':>10}")
    for label, fn in cases.items():
        times = {name: best_of(lambda: fn(k), args.repeat) for name, k in backends.items()}
        speed = times["python"] / times["compiled"] if "compiled" in times else float("nan")
        print(f"{label:<16}" + "".join(f"{t * 1e3:>12.2f}ms" for t in times.values()) + f"{speed:>9.1f}x")


if __name__ == "__main__":
    main()
