"""Time the compiled and pure-Python metric kernels on the same inputs.

    python3 benchmarks/bench_kernels.py [--repeat 5] [--lengths 50,200,800]

Prints one row per (kernel, length) with the best-of-N wall time for each
backend and the speedup. Both backends are checked to agree before timing.
"""

import argparse
import time

import numpy as np

from season import kernels


def best_time(fn, repeat):
    best = float("inf")
    for _ in range(repeat):
        start = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - start)
    return best


def main(argv=None):
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--repeat", type=int, default=5)
    parser.add_argument("--lengths", default="50,200,800")
    parser.add_argument("--vocab", type=int, default=200)
    parser.add_argument("--seed", type=int, default=0)
    args = parser.parse_args(argv)

    backends = kernels.available_backends()
    if "cython" not in backends:
        print("compiled kernels are not built; only the python backend is available")
    rng = np.random.default_rng(args.seed)
    print(f"{'kernel':<18}{'length':>8}" + "".join(f"{b + ' (ms)':>16}" for b in backends)
          + (f"{'speedup':>10}" if len(backends) == 2 else ""))
    for n in (int(x) for x in args.lengths.split(",")):
        a = rng.integers(0, args.vocab, n).tolist()
        b = rng.integers(0, args.vocab, max(1, n // 4)).tolist()
        article = rng.integers(0, args.vocab // 4, n).tolist()
        summary = [article[i] for i in sorted(rng.choice(n, max(1, n // 4), replace=False))]
        cases = {
            "lcs_length": lambda be: kernels.lcs_length(a, b, backend=be),
            "greedy_fragments": lambda be: kernels.greedy_fragments(article, summary, backend=be),
        }
        for name, fn in cases.items():
            results = {be: fn(be) for be in backends}
            if len({str(r) for r in results.values()}) != 1:
                raise SystemExit(f"backends disagree on {name} at length {n}")
            times = {be: best_time(lambda: fn(be), args.repeat) for be in backends}
            row = f"{name:<18}{n:>8}" + "".join(f"{1e3 * times[be]:>16.3f}" for be in backends)
            if len(backends) == 2:
                row += f"{times['python'] / times['cython']:>9.1f}x"
            print(row)


if __name__ == "__main__":
    main()
