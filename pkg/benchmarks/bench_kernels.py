"""Times the compiled kernels against the pure-Python fallback.

    python benchmarks/bench_kernels.py [--repeat N]

Both backends are run on identical inputs and their outputs are compared
before any timing is reported.
"""
import argparse
import random
import timeit

import numpy as np

from libblank import kernels


def random_graph(rng, n, out_degree=2):
    ptr, idx = [0], []
    for v in range(n):
        # keep every node reachable from 0 with a spine edge
        succ = {v + 1} if v + 1 < n else set()
        succ.update(rng.randrange(n) for _ in range(out_degree - 1))
        idx.extend(sorted(succ))
        ptr.append(len(idx))
    return np.array(ptr, dtype=np.int64), np.array(idx, dtype=np.int64)


def split_table(rng, rows, cols, classes):
    X = np.array([[rng.randint(0, 50) for _ in range(cols)] for _ in range(rows)],
                 dtype=np.float64)
    y = np.array([rng.randrange(classes) for _ in range(rows)], dtype=np.int64)
    return X, y


def bench(label, fn, backends, repeat):
    results = {b: fn(b) for b in backends}
    first = results[backends[0]]
    for b in backends[1:]:
        same = list(results[b]) == list(first) if not isinstance(first, tuple) \
            else results[b][:2] == first[:2]
        if not same:
            raise SystemExit(f"{label}: backends disagree")
    times = {b: min(timeit.repeat(lambda b=b: fn(b), number=1, repeat=repeat)) for b in backends}
    base = times["python"]
    parts = [f"{b} {times[b] * 1e3:8.2f} ms" + (f" ({base / times[b]:5.1f}x)" if b != "python" else "")
             for b in backends]
    print(f"{label:<34} " + "   ".join(parts))


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args()
    rng = random.Random(1)
    backends = kernels.available_backends()
    if "cython" not in backends:
        print("compiled kernels unavailable; timing the Python fallback only")
    for n in (100, 1000, 5000):
        ptr, idx = random_graph(rng, n)
        bench(f"immediate_dominators n={n}",
              lambda b, n=n, ptr=ptr, idx=idx: kernels.immediate_dominators(n, 0, ptr, idx, backend=b),
              backends, args.repeat)
    for rows, cols in ((200, 4), (2000, 6), (10000, 8)):
        X, y = split_table(rng, rows, cols, 12)
        bench(f"best_split rows={rows} cols={cols}",
              lambda b, X=X, y=y: kernels.best_split(X if b == "cython" else X.tolist(),
                                                     y if b == "cython" else y.tolist(), 12,
                                                     backend=b),
              backends, args.repeat)


if __name__ == "__main__":
    main()
