"""Time the compiled and numpy split search inside full boosting runs.

    python3 benchmarks/bench_split.py [--rows 2000 8000] [--features 20] [--trees 50]

Both backends must produce the same model; the script checks that before
reporting the speedup.
"""

import argparse
import time

import numpy as np

from affrank import _kernels
from affrank.models import GbdtConfig, gbdt_fit


def best_of(fn, repeats):
    times = []
    for _ in range(repeats):
        t0 = time.perf_counter()
        out = fn()
        times.append(time.perf_counter() - t0)
    return min(times), out


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--rows", type=int, nargs="+", default=[1000, 4000, 16000])
    ap.add_argument("--features", type=int, default=20)
    ap.add_argument("--trees", type=int, default=50)
    ap.add_argument("--depth", type=int, default=3)
    ap.add_argument("--repeats", type=int, default=3)
    args = ap.parse_args(argv)

    backends = _kernels.available_backends()
    print(f"backends: {', '.join(backends)}")
    print(f"{'rows':>7} " + " ".join(f"{b + ' s':>10}" for b in backends) + "   speedup  identical")
    cfg = GbdtConfig(n_trees=args.trees, max_depth=args.depth)
    for n in args.rows:
        rng = np.random.default_rng(n)
        X = rng.normal(size=(n, args.features)).round(2)
        y = X[:, 0] * X[:, 1] + np.sin(X[:, 2]) + rng.normal(0, 0.3, n)
        results = {b: best_of(lambda b=b: gbdt_fit(X, y, cfg, backend=b), args.repeats) for b in backends}
        times = [results[b][0] for b in backends]
        same = len({tuple(results[b][1].train_loss) for b in backends}) == 1
        speedup = results["python"][0] / results[backends[0]][0]
        print(f"{n:>7} " + " ".join(f"{t:>10.3f}" for t in times) + f"   {speedup:>7.1f}x  {same}")


if __name__ == "__main__":
    main()
