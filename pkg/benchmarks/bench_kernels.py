"""Compare the compiled and pure-Python kernel backends.

Run with ``python benchmarks/bench_kernels.py``. Each kernel is timed on the
same inputs under both backends and the outputs are checked for equality.
"""

from __future__ import annotations

import argparse
import time

import numpy as np

from calx import kernels
from calx.forest import fit_forest
from calx.synthetic import heteroscedastic


def best_of(fn, repeat: int) -> float:
    best = float("inf")
    for _ in range(repeat):
        start = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - start)
    return best


def main(argv=None) -> None:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--rows", type=int, default=5000)
    parser.add_argument("--trees", type=int, default=10)
    parser.add_argument("--repeat", type=int, default=3)
    args = parser.parse_args(argv)

    if "compiled" not in kernels.available():
        print("compiled backend not built; only the python backend is available")
        return

    rng = np.random.default_rng(0)
    data, _ = heteroscedastic(args.rows, seed=0, n_features=6)
    X, y = np.ascontiguousarray(data.rows), np.ascontiguousarray(data.targets)
    idx = np.arange(len(y), dtype=np.int64)
    feats = np.arange(X.shape[1], dtype=np.int64)
    labels = (rng.uniform(size=2000) < 0.5).astype(np.float64)
    weights = np.ones_like(labels)
    model = fit_forest(data, n_trees=args.trees, min_leaf=5, seed=0)

    cases = {
        "pava (n=2000)": lambda k: k.pava(labels, weights),
        f"best_split ({args.rows}x{X.shape[1]})": lambda k: k.best_split(X, y, idx, feats, X.shape[1], 1),
        f"forest_apply ({args.trees} trees)": lambda k: k.forest_apply(
            X, model.roots, model.feature, model.threshold, model.left, model.right, model.value),
        f"fit_forest ({args.trees} trees)": None,
    }

    print(f"{'kernel':<32}{'compiled [s]':>14}{'python [s]':>14}{'speedup':>10}  equal")
    for name, call in cases.items():
        timings, outputs = {}, {}
        for backend in ("compiled", "python"):
            if call is None:
                fn = lambda b=backend: fit_forest(data, n_trees=args.trees, min_leaf=5, seed=0, backend=b)
                outputs[backend] = fn().predict(X[:200])
                timings[backend] = best_of(fn, 1)
            else:
                k = kernels.get(backend)
                outputs[backend] = call(k)
                timings[backend] = best_of(lambda: call(k), args.repeat)
        equal = all(np.array_equal(np.asarray(a), np.asarray(b))
                    for a, b in zip(np.atleast_1d(outputs["compiled"]), np.atleast_1d(outputs["python"])))
        c, p = timings["compiled"], timings["python"]
        print(f"{name:<32}{c:>14.4f}{p:>14.4f}{p / c:>9.1f}x  {equal}")


if __name__ == "__main__":
    main()
