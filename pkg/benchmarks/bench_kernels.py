"""Time the compiled kernels against the numpy fallback.

    python3 benchmarks/bench_kernels.py [--repeat 5] [--iterations 200]

Prints one row per kernel plus a short end-to-end training run.
"""

import argparse
import timeit

import numpy as np

from amdlab import engine, kernels, operators as ops, worlds


def kernel_cases(rng):
    m = worlds.ring_world()
    X = rng.standard_normal((64, 11))
    W = rng.standard_normal((11, 64))
    b = rng.standard_normal(64)
    Z, _ = kernels.dense_forward(X, W, b, kernels.ACT_SILU)
    G = rng.standard_normal((64, 64))
    P = np.linalg.inv(m.covs)
    lognorm = -worlds.LOG_2PI - 0.5 * np.log(np.linalg.det(m.covs))
    logw = np.log(m.weights)
    pts = rng.standard_normal((256, 2)) * 3
    p, g, mm, v = (rng.standard_normal(4500) for _ in range(4))
    v = np.abs(v)
    return {
        "dense_forward 64x11->64": lambda: kernels.dense_forward(X, W, b, kernels.ACT_SILU),
        "dense_backward 64x11->64": lambda: kernels.dense_backward(X, W, Z, G, kernels.ACT_SILU),
        "adam_update 4500 params": lambda: kernels.adam_update(p, g, mm, v, 1e-4, 0.9, 0.999, 1e-8, 0.1, 0.001),
        "mixture_eval 256 pts x 8": lambda: kernels.mixture_eval(pts, m.means, P, lognorm, logw),
    }


def best(fn, number, repeat):
    return min(timeit.repeat(fn, number=number, repeat=repeat)) / number


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--iterations", type=int, default=200)
    args = ap.parse_args()
    if not kernels.cython_available():
        print("compiled kernels not built; only the numpy fallback can be timed")
    backends = ["python"] + (["cython"] if kernels.cython_available() else [])
    rows = {}
    for name in backends:
        kernels.use_backend(name)
        for case, fn in kernel_cases(np.random.default_rng(0)).items():
            rows.setdefault(case, {})[name] = best(fn, 200, args.repeat)
        cfg = engine.ExperimentConfig(iterations=args.iterations, snapshot_every=args.iterations,
                                      eval_samples=500, operator=ops.preset("amd", omega=1.0))
        rows.setdefault(f"train {args.iterations} iterations", {})[name] = best(
            lambda: engine.train(cfg), 1, max(1, args.repeat // 2))
    print(f"{'case':32s} {'python':>12s} {'cython':>12s} {'speedup':>8s}")
    for case, t in rows.items():
        py, cy = t["python"], t.get("cython")
        cy_s = f"{cy * 1e6:10.1f}us" if cy else f"{'-':>12s}"
        sp = f"{py / cy:7.2f}x" if cy else f"{'-':>8s}"
        print(f"{case:32s} {py * 1e6:10.1f}us {cy_s} {sp}")


if __name__ == "__main__":
    main()
