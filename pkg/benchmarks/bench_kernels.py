"""Compare the compiled kernel core against the pure-NumPy fallback.

Run:  python benchmarks/bench_kernels.py

Times the hot kernels on training-shaped workloads and checks that both
backends agree numerically. The training-loop kernel (fit_head) is where the
compiled core pays off: one toy experiment campaign runs it thousands of
times.
"""

import time

import numpy as np

from pointsup._kernels import _pure

try:
    from pointsup._kernels import _core
except ImportError:
    _core = None


def timeit(fn, repeat=5):
    best = float("inf")
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def bench(name, make_args, runs):
    rows = []
    for label, mod in (("compiled", _core), ("pure", _pure)):
        if mod is None:
            rows.append((label, None, None))
            continue
        args = make_args()
        fn = getattr(mod, name)
        out = fn(*args)
        t = timeit(lambda: [fn(*make_args()) for _ in range(runs)])
        rows.append((label, t / runs, out))
    return rows


def main():
    rng = np.random.default_rng(0)
    dims = (24, 16, 16, 16)
    total = sum((a + 1) * b for a, b in zip(dims, list(dims[1:]) + [1]))

    print(f"{'kernel':<28}{'compiled':>12}{'pure':>12}{'speedup':>9}   agreement")
    print("-" * 75)

    cases = []

    field = rng.standard_normal((224, 224))
    px = rng.uniform(0, 223, 50176)
    py = rng.uniform(0, 223, 50176)
    cases.append(("bilinear_gather (50k pts)", "bilinear_gather", lambda: (field, px, py), 1))

    params = rng.standard_normal(total) * 0.3
    x = rng.standard_normal((784, 24))
    cases.append(("mlp_forward (784 x 24)", "mlp_forward", lambda: (params, dims, x), 10))

    dz = rng.standard_normal(784)
    cases.append(("mlp_backward (784 x 24)", "mlp_backward", lambda: (params, dims, x, dz), 10))

    x10 = rng.standard_normal((10, 24))
    y10 = (rng.random(10) < 0.5).astype(float)
    theta0 = 0.1 * rng.standard_normal(total)
    lrs = 0.1 * 0.5 * (1 + np.cos(np.pi * np.arange(300) / 299))
    cases.append(
        ("fit_head (10 pts, 300 steps)", "fit_head", lambda: (x10, y10, dims, theta0, 300, lrs, 0.9, 1e-5, None), 1)
    )

    for title, name, make_args, runs in cases:
        rows = bench(name, make_args, runs)
        (l1, t1, o1), (l2, t2, o2) = rows
        if t1 is None:
            print(f"{title:<28}{'n/a':>12}{t2 * 1e3:>10.2f}ms   (compiled core not built)")
            continue
        if isinstance(o1, tuple):
            agree = max(float(np.max(np.abs(a - b))) for a, b in zip(o1, o2))
        else:
            agree = float(np.max(np.abs(np.asarray(o1) - np.asarray(o2))))
        print(
            f"{title:<28}{t1 * 1e3:>10.2f}ms{t2 * 1e3:>10.2f}ms{t2 / t1:>8.1f}x   max|diff|={agree:.2e}"
        )


if __name__ == "__main__":
    main()
