"""Benchmark the compiled kernels against the NumPy fallback.

Run with ``python -m nsdiff.benchmark``. Workloads mirror the shapes the
particle filters produce (particles x sub-steps x 2 coordinates).
"""

import time

import numpy as np

from ._kernels import available_backends


def _setup_ou(n, k, rng):
    A = np.array([[0.8, 0.2], [-0.3, 0.8]])
    sig = np.array([[1.0, 0.5], [0.5, 1.0]])
    a = sig @ sig.T
    B = np.zeros((2, 2))
    dt = 1.0 / k
    taus = 1.0 - np.arange(k) * dt
    M = np.ascontiguousarray(np.broadcast_to(np.eye(2), (k, 2, 2)).copy())
    Sinv = np.ascontiguousarray(np.linalg.inv(a)[None] / taus[:, None, None])
    x0 = rng.standard_normal((n, 2))
    x1 = rng.standard_normal((n, 2))
    dW = rng.standard_normal((n, k, 2)) * np.sqrt(dt)
    return (A, a, sig, B, M, Sinv, x0, x1, dW, dt)


def _setup_lv(n, k, rng):
    x0 = rng.uniform(1.0, 3.0, (n, 2))
    x1 = rng.uniform(1.0, 3.0, (n, 2))
    dt = 1.0 / k
    dW = rng.standard_normal((n, k, 2)) * np.sqrt(dt)
    r10 = np.ascontiguousarray(0.6 - 0.3 * x0[:, 1])
    r11 = np.ascontiguousarray(0.6 - 0.3 * x1[:, 1])
    r20 = np.ascontiguousarray(0.2 * x0[:, 0] - 0.4)
    r21 = np.ascontiguousarray(0.2 * x1[:, 0] - 0.4)
    return (0.6, 0.3, 0.4, 0.2, 0.15, 0.15, False, r10, r11, r20, r21,
            x0, x1, dW, dt, 1.0)


def _time(fn, args, repeats=5):
    best = np.inf
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn(*args)
        best = min(best, time.perf_counter() - t0)
    return best


def main():
    backends = available_backends()
    rng = np.random.default_rng(0)
    cases = [
        ("ou_bridge", "N=50 K=256", _setup_ou(50, 256, rng)),
        ("ou_bridge", "N=5000 K=256", _setup_ou(5000, 256, rng)),
        ("lv_bridge", "N=50 K=256", _setup_lv(50, 256, rng)),
        ("lv_bridge", "N=1000 K=64", _setup_lv(1000, 64, rng)),
    ]
    print(f"{'kernel':<12} {'workload':<16} " +
          " ".join(f"{name:>12}" for name in backends) + "   speedup")
    for op, label, args in cases:
        times = {}
        results = {}
        for name, mod in backends.items():
            fn = getattr(mod, op)
            times[name] = _time(fn, args)
            results[name] = fn(*args)
        if len(results) == 2:
            a, b = results.values()
            a = a[0] if isinstance(a, tuple) else a
            b = b[0] if isinstance(b, tuple) else b
            if op.startswith("ou"):
                assert np.array_equal(a, b), "backends disagree"
            else:
                assert np.allclose(a, b, rtol=1e-10, atol=1e-10), \
                    "backends disagree"
        row = f"{op:<12} {label:<16} "
        row += " ".join(f"{times[n] * 1e3:10.2f}ms" for n in backends)
        if "compiled" in times and "python" in times:
            row += f"   {times['python'] / times['compiled']:6.1f}x"
        print(row)


if __name__ == "__main__":
    main()
