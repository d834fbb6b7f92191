"""Compiled vs Python kernels: transportation simplex and Hopf-Lax minimum.

    python3 benchmarks/bench_kernels.py [--repeat 3] [--quick]
"""

import argparse
import timeit

import numpy as np

from mgcurv import _kernels_py

try:
    from mgcurv import _kernels_cy
except ImportError:
    _kernels_cy = None


def simplex_instance(n, seed=0):
    rng = np.random.default_rng(seed)
    # planar point clouds, so the northwest-corner start is far from optimal
    x, y = rng.random((n, 2)), rng.random((n, 2))
    a, b = rng.random(n) + 0.1, rng.random(n) + 0.1
    return a / a.sum(), b / b.sum(), ((x[:, None, :] - y[None, :, :]) ** 2).sum(axis=2)


def hopf_lax_instance(n, seed=0):
    rng = np.random.default_rng(seed)
    x = np.sort(rng.random(n))
    return np.sin(6 * x), np.abs(x[:, None] - x[None, :])


def best_time(fn, repeat):
    return min(timeit.repeat(fn, number=1, repeat=repeat))


def main():
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--repeat", type=int, default=3)
    p.add_argument("--quick", action="store_true", help="small sizes only")
    args = p.parse_args()
    backends = {"python": _kernels_py}
    if _kernels_cy is not None:
        backends["cython"] = _kernels_cy
    else:
        print("compiled kernels not built; timing the Python backend only")

    sizes = (20, 50) if args.quick else (20, 50, 100, 200)
    print(f"{'kernel':<18}{'n':>6}" + "".join(f"{b:>12}" for b in backends) + f"{'speedup':>10}")
    for n in sizes:
        a, b, C = simplex_instance(n)
        t = {k: best_time(lambda m=m: m.transport_simplex(a, b, C), args.repeat) for k, m in backends.items()}
        costs = {k: float(np.sum(m.transport_simplex(a, b, C)[0] * C)) for k, m in backends.items()}
        assert max(costs.values()) - min(costs.values()) <= 1e-12
        row("simplex", n, t)
    for n in ((200, 500) if args.quick else (200, 500, 1000, 2000)):
        phi, D = hopf_lax_instance(n)
        t = {k: best_time(lambda m=m: m.hopf_lax_min(phi, D, 2.0, 2), args.repeat) for k, m in backends.items()}
        row("hopf_lax_min", n, t)


def row(name, n, t):
    speed = t["python"] / t["cython"] if "cython" in t else float("nan")
    print(f"{name:<18}{n:>6}" + "".join(f"{v * 1e3:>10.2f}ms" for v in t.values()) + f"{speed:>9.1f}x")


if __name__ == "__main__":
    main()
