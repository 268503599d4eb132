"""Time the compiled kernels against the numpy fallback.

Run with ``python benchmarks/bench_kernels.py [--repeat N]``. Prints one
row per kernel with the best wall time of each backend and the speed-up.
"""
import argparse
import timeit

import numpy as np

from smallscat import _backend
from smallscat.capacitance import solve_density
from smallscat.mesh import icosphere


def cases(rng):
    pts = rng.uniform(size=(1000, 3))
    src = rng.uniform(size=(800, 3))
    tgt = rng.uniform(2, 3, size=(2000, 3))
    q = rng.normal(size=(800, 16)) + 1j * rng.normal(size=(800, 16))
    n = 3000
    cent = rng.uniform(size=(n, 3))
    w = rng.uniform(size=n)
    x = rng.normal(size=n)
    nodes = cent[:, None, :] + rng.normal(scale=1e-3, size=(n, 3, 3))
    ww = rng.uniform(size=(n, 3))
    return {
        "helmholtz_pairs (M=1000)": lambda b: _backend.helmholtz_pairs(pts, 0.8, backend=b),
        "helmholtz_potential (2000x800x16)":
            lambda b: _backend.helmholtz_potential(tgt, src, 0.8, q, backend=b),
        "slp_centroid_matvec (n=3000)":
            lambda b: _backend.slp_centroid_matvec(cent, w, x, backend=b),
        "slp_coarse_matvec (n=3000)":
            lambda b: _backend.slp_coarse_matvec(cent, nodes, ww, x, backend=b),
    }


def bench_density(backend, mesh):
    saved = _backend.kernels
    _backend.kernels = _backend.BACKENDS[backend]
    try:
        solve_density(mesh)
    finally:
        _backend.kernels = saved


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args(argv)
    if "compiled" not in _backend.BACKENDS:
        print("compiled kernels are not built; only the fallback is available")
    rng = np.random.default_rng(0)
    jobs = cases(rng)
    mesh = icosphere(3)
    jobs["solve_density (icosphere level 3)"] = lambda b: bench_density(b, mesh)
    print(f"{'kernel':40s} {'python [s]':>11s} {'compiled [s]':>13s} {'speed-up':>9s}")
    for name, fn in jobs.items():
        times = {}
        for b in _backend.BACKENDS:
            times[b] = min(timeit.repeat(lambda: fn(b), number=1, repeat=args.repeat))
        c = times.get("compiled", float("nan"))
        print(f"{name:40s} {times['python']:11.4f} {c:13.4f} {times['python'] / c:9.1f}x")


if __name__ == "__main__":
    main()
