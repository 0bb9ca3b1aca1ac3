"""Time forward+adjoint projection with the compiled and the numpy backend.

    python3 benchmarks/bench_radon.py [--repeat 3]
"""
import argparse
import time

import numpy as np

from ddlandweber import _radon_py
from ddlandweber.radon import RadonGeometry

try:
    from ddlandweber import _radon_ext
except ImportError:
    _radon_ext = None


def _time(fn, repeat):
    best = float("inf")
    for _ in range(repeat):
        t = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t)
    return best


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args()
    rng = np.random.default_rng(0)
    backends = {"python": _radon_py}
    if _radon_ext is not None:
        backends["cython"] = _radon_ext
    print(f"{'geometry':>18} {'backend':>8} {'forward s':>10} {'adjoint s':>10} {'max |diff|':>11}")
    for n, na in [(32, 45), (64, 90), (128, 180)]:
        g = RadonGeometry.uniform(n, na)
        img = rng.random((n, n))
        sino = rng.random(g.sinogram_shape)
        ref = None
        for name, mod in backends.items():
            fwd = lambda: mod.forward(img, g._cos, g._sin, g._offsets)
            adj = lambda: mod.adjoint(sino, n, g._cos, g._sin, g._offsets)
            tf, ta = _time(fwd, args.repeat), _time(adj, args.repeat)
            out = fwd()
            diff = 0.0 if ref is None else float(np.max(np.abs(out - ref)))
            ref = out if ref is None else ref
            print(f"{f'{n}x{n}/{na}':>18} {name:>8} {tf:10.4f} {ta:10.4f} {diff:11.2e}")


if __name__ == "__main__":
    main()
