"""Benchmark the compiled kernels against the numpy fallback.

Run: python -m ocebench.kernels.bench [--repeat N]
"""

from __future__ import annotations

import argparse
import time

import numpy as np

from . import get_backend

CASES = [
    ("conv fwd 2D+t block", "conv_fwd", ((10, 23, 34, 6, 27), (5, 23, 3, 3, 3), 1)),
    ("conv fwd initial s4", "conv_fwd", ((10, 1, 34, 6, 404), (8, 1, 3, 3, 5), 4)),
    ("conv bwd 2D+t block", "conv_bwd", ((10, 23, 34, 6, 27), (5, 23, 3, 3, 3), 1)),
    ("median 3x3x3 volume", "median", ((32, 225, 400),)),
]


def _run(backend, kind, spec, rng):
    if kind in ("conv_fwd", "conv_bwd"):
        xshape, wshape, st = spec
        xp = np.ascontiguousarray(rng.standard_normal(xshape).astype(np.float32))
        w = np.ascontiguousarray(rng.standard_normal(wshape).astype(np.float32))
        b = np.zeros(wshape[0], np.float32)
        out = backend.conv3d_forward(xp, w, b, st)
        if kind == "conv_fwd":
            return lambda: backend.conv3d_forward(xp, w, b, st)
        gy = np.ascontiguousarray(rng.standard_normal(out.shape).astype(np.float32))
        return lambda: backend.conv3d_backward(xp, w, gy, st)
    vol = rng.standard_normal(spec[0]).astype(np.float32)
    padded = np.ascontiguousarray(np.pad(vol, 1, mode="edge"))
    return lambda: backend.median27(padded)


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--repeat", type=int, default=5)
    args = parser.parse_args(argv)

    backends = {}
    backends["numpy"] = get_backend("numpy")
    try:
        backends["compiled"] = get_backend("compiled")
    except ImportError:
        print("compiled backend not built; showing numpy only")

    print(f"{'case':<24}" + "".join(f"{name:>14}" for name in backends) + f"{'speedup':>10}")
    for label, kind, spec in CASES:
        times = {}
        for name, backend in backends.items():
            fn = _run(backend, kind, spec, np.random.default_rng(0))
            fn()  # warm up
            t0 = time.perf_counter()
            for _ in range(args.repeat):
                fn()
            times[name] = (time.perf_counter() - t0) / args.repeat
        row = f"{label:<24}" + "".join(f"{1e3 * times[n]:>11.1f} ms" for n in backends)
        if len(times) == 2:
            row += f"{times['numpy'] / times['compiled']:>9.1f}x"
        print(row)
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
