"""Timing comparison of the compiled kernels against the numpy/scipy fallback.

Run from the repository root after an editable install:

    python3 benchmarks/bench_kernels.py
    python3 benchmarks/bench_kernels.py --repeats 9 --centers 20000

Both backends are exercised in one process (the fallback implementations are
plain functions), outputs are checked for exact agreement, and the best of
``--repeats`` wall-clock timings is reported per backend.
"""

import argparse
import time

import numpy as np

from waxsep._kernels import _core, _extract_crops_numpy, _label_components_scipy


def _best_of(repeats, fn, *args):
    best = float("inf")
    result = None
    for _ in range(repeats):
        start = time.perf_counter()
        result = fn(*args)
        best = min(best, time.perf_counter() - start)
    return best, result


def _report(name, compiled_s, fallback_s):
    ratio = fallback_s / compiled_s if compiled_s > 0 else float("inf")
    print(f"{name:<34} compiled {compiled_s * 1e3:8.2f} ms   fallback {fallback_s * 1e3:8.2f} ms   x{ratio:.1f}")


def bench_extract_crops(rng, repeats, centers):
    tensor = rng.random((96, 96, 15))
    xs = rng.integers(0, 96, centers)
    ys = rng.integers(0, 96, centers)
    tensor64 = np.ascontiguousarray(tensor, dtype=np.float64)
    xs64 = np.ascontiguousarray(xs, dtype=np.int64)
    ys64 = np.ascontiguousarray(ys, dtype=np.int64)

    t_fb, out_fb = _best_of(repeats, _extract_crops_numpy, tensor64, xs64, ys64)
    if _core is None:
        print(f"{'extract_crops':<34} fallback {t_fb * 1e3:8.2f} ms   (no compiled extension)")
        return
    t_c, out_c = _best_of(repeats, _core.extract_crops, tensor64, xs64, ys64)
    assert np.array_equal(out_c, out_fb), "backends disagree on extract_crops"
    _report(f"extract_crops ({centers} centers)", t_c, t_fb)


def bench_label_components(rng, repeats, side):
    mask = np.ascontiguousarray(rng.random((side, side)) < 0.5, dtype=np.uint8)

    t_fb, (lab_fb, n_fb) = _best_of(repeats, _label_components_scipy, mask)
    if _core is None:
        print(f"{'label_components':<34} fallback {t_fb * 1e3:8.2f} ms   (no compiled extension)")
        return
    t_c, (lab_c, n_c) = _best_of(repeats, _core.label_components, mask)
    assert n_c == n_fb and np.array_equal(lab_c, lab_fb), "backends disagree on label_components"
    _report(f"label_components ({side}x{side})", t_c, t_fb)


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--repeats", type=int, default=5, help="timings per case; best is kept")
    parser.add_argument("--centers", type=int, default=8000, help="crop centers per extract_crops call")
    parser.add_argument("--side", type=int, default=512, help="mask side length for label_components")
    parser.add_argument("--seed", type=int, default=0)
    args = parser.parse_args()

    rng = np.random.default_rng(args.seed)
    print(f"backend available: {'compiled' if _core is not None else 'fallback only'}")
    bench_extract_crops(rng, args.repeats, args.centers)
    bench_label_components(rng, args.repeats, args.side)


if __name__ == "__main__":
    main()
