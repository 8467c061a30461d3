"""Time the numba and pure-numpy flavours of each hot kernel.

    python3 benchmarks/bench_kernels.py [--repeat 5] [--scale 1.0]

Both flavours are imported directly, so the STP_DISABLE_NUMBA flag does not
matter here.  Outputs are checked for equality before timing.
"""

import argparse
import time

import numpy as np

from stp import _kernels


def best_of(fn, args, repeat):
    fn(*args)  # warm-up, includes JIT compilation for the numba flavour
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn(*args)
        times.append(time.perf_counter() - t0)
    return min(times)


def cases(scale, rng):
    n = int(200_000 * scale)
    gaps = rng.integers(0, 150, size=n)
    durs = rng.integers(1, 400, size=n)
    starts = np.cumsum(gaps + np.concatenate(([0], durs[:-1])))
    ends = starts + durs
    yield "merge_runs", f"{n} segments", (starts.astype(np.int64), ends.astype(np.int64), 2000, 100)

    m = int(1500 * scale ** 0.5)
    a = rng.integers(0, 50, size=m).astype(np.int64)
    b = rng.integers(0, 50, size=m).astype(np.int64)
    yield "edit_matrix", f"{m}x{m} tokens", (a, b)

    secs = int(600 * scale)
    x = rng.normal(0, 0.1, size=secs * 16000)
    yield "frame_db", f"{secs} s at 16 kHz", (x, 160)


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--scale", type=float, default=1.0, help="multiply problem sizes")
    args = ap.parse_args()
    if not _kernels.HAVE_NUMBA:
        raise SystemExit("numba is not installed; nothing to compare")

    rng = np.random.default_rng(0)
    print(f"{'kernel':<12} {'size':<20} {'numba':>10} {'numpy':>10} {'speedup':>8}")
    for name, size, inputs in cases(args.scale, rng):
        nb = getattr(_kernels, f"{name}_nb")
        np_ = getattr(_kernels, f"{name}_np")
        out_nb, out_np = nb(*inputs), np_(*inputs)
        if isinstance(out_nb, tuple):
            assert all(np.array_equal(p, q) for p, q in zip(out_nb, out_np)), name
        else:
            np.testing.assert_allclose(out_nb, out_np, rtol=1e-12, atol=1e-9, err_msg=name)
        t_nb = best_of(nb, inputs, args.repeat)
        t_np = best_of(np_, inputs, args.repeat)
        print(f"{name:<12} {size:<20} {t_nb * 1e3:>8.2f}ms {t_np * 1e3:>8.2f}ms {t_np / t_nb:>7.1f}x")


if __name__ == "__main__":
    main()
