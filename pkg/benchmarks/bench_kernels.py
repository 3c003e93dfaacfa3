"""Time the compiled kernels against the numpy fallback.

    python benchmarks/bench_kernels.py [--repeat N]

Prints one row per kernel with the median wall time of each backend and the
speed-up. Outputs are compared before timing so a fast wrong kernel shows up.
"""
import argparse
import statistics
import time

import numpy as np

from spikefet.kernels import available_backends


def _cases(rng):
    x = rng.integers(0, 5, (2, 32, 64, 64)).astype(np.float64)
    w = rng.normal(size=(32, 7, 7))
    g = rng.normal(size=(2, 32, 64, 64))
    xs = rng.integers(0, 5, (2, 16, 64, 64)).astype(np.float64)
    cols = rng.normal(size=(2, 16 * 9, 64 * 64))
    n_ev = 200_000
    t = np.sort(rng.integers(0, 10_000, n_ev))
    ex, ey = rng.integers(0, 256, n_ev), rng.integers(0, 192, n_ev)
    p = rng.integers(0, 2, n_ev)
    return {
        "im2col 3x3": lambda k: k.im2col(xs, 3, 3, 1, 1),
        "col2im 3x3": lambda k: k.col2im(cols, 2, 16, 64, 64, 3, 3, 1, 1),
        "dwconv fwd 7x7": lambda k: k.dwconv_forward(x, w, 1, 3),
        "dwconv bwd 7x7": lambda k: k.dwconv_backward(g, x, w, 1, 3),
        "bin_events 200k": lambda k: k.bin_events(t, ex, ey, p, 0, 10_000, 3, 192, 256),
    }


def _time(fn, repeat):
    fn()
    out = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        out.append(time.perf_counter() - t0)
    return statistics.median(out)


def _same(a, b):
    if isinstance(a, tuple):
        return all(_same(x, y) for x, y in zip(a, b))
    return np.allclose(a, b, rtol=1e-12, atol=1e-12)


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args(argv)
    backends = available_backends()
    if "cython" not in backends:
        print("compiled kernels not built; timing the numpy fallback only")
    cases = _cases(np.random.default_rng(0))
    names = list(backends)
    print(f"{'kernel':18s}" + "".join(f"{n:>12s}" for n in names) + ("     speedup" if len(names) > 1 else ""))
    for label, fn in cases.items():
        if len(names) > 1 and not _same(fn(backends["python"]), fn(backends["cython"])):
            print(f"{label:18s}  MISMATCH between backends")
            continue
        times = [_time(lambda: fn(backends[n]), args.repeat) for n in names]
        row = f"{label:18s}" + "".join(f"{t * 1e3:10.2f}ms" for t in times)
        if len(names) > 1:
            row += f"{times[0] / times[1]:11.2f}x"
        print(row)


if __name__ == "__main__":
    main()
