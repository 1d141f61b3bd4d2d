"""Compare the two kernel backends on the shapes training actually uses.

Run:  python benchmarks/bench_kernels.py [--repeats N]
"""

import argparse
import time

import numpy as np

from wattgate import kernels


def best_of(fn, repeats):
    times = []
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return min(times)


def bench_conv(backend, batch, length, width, in_ch, out_ch, repeats):
    kernels.set_backend(backend)
    rng = np.random.default_rng(0)
    x = rng.standard_normal((batch, length, in_ch))
    k = rng.standard_normal((width, in_ch, out_ch))
    b = rng.standard_normal(out_ch)
    out = kernels.conv1d_forward(x, k, b)
    g = rng.standard_normal(out.shape)
    fwd = best_of(lambda: kernels.conv1d_forward(x, k, b), repeats)
    bwd = best_of(lambda: kernels.conv1d_backward(x, k, g), repeats)
    return fwd, bwd


def bench_adam(backend, n, repeats):
    kernels.set_backend(backend)
    rng = np.random.default_rng(0)
    p = rng.standard_normal(n)
    g = rng.standard_normal(n)
    m = np.zeros(n)
    v = np.zeros(n)
    return best_of(
        lambda: kernels.adam_update(p, g, m, v, 1e-3, 0.9, 0.999, 1e-8,
                                    0.1, 0.001), repeats)


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--repeats", type=int, default=5,
                        help="take the best of this many timings")
    args = parser.parse_args()

    backends = kernels.available_backends()
    print(f"available backends: {', '.join(backends)}")
    if len(backends) < 2:
        print("only one backend importable; timing it alone")

    # batch 16 windows of s=64, w=184 context: the first conv layer shape
    conv_cases = [
        ("conv 16x432x1 -> 30f w10", dict(batch=16, length=432, width=10,
                                          in_ch=1, out_ch=30)),
        ("conv 16x403x50 -> 50f w5", dict(batch=16, length=403, width=5,
                                          in_ch=50, out_ch=50)),
    ]
    adam_cases = [("adam 1e6 params", 10 ** 6), ("adam 1e7 params", 10 ** 7)]

    rows = []
    for label, case in conv_cases:
        cell = {}
        for backend in backends:
            fwd, bwd = bench_conv(backend, repeats=args.repeats, **case)
            cell[backend] = (fwd, bwd)
        rows.append((label, cell))
    for label, n in adam_cases:
        cell = {backend: (bench_adam(backend, n, args.repeats), None)
                for backend in backends}
        rows.append((label, cell))

    name_w = max(len(r[0]) for r in rows) + 2
    header = f"{'case':<{name_w}}"
    for backend in backends:
        header += f"{backend + ' fwd (ms)':>16}{backend + ' bwd (ms)':>16}"
    print(header)
    for label, cell in rows:
        line = f"{label:<{name_w}}"
        for backend in backends:
            fwd, bwd = cell[backend]
            line += f"{fwd * 1e3:>16.3f}"
            line += f"{bwd * 1e3:>16.3f}" if bwd is not None else f"{'-':>16}"
        print(line)

    if len(backends) == 2 and "numba" in backends and "numpy" in backends:
        print("\nspeedup (numpy time / numba time):")
        for label, cell in rows:
            ratios = []
            for i in range(2):
                if cell["numba"][i] is not None:
                    ratios.append(cell["numpy"][i] / cell["numba"][i])
            print(f"  {label:<{name_w}}" +
                  "  ".join(f"{r:.2f}x" for r in ratios))


if __name__ == "__main__":
    main()
