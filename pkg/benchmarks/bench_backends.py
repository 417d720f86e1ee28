"""Time the numba and numpy kernel backends against each other.

    python benchmarks/bench_backends.py [--rows 10] [--particles 20000] [--repeat 5]

Reports the best of ``--repeat`` timings for one batched ``lognu`` call, one
batched ``sample`` call, and a full SMC run per backend. The numba column is
measured after a warm-up call, so JIT compilation is excluded.
"""

import argparse
import time

import numpy as np

from rllcap import _kernels, smc
from rllcap.model import rll_model, strip_view


def best_of(fn, repeat):
    fn()
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return min(times)


def backends():
    out = {"numpy": (_kernels.lognu_numpy, _kernels.sample_numpy)}
    if _kernels.HAVE_NUMBA:
        out["numba"] = (_kernels.lognu_numba, _kernels.sample_numba)
    return out


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--rows", type=int, default=10)
    ap.add_argument("--particles", type=int, default=20_000)
    ap.add_argument("--width", type=int, default=1)
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args()

    view = strip_view(rll_model(args.rows), args.width)
    t = view.tables(2)
    rng = np.random.default_rng(0)
    # Realistic conditioning bits: a batch of valid first columns.
    prev = _kernels.sample_numpy(
        np.zeros((args.particles, args.rows), dtype=np.int64),
        view.tables(1).internal[None, :],
        view.tables(1).vertical,
        rng.random((args.particles, args.rows)),
    )
    prev = (prev >> (view.width_of(1) - 1)) & 1
    u = rng.random((args.particles, args.rows))

    saved = _kernels.lognu, _kernels.sample
    print(f"M={args.rows} W={args.width} N={args.particles} threads={_kernels.get_num_threads()}")
    print(f"{'backend':8s} {'lognu_s':>10s} {'sample_s':>10s} {'run_s':>10s}")
    rows = {}
    try:
        for name, (lognu, sample) in backends().items():
            _kernels.lognu, _kernels.sample = lognu, sample
            a = best_of(lambda: lognu(prev, t.boundary, t.vertical), args.repeat)
            b = best_of(lambda: sample(prev, t.boundary, t.vertical, u), args.repeat)
            c = best_of(lambda: smc.run(view, args.particles, 1), max(1, args.repeat // 2))
            rows[name] = (a, b, c)
            print(f"{name:8s} {a:10.4f} {b:10.4f} {c:10.4f}")
    finally:
        _kernels.lognu, _kernels.sample = saved
    if len(rows) == 2:
        speed = [rows["numpy"][i] / rows["numba"][i] for i in range(3)]
        print(f"{'speedup':8s} {speed[0]:9.1f}x {speed[1]:9.1f}x {speed[2]:9.1f}x")


if __name__ == "__main__":
    main()
