"""Compare the numba and pure-numpy kernel backends.

Usage::

    python3 benchmarks/bench_kernels.py [--rounds 100000] [--repeat 5]

Both backends must produce identical outputs; the script checks that before
timing. The first numba call (JIT compilation) is timed separately.
"""

import argparse
import time

import numpy as np

from gradskip_lab import kernels
from gradskip_lab._accel import HAVE_NUMBA
from gradskip_lab.analysis import optimal_parameters
from gradskip_lab.numerics import SERVER, stream_key


def best_of(fn, repeat):
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return min(times)


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--rounds", type=int, default=100_000)
    ap.add_argument("--draws", type=int, default=2_000_000)
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args(argv)
    if not HAVE_NUMBA:
        print("numba is not installed; only the numpy backend is available")
        return

    key = stream_key(0, (0, "bench"))
    kappas = np.r_[1e4, np.linspace(2.0, 50.0, 19)]
    opt = optimal_parameters(kappas)
    tkey = stream_key(0, (SERVER, "theta"))
    ekeys = [stream_key(0, (i, "eta")) for i in range(kappas.size)]

    cases = {
        "uniform_block": lambda b: kernels.uniform_block(key, 0, args.draws, backend=b),
        "simulate_rounds": lambda b: kernels.simulate_rounds(
            tkey, ekeys, opt.p, opt.q, args.rounds, backend=b)[0],
    }
    print(f"{'kernel':<18}{'numpy [s]':>12}{'numba [s]':>12}{'jit [s]':>10}{'speedup':>10}")
    for name, call in cases.items():
        t0 = time.perf_counter()
        fast = call("numba")
        jit = time.perf_counter() - t0
        if not np.array_equal(fast, call("numpy")):
            raise SystemExit(f"{name}: backends disagree")
        t_np = best_of(lambda: call("numpy"), args.repeat)
        t_nb = best_of(lambda: call("numba"), args.repeat)
        print(f"{name:<18}{t_np:>12.4f}{t_nb:>12.4f}{jit:>10.2f}{t_np / t_nb:>9.1f}x")


if __name__ == "__main__":
    main()
