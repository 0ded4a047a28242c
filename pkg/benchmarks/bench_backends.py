"""Time the numba kernels against the numpy fallback.

    python benchmarks/bench_backends.py [--repeat 3]

Each workload runs once per backend to warm up (numba compiles on first
call), then ``--repeat`` timed runs; the best time is reported. Results are
checked for agreement before timing.
"""

import argparse
import time

import numpy as np

from scsqkd import _accel
from scsqkd.channel import monte_carlo_counts
from scsqkd.model import ChannelParams, ProtocolParams
from scsqkd.phaselock import DriftModel, run_feedback
from scsqkd.stats import expected_upper_array, real_upper_array


def mc_tally():
    p = ProtocolParams(mu_A=0.1, mu_B=0.1, p_x=0.3, N=1e7)
    return monte_carlo_counts(p, 0.05, ChannelParams(P_dc=1e-4, e_d=0.03), 10_000_000, seed=1)


def chernoff_grid():
    x = np.geomspace(1.0, 1e12, 200_000)
    return expected_upper_array(x, -1900.0)[0], real_upper_array(x, -1900.0)[0]


def feedback_loop():
    return run_feedback(5.0, drift=DriftModel(seed=1))


def _agree(name, a, b):
    if name == "mc_tally":
        return a == b
    if name == "chernoff_grid":
        return all(np.allclose(x, y, rtol=1e-10) for x, y in zip(a, b))
    # different RNG streams: compare lock quality only
    return abs(a.visibility() - b.visibility()) < 1e-3


WORKLOADS = {"mc_tally": mc_tally, "chernoff_grid": chernoff_grid, "feedback_loop": feedback_loop}


def best_of(fn, repeat):
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return min(times)


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--repeat", type=int, default=3)
    ap.add_argument("--only", choices=sorted(WORKLOADS))
    args = ap.parse_args()

    print(f"{'workload':<16}{'numba [s]':>12}{'numpy [s]':>12}{'speedup':>10}")
    for name, fn in WORKLOADS.items():
        if args.only and name != args.only:
            continue
        out, timing = {}, {}
        for backend in ("numba", "numpy"):
            with _accel.use_backend(backend):
                out[backend] = fn()  # warm-up, and the result to compare
                timing[backend] = best_of(fn, args.repeat)
        if not _agree(name, out["numba"], out["numpy"]):
            raise SystemExit(f"{name}: backends disagree")
        t_nb, t_np = timing["numba"], timing["numpy"]
        print(f"{name:<16}{t_nb:>12.4f}{t_np:>12.4f}{t_np / t_nb:>9.1f}x")


if __name__ == "__main__":
    main()
