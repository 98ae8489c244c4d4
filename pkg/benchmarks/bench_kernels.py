"""Time the hot device kernels on both compute lanes.

The package selects between a numba-jitted lane and a pure-numpy lane at
import time (AKAN_BACKEND=auto|numba|numpy). This script times the same
workloads on every lane that is importable, checks they agree, and
prints a table, so a lane regression shows up as a number and not a
feeling. Run from the repository root:

    python3 benchmarks/bench_kernels.py [--batch 4096] [--repeats 7]
"""

import argparse
import sys
import time
from pathlib import Path

import numpy as np

sys.path.insert(0, str(Path(__file__).resolve().parent.parent / "src"))

from akan.devices import AnalyticDevice, MlpSurrogate  # noqa: E402
from akan.kernels import lanes  # noqa: E402


def _timeit(fn, repeats):
    best = np.inf
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--batch", type=int, default=4096)
    parser.add_argument("--repeats", type=int, default=7)
    args = parser.parse_args()

    rng = np.random.default_rng(0)
    volts = rng.uniform(-1.0, 1.0, (args.batch, 7))
    analytic = AnalyticDevice.from_seed(3)
    surrogate = MlpSurrogate.from_seed(3)

    workloads = {
        "analytic_forward": lambda k: k["analytic_forward"](
            volts, analytic.amplitudes, analytic.weights, analytic.biases),
        "analytic_jacobian": lambda k: k["analytic_jacobian"](
            volts, analytic.amplitudes, analytic.weights, analytic.biases),
        "mlp_forward": lambda k: k["mlp_forward"](
            volts, surrogate._w_in, surrogate._b_in, surrogate._w_hid,
            surrogate._b_hid, surrogate._w_out, surrogate._b_out),
    }

    available = lanes()
    print(f"batch {args.batch}, best of {args.repeats} "
          f"(lanes: {', '.join(available)})")
    header = f"{'kernel':20s}" + "".join(f"{n:>12s}" for n in available)
    print(header)
    print("-" * len(header))
    for name, work in workloads.items():
        results = {}
        for lane_name, lane in available.items():
            work(lane)  # first call includes jit compilation; time after
            results[lane_name] = _timeit(lambda: work(lane), args.repeats)
        outputs = [np.asarray(work(lane)) for lane in available.values()]
        for other in outputs[1:]:
            np.testing.assert_allclose(other, outputs[0], rtol=1e-12)
        cells = "".join(f"{results[n] * 1e3:10.3f}ms" for n in available)
        print(f"{name:20s}{cells}")
    if len(available) > 1:
        print("all lanes agree to 1e-12")


if __name__ == "__main__":
    main()
