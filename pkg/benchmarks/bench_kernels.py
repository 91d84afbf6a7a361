"""Time the compiled and pure-Python kernels on the same inputs.

    python benchmarks/bench_kernels.py --sizes 200 2000 20000 --repeat 5

Reports the median wall time per call and checks that both backends agree.
"""

import argparse
import statistics
import time

import numpy as np

from relnb import kernels


def discretization_case(n, rng):
    x = rng.normal(size=n)
    y = (rng.random(n) < 1 / (1 + np.exp(-1.5 * x))).astype(np.int64)
    order = np.argsort(x, kind="mergesort")
    counts = np.zeros((n, 2), dtype=np.int64)
    counts[np.arange(n), y[order]] = 1
    return counts


def timed(fn, repeat):
    times = []
    for _ in range(repeat):
        t = time.perf_counter()
        out = fn()
        times.append(time.perf_counter() - t)
    return statistics.median(times), out


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--sizes", type=int, nargs="+", default=[200, 2000, 10000])
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args(argv)

    backends = kernels.available_backends()
    if "compiled" not in backends:
        print("compiled extension not built; timing the Python kernels only")
    rng = np.random.default_rng(args.seed)
    print(f"{'kernel':<22}{'n':>8}" + "".join(f"{name:>14}" for name in backends) + f"{'speedup':>10}")
    for n in args.sizes:
        counts = discretization_case(n, rng)
        lf = kernels.log_factorial_table(2 * n + 2)
        L = np.ascontiguousarray(rng.normal(size=(n, 2)))
        contrib = np.ascontiguousarray(rng.normal(size=(n, 2)))
        y = rng.integers(0, 2, n).astype(np.int64)
        cases = {
            "optimize_partition": lambda be: be.optimize_partition(counts, n, n, kernels.EXACT_LIMIT, lf),
            "class_loglik_shifted": lambda be: be.class_loglik_shifted(L, contrib, 0.5, y),
        }
        for label, call in cases.items():
            medians, outputs = {}, {}
            for name, be in backends.items():
                medians[name], outputs[name] = timed(lambda: call(be), args.repeat)
            ref = outputs["python"]
            for name, out in outputs.items():
                a = out[1] if isinstance(out, tuple) else out
                b = ref[1] if isinstance(ref, tuple) else ref
                if abs(a - b) > 1e-9 * max(1.0, abs(b)):
                    raise SystemExit(f"{label} n={n}: {name} disagrees with python ({a} vs {b})")
            speed = medians["python"] / medians["compiled"] if "compiled" in medians else float("nan")
            print(f"{label:<22}{n:>8}" + "".join(f"{medians[k] * 1e3:>12.3f}ms" for k in backends)
                  + f"{speed:>9.1f}x")


if __name__ == "__main__":
    main()
