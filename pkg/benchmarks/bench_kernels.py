"""Compare the compiled kernels with the numpy fallback.

    python benchmarks/bench_kernels.py [--repeat 3]

Prints wall time per kernel and backend, the speed-up, and the largest
absolute difference between the two outputs.
"""
import argparse
import time

import numpy as np

from edcausal import kernels
from edcausal.discovery import _standardize, fit_var
from edcausal.simulator import SimConfig, generate_graph, simulate_dataset


def _best(fn, repeat):
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = fn()
        times.append(time.perf_counter() - t0)
    return min(times), out


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=3)
    ap.add_argument("--constructs", type=int, default=50)
    ap.add_argument("--rows", type=int, default=10_000)
    args = ap.parse_args(argv)
    if kernels.compiled_backend is None:
        raise SystemExit("compiled extension not available; build with `pip install -e . --no-build-isolation`")

    cfg = SimConfig(num_constructs=args.constructs, num_students=25, num_steps=400)
    graph = generate_graph(cfg)
    data = simulate_dataset(cfg, graph)
    resid = fit_var(data).residuals
    x = np.ascontiguousarray(_standardize(resid[: args.rows]))

    rng = np.random.default_rng(0)
    dyn_coefs = np.ascontiguousarray(graph.lagged_block())
    drive = rng.normal(size=(400, args.constructs))
    hist = np.zeros((graph.lag, args.constructs))

    cases = [
        (f"pairwise_entropy_diff [{x.shape[0]} x {x.shape[1]}]", "pairwise_entropy_diff", (x,)),
        (f"var_recursion [T=400, n={args.constructs}]", "var_recursion", (dyn_coefs, drive, hist)),
    ]
    print(f"{'kernel':44s} {'python s':>10s} {'compiled s':>11s} {'speed-up':>9s} {'max |diff|':>11s}")
    for label, name, inputs in cases:
        t_py, out_py = _best(lambda: getattr(kernels.python_backend, name)(*inputs), args.repeat)
        t_c, out_c = _best(lambda: getattr(kernels.compiled_backend, name)(*inputs), args.repeat)
        diff = float(np.max(np.abs(np.asarray(out_py) - np.asarray(out_c))))
        print(f"{label:44s} {t_py:10.4f} {t_c:11.4f} {t_py / t_c:8.1f}x {diff:11.2e}")


if __name__ == "__main__":
    main()
