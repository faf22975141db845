"""Compare the compiled kernel core against the numpy fallback.

    python benchmarks/bench_kernels.py [--repeat N]

Reports the best-of-N time per call for each hot kernel at adapter sizes
typical of the planted tasks, then the wall time of a short training run
under each backend.
"""

from __future__ import annotations

import argparse
import time
import timeit

import numpy as np

from increlora import kernels
from increlora.config import from_dict
from increlora.numkernel import Rng
from increlora.trainer import train

SIZES = [(4, 16, 16), (12, 64, 64), (32, 256, 256)]  # (rank, in, out)

RUN = {"task": {"dims": [16] * 7, "planted_ranks": [1, 1, 2, 2, 6, 12], "activation": "relu"},
       "total_steps": 1000, "warmup": 50, "nu": 100, "h": 3, "r_final": 30, "batch_size": 64}


def _operands(r, n_in, n_out):
    rng = Rng(0)
    return rng.normal((r, n_in)), rng.normal((r, n_out)), rng.normal(r), rng.normal((n_out, n_in))


def bench_kernels(repeat: int) -> list[tuple]:
    rows = []
    for r, n_in, n_out in SIZES:
        A, Bt, lam, G = _operands(r, n_in, n_out)
        out = np.empty((n_out, n_in))
        p, g = Rng(1).normal(n_in), Rng(2).normal(n_in)
        m, v = np.zeros(n_in), np.zeros(n_in)
        calls = {
            "delta_w": lambda: kernels.delta_w(A, Bt, lam, 1.0, out),
            "triplet_grads": lambda: kernels.triplet_grads(G, A, Bt, lam, 1.0),
            "gram_penalty": lambda: kernels.gram_penalty(A, Bt),
            "abs_mean_product": lambda: kernels.abs_mean_product(G, out),
            "adamw_update": lambda: kernels.adamw_update(p, g, m, v, 1e-3, 0.9, 0.999, 1e-8, 0.0, 1),
        }
        for name, fn in calls.items():
            times = {}
            for backend in kernels.available_backends():
                kernels.use_backend(backend)
                number = 200
                times[backend] = min(timeit.repeat(fn, number=number, repeat=repeat)) / number
            rows.append((f"{name} r={r} {n_out}x{n_in}", times))
    return rows


def bench_training() -> dict:
    cfg = from_dict(RUN)
    times, evals = {}, {}
    for backend in kernels.available_backends():
        kernels.use_backend(backend)
        t0 = time.perf_counter()
        evals[backend] = train(cfg).final_eval
        times[backend] = time.perf_counter() - t0
    return {"times": times, "evals": evals}


def main() -> None:
    ap = argparse.ArgumentParser()
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args()
    backends = kernels.available_backends()
    if "compiled" not in backends:
        print("compiled core not built; only the python fallback is available")
    prev = kernels.active_backend()
    rows = bench_kernels(args.repeat)
    head = f"{'kernel':<36}" + "".join(f"{b + ' (us)':>16}" for b in backends)
    if len(backends) > 1:
        head += f"{'speedup':>10}"
    print(head)
    for label, times in rows:
        line = f"{label:<36}" + "".join(f"{times[b] * 1e6:>16.2f}" for b in backends)
        if len(backends) > 1:
            line += f"{times['python'] / times['compiled']:>9.1f}x"
        print(line)
    run = bench_training()
    print()
    for b in backends:
        print(f"1000-step training run, {b:<8}: {run['times'][b]:.2f} s  (final eval {run['evals'][b]:.6g})")
    kernels.use_backend(prev)


if __name__ == "__main__":
    main()
