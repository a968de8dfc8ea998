"""Compare the compiled and pure-Python kernels on the saturated example.

Usage: python benchmarks/bench_kernels.py [--repeat N] [--steps N]

Both backends integrate the same reduced dynamics with fixed-step RK4; the
script reports the best wall time of each and the largest difference between
the two trajectories.
"""
from __future__ import annotations

import argparse
import time

import numpy as np

from lowgain import kernels
from lowgain.examples import saturated_uncertain_example
from lowgain.synthesis import davison_gain
from lowgain.model import DcGains


def _problem(n_steps: int):
    lfr, delta, _ = saturated_uncertain_example(seed=1, delta=-0.5)
    K = davison_gain(DcGains(lfr.F, lfr.E1))
    kinds, params = delta.kernel_encoding
    w_values = np.vstack([np.eye(5)[i] for i in range(5)])
    n = np.full(5, n_steps // 5, dtype=np.int_)
    h = np.full(5, 0.01)
    args = (np.zeros(lfr.p), w_values, n, h, lfr.F @ K, lfr.G, lfr.E1, lfr.H @ K, lfr.J,
            lfr.E2, kinds, params, 0.5, 1e-12, 10000)
    fp_args = (np.array([2.0, 1.0, -1.0]), lfr.J, kinds, params, 0.5, 1e-12, 10000)
    return args, fp_args


def _best(fn, args, repeat: int) -> tuple[float, object]:
    best, out = np.inf, None
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = fn(*args)
        best = min(best, time.perf_counter() - t0)
    return best, out


def main(argv=None) -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=3)
    ap.add_argument("--steps", type=int, default=1000)
    args = ap.parse_args(argv)

    rk_args, fp_args = _problem(args.steps)
    py = kernels.python_backend
    rows = []
    t_py, out_py = _best(py.rk4_lfr, rk_args, args.repeat)
    rows.append(("rk4_lfr", "python", t_py))
    f_py, _ = _best(py.fixed_point, fp_args, args.repeat * 100)
    rows.append(("fixed_point", "python", f_py))
    if kernels.compiled_backend is None:
        print("compiled backend unavailable; only the pure-Python timings are shown")
    else:
        cy = kernels.compiled_backend
        t_cy, out_cy = _best(cy.rk4_lfr, rk_args, args.repeat)
        rows.append(("rk4_lfr", "cython", t_cy))
        f_cy, _ = _best(cy.fixed_point, fp_args, args.repeat * 100)
        rows.append(("fixed_point", "cython", f_cy))
        diff = float(np.nanmax(np.abs(out_py[0] - out_cy[0])))
        print(f"max |eta_python - eta_cython| = {diff:.3e}")
        print(f"rk4_lfr speed-up: {t_py / t_cy:.1f}x   fixed_point speed-up: {f_py / f_cy:.1f}x")
    print(f"{'kernel':<12} {'backend':<8} {'best time [s]':>14}")
    for name, backend, t in rows:
        print(f"{name:<12} {backend:<8} {t:>14.6f}")


if __name__ == "__main__":
    main()
