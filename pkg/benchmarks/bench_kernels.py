"""Compare the compiled and pure-Python backends on representative workloads.

Usage::

    python benchmarks/bench_kernels.py [--repeat 3] [--dim 16]

Each workload runs on both backends; the script prints the best wall time of
each and checks that the two results agree.
"""
from __future__ import annotations

import argparse
import time
import warnings

from kposim import HAVE_COMPILED, SolverSettings, run_rzz, standard_setup
from kposim.experiments import gamma_from_T1_us


def best_time(fn, repeat: int):
    best, result = float("inf"), None
    for _ in range(repeat):
        start = time.perf_counter()
        result = fn()
        best = min(best, time.perf_counter() - start)
    return best, result


def workloads(dim: int):
    setup = standard_setup().with_dims((dim, dim))
    p = 4.0 * setup.K
    tol = 1e-9

    def pure(backend):
        return run_rzz("simple", "sum", setup, p,
                       settings=SolverSettings(rel_tol=tol, abs_tol=tol, backend=backend))

    def lindblad(backend):
        ldim = min(dim, 10)
        small = setup.with_dims((ldim, ldim))
        return run_rzz("simple", "sum", small, 4.0 * small.K, gamma=gamma_from_T1_us(15.5),
                       settings=SolverSettings(rel_tol=1e-8, abs_tol=1e-8, backend=backend))

    def sc(backend):
        small = setup.with_dims((10, 10))
        from kposim.gate import default_settings
        base = default_settings("sc", small)
        return run_rzz("sc", "sum", small, 2.0 * small.K,
                       settings=SolverSettings(method=base.method, rel_tol=1e-7, abs_tol=1e-7,
                                               max_step=base.max_step, backend=backend))

    return {"pure state, simple model": pure, "density matrix, simple model": lindblad,
            "pure state, lab frame": sc}


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--repeat", type=int, default=3)
    parser.add_argument("--dim", type=int, default=16)
    args = parser.parse_args(argv)
    warnings.simplefilter("ignore")
    if not HAVE_COMPILED:
        print("compiled kernel not built; only the python backend is available")
    print(f"{'workload':32s} {'python [s]':>11s} {'compiled [s]':>13s} {'speedup':>8s} {'|dF|':>9s}")
    for name, fn in workloads(args.dim).items():
        t_py, r_py = best_time(lambda: fn("python"), args.repeat)
        if HAVE_COMPILED:
            t_c, r_c = best_time(lambda: fn("compiled"), args.repeat)
            print(f"{name:32s} {t_py:11.3f} {t_c:13.3f} {t_py / t_c:8.1f} "
                  f"{abs(r_py.fidelity - r_c.fidelity):9.1e}")
        else:
            print(f"{name:32s} {t_py:11.3f} {'-':>13s} {'-':>8s} {'-':>9s}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
