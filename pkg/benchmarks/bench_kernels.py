#!/usr/bin/env python3
"""Benchmark the compiled hot kernels against the pure-numpy fallbacks.

Runs the collision bracket and the memory-kernel history contraction on
realistic table sizes and reports per-call times and speedups.  Results
from both backends are checked to agree before timing.

Usage: python benchmarks/bench_kernels.py [--repeat N]
"""

import argparse
import time

import numpy as np

from qboltz import _kernels, _kernels_py
from qboltz.collision import MollifierSpec, build_quadruple_table, kernel_table
from qboltz.lattice import DispersionSpec, MomentumGrid, Dispersion, PairPotential, PotentialSpec


def build_case(d, L, eta):
    grid = MomentumGrid(d, L, mode_cap=100000)
    disp = Dispersion(grid, DispersionSpec("next-nearest-neighbor", 0.4))
    pot = PairPotential(grid, PotentialSpec("neighbor", 1, 1.0))
    table = build_quadruple_table(grid, disp, MollifierSpec("gaussian", eta))
    kv = kernel_table(table, pot)
    return grid, table, kv


def time_call(fn, args, repeat):
    best = float("inf")
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn(*args)
        best = min(best, time.perf_counter() - t0)
    return best


def main():
    parser = argparse.ArgumentParser()
    parser.add_argument("--repeat", type=int, default=7)
    args = parser.parse_args()

    if _kernels.backend() != "compiled":
        print("compiled backend unavailable; nothing to compare")
        return

    rng = np.random.default_rng(0)
    print(f"{'case':<34}{'entries':>9}{'compiled':>12}{'numpy':>12}{'speedup':>9}")

    for d, L, eta in ((1, 32, 0.4), (2, 8, 0.6), (2, 12, 0.6)):
        grid, table, kv = build_case(d, L, eta)
        M = grid.n_modes
        f = rng.uniform(0, 1, M)
        fb = 1.0 - f
        wk = table.weight * kv
        call = (table.k1, table.k2, table.k3, table.k4, wk, f, fb, M)
        a = _kernels.collision_bracket(*call)
        b = _kernels_py.collision_bracket(*call)
        assert np.allclose(a, b, atol=1e-12)
        tc = time_call(_kernels.collision_bracket, call, args.repeat)
        tp = time_call(_kernels_py.collision_bracket, call, args.repeat)
        name = f"collision d={d} L={L}"
        print(f"{name:<34}{table.n_entries:>9}{tc*1e6:>10.1f}us{tp*1e6:>10.1f}us{tp/tc:>8.1f}x")

    for d, L, n_hist in ((1, 32, 40), (2, 8, 40)):
        grid, table, kv = build_case(d, L, 1e9)  # unmollified-size table
        M = grid.n_modes
        f_hist = rng.uniform(0, 1, (n_hist, M))
        fb_hist = 1.0 - f_hist
        taus = np.linspace(0, 4, n_hist)[::-1].copy()
        sw = np.full(n_hist, 0.05)
        call = (
            table.k1, table.k2, table.k3, table.k4, table.delta_e, kv,
            f_hist, fb_hist, taus, sw, M,
        )
        a = _kernels.memory_bracket_sum(*call)
        b = _kernels_py.memory_bracket_sum(*call)
        assert np.allclose(a, b, atol=1e-11)
        tc = time_call(_kernels.memory_bracket_sum, call, args.repeat)
        tp = time_call(_kernels_py.memory_bracket_sum, call, args.repeat)
        name = f"memory d={d} L={L} hist={n_hist}"
        print(f"{name:<34}{table.n_entries:>9}{tc*1e3:>10.2f}ms{tp*1e3:>10.2f}ms{tp/tc:>8.1f}x")


if __name__ == "__main__":
    main()
