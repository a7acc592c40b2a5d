"""Pure-numpy implementations of the hot kernels.

These are the fallback twins of the compiled routines in ``_core``;
both sides are exercised by the same parity tests and the benchmark.
"""

from __future__ import annotations

import numpy as np


def collision_bracket(k1e, k2e, k3e, k4e, wk, f, fb, n_modes):
    """Row-accumulated collision bracket.

    out[k1] = sum_entries wk * (f3*f4*fb1*fb2 - f1*f2*fb3*fb4)
    with fb = 1 -/+ f depending on statistics (built by the caller).
    """
    gain = f[k3e] * f[k4e] * fb[k1e] * fb[k2e]
    loss = f[k1e] * f[k2e] * fb[k3e] * fb[k4e]
    vals = wk * (gain - loss)
    return np.bincount(k1e, weights=vals, minlength=n_modes)


def memory_bracket_sum(k1e, k2e, k3e, k4e, delta_e, kv, f_hist, fb_hist, taus, s_weights, n_modes):
    """Loss-pinned history contraction for the memory-kernel equation.

    out[p] = sum_j s_weights[j] * sum_{entries with k1=p}
             cos(taus[j] * delta_e) * kv * (f1 f2 fb3 fb4 - f4 f3 fb2 fb1)_j
    """
    out = np.zeros(n_modes)
    for j in range(len(taus)):
        f = f_hist[j]
        fb = fb_hist[j]
        bracket = f[k1e] * f[k2e] * fb[k3e] * fb[k4e] - f[k4e] * f[k3e] * fb[k2e] * fb[k1e]
        vals = np.cos(taus[j] * delta_e) * kv * bracket
        out += s_weights[j] * np.bincount(k1e, weights=vals, minlength=n_modes)
    return out
