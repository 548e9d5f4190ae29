"""Time every kernel on both backends and check that the outputs agree bit for bit.

    python3 benchmarks/bench_kernels.py [--repeat N]
"""
from __future__ import annotations

import argparse
import time

import numpy as np

from roomev import battery as bat
from roomev import kernels, timeseries


def _cases(rng: np.random.Generator) -> dict:
    n = 96 * 365
    signal = np.cumsum(rng.normal(0, 0.1, n)) + 20.0
    signal[rng.random(n) < 0.02] = np.nan
    signal[5000:5200] = 21.0
    c = bat.BatteryCoefficients(-0.01, 0.05, -0.02)
    lim = bat.SafetyLimits()
    n_ep = 10_000
    s0 = rng.uniform(lim.s_min, lim.s_max, n_ep)
    actions = rng.uniform(lim.p_min, lim.p_max, (n_ep, 48))
    s_des = rng.uniform(lim.s_min, lim.s_max, n_ep)
    kernel = timeseries.gaussian_kernel(5.0)
    return {
        "constant_run_mask": lambda k: k.constant_run_mask(signal, 96),
        "spike_mask": lambda k: k.spike_mask(signal, 0.3),
        "gaussian_smooth": lambda k: k.gaussian_smooth(signal, kernel),
        "interpolate_gaps": lambda k: k.interpolate_gaps(signal, 2),
        "safe_rollout 10000x48": lambda k: k.safe_rollout(c.alpha0, c.alpha1, c.alpha2, lim.s_min, lim.s_max,
                                                          lim.p_min, lim.p_max, 48, s0, actions, s_des),
    }


def _same(a, b) -> bool:
    if isinstance(a, tuple):
        return all(_same(x, y) for x, y in zip(a, b))
    return np.array_equal(np.asarray(a), np.asarray(b), equal_nan=True)


def main() -> None:
    ap = argparse.ArgumentParser()
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args()
    backends = kernels.backends()
    cases = _cases(np.random.default_rng(0))
    print(f"backends: {', '.join(backends)} (default: {kernels.BACKEND})")
    print(f"{'kernel':<24}" + "".join(f"{name:>12}" for name in backends) + f"{'speedup':>10}{'equal':>8}")
    for label, fn in cases.items():
        times, outs = {}, {}
        for name, mod in backends.items():
            best = float("inf")
            for _ in range(args.repeat):
                t0 = time.perf_counter()
                outs[name] = fn(mod)
                best = min(best, time.perf_counter() - t0)
            times[name] = best
        row = f"{label:<24}" + "".join(f"{times[n] * 1e3:>10.2f}ms" for n in backends)
        if "cython" in times:
            row += f"{times['python'] / times['cython']:>9.1f}x"
            row += f"{str(_same(outs['python'], outs['cython'])):>8}"
        print(row)


if __name__ == "__main__":
    main()
