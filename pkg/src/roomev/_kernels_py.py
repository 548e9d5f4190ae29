"""Pure-numpy implementations of the hot kernels.

Every function here has a twin in ``_kernels_cy.pyx`` with the same signature.
The safety rollout performs the same IEEE operations in the same order as
:mod:`roomev.battery`, so all three paths agree bit for bit.
"""
from __future__ import annotations

import numpy as np

_EPS = 2.0**-52


def constant_run_mask(values: np.ndarray, min_len: int) -> np.ndarray:
    """Mask of samples in maximal runs of exactly equal, non-gap values of length >= min_len."""
    v = np.asarray(values, dtype=float)
    n = v.size
    if n == 0:
        return np.zeros(0, dtype=bool)
    valid = ~np.isnan(v)
    same = np.zeros(n, dtype=bool)
    same[1:] = valid[1:] & valid[:-1] & (v[1:] == v[:-1])
    run_id = np.cumsum(~same)
    lengths = np.bincount(run_id)
    return valid & (lengths[run_id] >= min_len)


def spike_mask(values: np.ndarray, magnitude: float) -> np.ndarray:
    v = np.asarray(values, dtype=float)
    out = np.zeros(v.size, dtype=bool)
    idx = np.flatnonzero(~np.isnan(v))
    if idx.size < 3:
        return out
    x = v[idx]
    mid = x[1:-1]
    spike = (np.abs(mid - x[:-2]) >= magnitude) & (np.abs(mid - x[2:]) >= magnitude)
    out[idx[1:-1][spike]] = True
    return out


def gaussian_smooth(values: np.ndarray, kernel: np.ndarray) -> np.ndarray:
    """Gap-aware convolution: weights renormalised over the non-gap support.

    Offsets are accumulated in ascending order, the same order as the
    compiled loop, so both backends round identically.
    """
    v = np.asarray(values, dtype=float)
    w = np.asarray(kernel, dtype=float)
    radius = (w.size - 1) // 2
    n = v.size
    valid = ~np.isnan(v)
    filled = np.where(valid, v, 0.0)
    pad = np.zeros(n + 2 * radius)
    padv = np.zeros(n + 2 * radius, dtype=bool)
    pad[radius:radius + n] = filled
    padv[radius:radius + n] = valid
    num = np.zeros(n)
    den = np.zeros(n)
    for k in range(w.size):
        m = padv[k:k + n]
        num += np.where(m, w[k] * pad[k:k + n], 0.0)
        den += np.where(m, w[k], 0.0)
    out = np.full(n, np.nan)
    out[valid] = num[valid] / den[valid]
    return out


def interpolate_gaps(values: np.ndarray, max_fill: int) -> np.ndarray:
    """Linearly fill interior gap runs of at most ``max_fill`` samples."""
    v = np.array(values, dtype=float)
    gap = np.isnan(v)
    if not gap.any() or max_fill < 1:
        return v
    idx = np.flatnonzero(~gap)
    if idx.size < 2:
        return v
    left, right = idx[:-1], idx[1:]
    run = right - left - 1
    for a, b in zip(left[(run > 0) & (run <= max_fill)], right[(run > 0) & (run <= max_fill)]):
        j = np.arange(a + 1, b)
        v[a + 1:b] = v[a] + (v[b] - v[a]) * (j - a) / (b - a)
    return v


# -- battery safety rollout ---------------------------------------------------


def _delta(a0, a1, slope_c, p):
    return np.where(p > 0, a0 + slope_c * p, a0 + a1 * p)


def _c_bat(bound, s, a0, a1, slope_c):
    d = bound - s - a0
    return np.where(d > 0, d / slope_c, d / a1)


def _power_upper(bound, s, a0, a1, slope_c, floor):
    p = _c_bat(bound, s, a0, a1, slope_c)
    h = (np.abs(s) + np.abs(bound) + 1.0) * _EPS / a1
    bad = s + _delta(a0, a1, slope_c, p) > bound
    while bad.any():
        p = np.where(bad, p - h, p)
        bad = s + _delta(a0, a1, slope_c, p) > bound
    fl = np.float64(floor)
    return np.where((p < fl) & (s + _delta(a0, a1, slope_c, fl) <= bound), fl, p)


def _power_lower(bound, s, a0, a1, slope_c, cap):
    p = _c_bat(bound, s, a0, a1, slope_c)
    h = (np.abs(s) + np.abs(bound) + 1.0) * _EPS / a1
    bad = s + _delta(a0, a1, slope_c, p) < bound
    while bad.any():
        p = np.where(bad, p + h, p)
        bad = s + _delta(a0, a1, slope_c, p) < bound
    cp = np.float64(cap)
    return np.where((p > cp) & (s + _delta(a0, a1, slope_c, cp) >= bound), cp, p)


def _ladders(s_des, p_max, a0, a1, slope_c, depth):
    d = float(_delta(a0, a1, slope_c, np.float64(p_max)))
    out = np.empty((s_des.size, depth + 1))
    target = s_des.copy()
    out[:, 0] = target
    for k in range(depth):
        x = target - d
        h = (np.abs(target) + 1.0) * _EPS
        bad = x + d < target
        while bad.any():
            x = np.where(bad, x + h, x)
            bad = x + d < target
        out[:, k + 1] = x
        target = x
    return out


def safe_rollout(a0, a1, a2, s_min, s_max, p_min, p_max, t_des, s0, actions, s_des):
    slope_c = a1 + a2
    n_ep, horizon = actions.shape
    soc = np.empty((n_ep, horizon + 1))
    applied = np.empty((n_ep, horizon))
    infeasible = np.zeros((n_ep, horizon), dtype=bool)
    ladder = _ladders(s_des, p_max, a0, a1, slope_c, max(t_des - 1, 0)) if t_des > 0 else None
    s = s0.astype(float).copy()
    soc[:, 0] = s
    smin_v = np.full(n_ep, float(s_min))
    smax_v = np.full(n_ep, float(s_max))
    for t in range(horizon):
        x = _power_lower(smin_v, s, a0, a1, slope_c, p_max)
        lo = np.where(x > p_min, x, p_min)
        x = _power_upper(smax_v, s, a0, a1, slope_c, p_min)
        hi = np.where(x < p_max, x, p_max)
        if ladder is not None and t < t_des:
            g = _power_lower(ladder[:, t_des - t - 1], s, a0, a1, slope_c, p_max)
            lo = np.where(g > lo, g, lo)
        a = actions[:, t]
        ok = lo <= hi
        clipped = np.where(a <= lo, lo, np.where(a >= hi, hi, a))
        forced = np.where(lo <= p_max, lo, p_max)
        p = np.where(ok, clipped, forced)
        infeasible[:, t] = ~ok
        applied[:, t] = p
        s = s + _delta(a0, a1, slope_c, p)
        soc[:, t + 1] = s
    return soc, applied, infeasible
