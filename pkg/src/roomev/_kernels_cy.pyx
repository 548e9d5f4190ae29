# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled twins of the kernels in ``_kernels_py``.

Scalar loops over contiguous float64 buffers. The safety rollout evaluates the
same IEEE operations in the same order as ``roomev.battery`` (the build turns
off FMA contraction), so results match the Python paths exactly.
"""
import numpy as np

from libc.math cimport fabs, isnan, NAN

cdef double _EPS = 2.0 ** -52


def constant_run_mask(values, Py_ssize_t min_len):
    cdef const double[::1] v = np.ascontiguousarray(values, dtype=np.float64)
    cdef Py_ssize_t n = v.shape[0]
    out_arr = np.zeros(n, dtype=np.uint8)
    cdef unsigned char[::1] out = out_arr
    cdef Py_ssize_t i = 0, j, k
    while i < n:
        if isnan(v[i]):
            i += 1
            continue
        j = i + 1
        while j < n and not isnan(v[j]) and v[j] == v[i]:
            j += 1
        if j - i >= min_len:
            for k in range(i, j):
                out[k] = 1
        i = j
    return out_arr.view(np.bool_)


def spike_mask(values, double magnitude):
    cdef const double[::1] v = np.ascontiguousarray(values, dtype=np.float64)
    cdef Py_ssize_t n = v.shape[0]
    out_arr = np.zeros(n, dtype=np.uint8)
    cdef unsigned char[::1] out = out_arr
    cdef Py_ssize_t prev = -1, cur = -1, i
    for i in range(n):
        if isnan(v[i]):
            continue
        if prev >= 0 and cur >= 0:
            if fabs(v[cur] - v[prev]) >= magnitude and fabs(v[cur] - v[i]) >= magnitude:
                out[cur] = 1
        prev = cur
        cur = i
    return out_arr.view(np.bool_)


def gaussian_smooth(values, kernel):
    cdef const double[::1] v = np.ascontiguousarray(values, dtype=np.float64)
    cdef const double[::1] w = np.ascontiguousarray(kernel, dtype=np.float64)
    cdef Py_ssize_t n = v.shape[0]
    cdef Py_ssize_t radius = (w.shape[0] - 1) // 2
    out_arr = np.empty(n)
    cdef double[::1] out = out_arr
    cdef Py_ssize_t i, j, lo, hi
    cdef double num, den, wj
    for i in range(n):
        if isnan(v[i]):
            out[i] = NAN
            continue
        num = 0.0
        den = 0.0
        lo = i - radius if i >= radius else 0
        hi = i + radius if i + radius < n else n - 1
        for j in range(lo, hi + 1):
            if not isnan(v[j]):
                wj = w[j - i + radius]
                num += wj * v[j]
                den += wj
        out[i] = num / den
    return out_arr


def interpolate_gaps(values, Py_ssize_t max_fill):
    out_arr = np.array(values, dtype=np.float64)
    cdef double[::1] v = out_arr
    cdef Py_ssize_t n = v.shape[0]
    cdef Py_ssize_t last = -1, i, j
    cdef double diff
    for i in range(n):
        if isnan(v[i]):
            continue
        if last >= 0 and 0 < i - last - 1 <= max_fill:
            diff = v[i] - v[last]
            for j in range(last + 1, i):
                v[j] = v[last] + diff * <double>(j - last) / <double>(i - last)
        last = i
    return out_arr


# -- battery safety rollout ---------------------------------------------------

cdef inline double _delta(double a0, double a1, double slope_c, double p) nogil:
    if p > 0:
        return a0 + slope_c * p
    return a0 + a1 * p


cdef inline double _c_bat(double bound, double s, double a0, double a1, double slope_c) nogil:
    cdef double d = bound - s - a0
    if d > 0:
        return d / slope_c
    return d / a1


cdef inline double _power_upper(double bound, double s, double a0, double a1, double slope_c,
                               double floor) nogil:
    cdef double p = _c_bat(bound, s, a0, a1, slope_c)
    cdef double h = (fabs(s) + fabs(bound) + 1.0) * _EPS / a1
    while s + _delta(a0, a1, slope_c, p) > bound:
        p = p - h
    if p < floor and s + _delta(a0, a1, slope_c, floor) <= bound:
        p = floor
    return p


cdef inline double _power_lower(double bound, double s, double a0, double a1, double slope_c,
                               double cap) nogil:
    cdef double p = _c_bat(bound, s, a0, a1, slope_c)
    cdef double h = (fabs(s) + fabs(bound) + 1.0) * _EPS / a1
    while s + _delta(a0, a1, slope_c, p) < bound:
        p = p + h
    if p > cap and s + _delta(a0, a1, slope_c, cap) >= bound:
        p = cap
    return p


def safe_rollout(double a0, double a1, double a2, double s_min, double s_max,
                 double p_min, double p_max, long t_des, s0, actions, s_des):
    cdef const double[:, ::1] act = np.ascontiguousarray(actions, dtype=np.float64)
    cdef const double[::1] init = np.ascontiguousarray(s0, dtype=np.float64)
    cdef const double[::1] goal = np.ascontiguousarray(s_des, dtype=np.float64)
    cdef Py_ssize_t n_ep = act.shape[0], horizon = act.shape[1]
    cdef Py_ssize_t depth = t_des - 1 if t_des > 1 else 0
    soc_arr = np.empty((n_ep, horizon + 1))
    applied_arr = np.empty((n_ep, horizon))
    infeasible_arr = np.zeros((n_ep, horizon), dtype=np.uint8)
    ladder_arr = np.empty(depth + 1)
    cdef double[:, ::1] soc = soc_arr
    cdef double[:, ::1] applied = applied_arr
    cdef unsigned char[:, ::1] infeasible = infeasible_arr
    cdef double[::1] ladder = ladder_arr
    cdef double slope_c = a1 + a2
    cdef double d_max = _delta(a0, a1, slope_c, p_max)
    cdef double s, x, h, lo, hi, g, a, p, target
    cdef Py_ssize_t e, t, k
    for e in range(n_ep):
        if t_des > 0:
            target = goal[e]
            ladder[0] = target
            for k in range(depth):
                x = target - d_max
                h = (fabs(target) + 1.0) * _EPS
                while x + d_max < target:
                    x = x + h
                ladder[k + 1] = x
                target = x
        s = init[e]
        soc[e, 0] = s
        for t in range(horizon):
            x = _power_lower(s_min, s, a0, a1, slope_c, p_max)
            lo = x if x > p_min else p_min
            x = _power_upper(s_max, s, a0, a1, slope_c, p_min)
            hi = x if x < p_max else p_max
            if t_des > 0 and t < t_des:
                g = _power_lower(ladder[t_des - t - 1], s, a0, a1, slope_c, p_max)
                lo = g if g > lo else lo
            a = act[e, t]
            if lo <= hi:
                if a <= lo:
                    p = lo
                elif a >= hi:
                    p = hi
                else:
                    p = a
            else:
                infeasible[e, t] = 1
                p = lo if lo <= p_max else p_max
            applied[e, t] = p
            s = s + _delta(a0, a1, slope_c, p)
            soc[e, t + 1] = s
    return soc_arr, applied_arr, infeasible_arr.view(np.bool_)
