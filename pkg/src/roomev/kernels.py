"""Kernel backend selection.

The compiled Cython module is used when it was built; otherwise the numpy
fallback in :mod:`roomev._kernels_py` is used. Set ``ROOMEV_PURE_PYTHON=1``
to force the fallback.
"""
from __future__ import annotations

import os

from roomev import _kernels_py

if os.environ.get("ROOMEV_PURE_PYTHON", "") not in ("", "0"):
    _impl = _kernels_py
    BACKEND = "python"
else:
    try:
        from roomev import _kernels_cy as _impl  # type: ignore[attr-defined]

        BACKEND = "cython"
    except ImportError:
        _impl = _kernels_py
        BACKEND = "python"

constant_run_mask = _impl.constant_run_mask
spike_mask = _impl.spike_mask
gaussian_smooth = _impl.gaussian_smooth
interpolate_gaps = _impl.interpolate_gaps
safe_rollout = _impl.safe_rollout


def backends() -> dict:
    """All importable backends by name, for benchmarks and cross-checks."""
    out = {"python": _kernels_py}
    try:
        from roomev import _kernels_cy

        out["cython"] = _kernels_cy
    except ImportError:
        pass
    return out
