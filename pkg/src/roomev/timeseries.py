"""Gridded signals with explicit gaps, cleaning operators and whitening.

Every operator returns a new :class:`TimeSeries` on the same grid; removal
steps only swap samples for gaps (NaN). The exception is
:func:`subsample_valve`, which aggregates a 1-minute valve log to 15 minutes.
"""
from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field, replace
from datetime import datetime, timedelta
from pathlib import Path
from typing import Callable, Iterable, Sequence

import numpy as np

from roomev import kernels


@dataclass(frozen=True)
class TimeSeries:
    name: str
    unit: str
    t0: datetime
    values: np.ndarray
    dt: float = 15.0  # minutes

    def __post_init__(self) -> None:
        if not self.dt > 0:
            raise ValueError("dt must be positive")
        v = np.array(self.values, dtype=np.float64).ravel()
        if np.isinf(v).any():
            raise ValueError(f"{self.name}: infinite samples are not allowed")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    def __len__(self) -> int:
        return self.values.size

    @property
    def gaps(self) -> np.ndarray:
        return np.isnan(self.values)

    @property
    def step(self) -> timedelta:
        return timedelta(minutes=self.dt)

    def time_at(self, i: int) -> datetime:
        return self.t0 + i * self.step

    def timestamps(self) -> list[datetime]:
        return [self.time_at(i) for i in range(len(self))]

    def minute_of_day(self) -> np.ndarray:
        start = self.t0.hour * 60 + self.t0.minute + self.t0.second / 60.0
        return np.mod(start + self.dt * np.arange(len(self)), 1440.0)

    def with_values(self, values: np.ndarray) -> "TimeSeries":
        v = np.asarray(values, dtype=np.float64)
        if v.shape != self.values.shape:
            raise ValueError("replacement values must keep the grid length")
        return replace(self, values=v)


@dataclass(frozen=True)
class WhiteningStats:
    mean: float
    std: float

    def __post_init__(self) -> None:
        if not self.std > 0:
            raise ValueError("std must be positive")


@dataclass(frozen=True)
class ClipBounds:
    lo: float
    hi: float

    def __post_init__(self) -> None:
        if not self.lo < self.hi:
            raise ValueError("clip bounds need lo < hi")

    def apply(self, x):
        return np.clip(x, self.lo, self.hi)


# Physical intervals of the measured signals.
TABLE_BOUNDS: dict[str, ClipBounds] = {
    "outside_temp": ClipBounds(-30.0, 40.0),
    "irradiance": ClipBounds(0.0, 1300.0),
    "room_temp": ClipBounds(10.0, 40.0),
    "water_in": ClipBounds(10.0, 50.0),
    "water_out": ClipBounds(10.0, 50.0),
    "valve": ClipBounds(0.0, 1.0),
    "soc": ClipBounds(0.0, 100.0),
    "power": ClipBounds(-100.0, 100.0),
}


# -- removal operators --------------------------------------------------------


def remove_out_of_range(s: TimeSeries, lo: float, hi: float, exclude_boundary: bool = False) -> TimeSeries:
    if not lo < hi:
        raise ValueError("need lo < hi")
    v = s.values.copy()
    with np.errstate(invalid="ignore"):
        if exclude_boundary:
            bad = (v <= lo) | (v >= hi)
        else:
            bad = (v < lo) | (v > hi)
    v[bad] = np.nan
    return s.with_values(v)


def remove_constant_runs(s: TimeSeries, min_duration: float) -> TimeSeries:
    """Gap every maximal run of identical values lasting ``min_duration`` minutes or more."""
    if min_duration < s.dt:
        raise ValueError("min_duration must be at least one step")
    min_len = max(1, math.ceil(min_duration / s.dt - 1e-9))
    v = s.values.copy()
    v[kernels.constant_run_mask(v, min_len)] = np.nan
    return s.with_values(v)


def remove_spikes(s: TimeSeries, magnitude: float) -> TimeSeries:
    """Gap single samples that differ by ``magnitude`` or more from both non-gap neighbours."""
    if not magnitude > 0:
        raise ValueError("magnitude must be positive")
    v = s.values.copy()
    v[kernels.spike_mask(v, magnitude)] = np.nan
    return s.with_values(v)


def interpolate_gaps(s: TimeSeries, max_gap: float) -> TimeSeries:
    """Linearly fill interior gaps lasting strictly less than ``max_gap`` minutes."""
    if max_gap < s.dt:
        raise ValueError("max_gap must be at least one step")
    # a run of k missing samples lasts k*dt; fill only when k*dt < max_gap
    max_fill = math.ceil(max_gap / s.dt - 1e-9) - 1
    return s.with_values(kernels.interpolate_gaps(s.values, max_fill))


def gaussian_kernel(sigma: float) -> np.ndarray:
    """Unnormalised Gaussian weights on ``[-r, r]`` with ``r = round(4 sigma)``."""
    if not sigma > 0:
        raise ValueError("sigma must be positive")
    radius = max(1, int(4.0 * sigma + 0.5))
    x = np.arange(-radius, radius + 1, dtype=float)
    return np.exp(-0.5 * (x / sigma) ** 2) / (sigma * math.sqrt(2.0 * math.pi))


def gaussian_smooth(s: TimeSeries, sigma: float) -> TimeSeries:
    """Gap-aware Gaussian filter; ``sigma`` is in samples."""
    return s.with_values(kernels.gaussian_smooth(s.values, gaussian_kernel(sigma)))


# -- whitening ------------------------------------------------------------------


def whitening_stats(values: np.ndarray) -> WhiteningStats:
    v = np.asarray(values, dtype=float)
    v = v[~np.isnan(v)]
    if v.size < 2:
        raise ValueError("zero variance: need at least two observed samples")
    mean = float(v.mean())
    std = float(np.sqrt(np.mean((v - mean) ** 2)))
    if not std > 0:
        raise ValueError("zero variance: series is constant")
    return WhiteningStats(mean, std)


def whiten(s: TimeSeries) -> tuple[TimeSeries, WhiteningStats]:
    stats = whitening_stats(s.values)
    return s.with_values((s.values - stats.mean) / stats.std), stats


def unwhiten(s: TimeSeries, stats: WhiteningStats) -> TimeSeries:
    return s.with_values(s.values * stats.std + stats.mean)


# -- resampling -------------------------------------------------------------------


def subsample_valve(raw: TimeSeries, target_dt: float = 15.0) -> TimeSeries:
    """Average a fine-grid on/off valve log into ``target_dt`` bins.

    Bins without any observed sample become gaps; a partial trailing bin is dropped.
    """
    ratio = target_dt / raw.dt
    k = int(round(ratio))
    if k < 1 or abs(ratio - k) > 1e-9:
        raise ValueError("target_dt must be a whole multiple of the raw dt")
    v = raw.values
    with np.errstate(invalid="ignore"):
        if np.any((v != 0) & (v != 1) & ~np.isnan(v)):
            raise ValueError("raw valve samples must be 0 or 1")
    n_bins = v.size // k
    blocks = v[: n_bins * k].reshape(n_bins, k)
    observed = (~np.isnan(blocks)).sum(axis=1)
    total = np.nansum(blocks, axis=1)
    out = np.full(n_bins, np.nan)
    ok = observed > 0
    out[ok] = total[ok] / observed[ok]
    return TimeSeries(raw.name, raw.unit, raw.t0, out, dt=target_dt)


# -- named pipelines ----------------------------------------------------------------

Stage = tuple[str, dict]

_OPERATORS: dict[str, Callable[..., TimeSeries]] = {
    "remove_out_of_range": remove_out_of_range,
    "remove_constant_runs": remove_constant_runs,
    "remove_spikes": remove_spikes,
    "interpolate_gaps": interpolate_gaps,
    "gaussian_smooth": gaussian_smooth,
    "subsample_valve": subsample_valve,
}

HOUR = 60.0
DAY = 24 * HOUR

PIPELINES: dict[str, tuple[Stage, ...]] = {
    "room_temp": (
        ("remove_out_of_range", {"lo": 10.0, "hi": 40.0, "exclude_boundary": False}),
        ("remove_constant_runs", {"min_duration": DAY}),
        ("remove_spikes", {"magnitude": 1.5}),
        ("gaussian_smooth", {"sigma": 5.0}),
    ),
    "valve": (
        ("subsample_valve", {}),
        ("remove_constant_runs", {"min_duration": 30 * DAY}),
    ),
    "water_in": (
        ("remove_out_of_range", {"lo": 10.0, "hi": 50.0, "exclude_boundary": False}),
        ("gaussian_smooth", {"sigma": 5.0}),
    ),
    "water_out": (
        ("remove_out_of_range", {"lo": 10.0, "hi": 50.0, "exclude_boundary": False}),
        ("gaussian_smooth", {"sigma": 5.0}),
    ),
    "outside_temp": (
        ("remove_constant_runs", {"min_duration": 45.0}),
        ("interpolate_gaps", {"max_gap": 45.0}),
        ("gaussian_smooth", {"sigma": 2.0}),
    ),
    "irradiance": (
        ("remove_constant_runs", {"min_duration": 20 * HOUR}),
        ("interpolate_gaps", {"max_gap": 45.0}),
        ("gaussian_smooth", {"sigma": 2.0}),
    ),
    "soc": (
        ("remove_out_of_range", {"lo": 0.0, "hi": 100.0, "exclude_boundary": True}),
        ("remove_constant_runs", {"min_duration": DAY}),
    ),
    "power": (
        ("remove_constant_runs", {"min_duration": 6 * HOUR}),
    ),
}


def run_pipeline(s: TimeSeries, stages: Iterable[Stage]) -> TimeSeries:
    for name, kwargs in stages:
        try:
            op = _OPERATORS[name]
        except KeyError:
            raise ValueError(f"unknown preprocessing stage {name!r}") from None
        s = op(s, **kwargs)
    return s


def preprocess(s: TimeSeries, pipeline: str | None = None,
               pipelines: dict[str, Sequence[Stage]] | None = None) -> TimeSeries:
    """Clean ``s`` with the named pipeline (defaults to ``s.name``)."""
    table = PIPELINES if pipelines is None else pipelines
    key = pipeline or s.name
    if key not in table:
        raise ValueError(f"no preprocessing pipeline named {key!r}; known: {sorted(table)}")
    return run_pipeline(s, table[key])


# -- CSV ----------------------------------------------------------------------------


def _fmt(x: float) -> str:
    return "" if math.isnan(x) else repr(float(x))


def to_csv(s: TimeSeries, path: str | Path | None = None, comment: str | None = None) -> str:
    buf = io.StringIO()
    if comment:
        buf.write(f"# {comment}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["timestamp", s.name])
    for i, x in enumerate(s.values):
        w.writerow([s.time_at(i).isoformat(), _fmt(x)])
    text = buf.getvalue()
    if path is not None:
        Path(path).write_text(text)
    return text


def frame_to_csv(series: Sequence[TimeSeries], path: str | Path | None = None,
                 comment: str | None = None) -> str:
    """Several aligned series in one table, one column each."""
    first = series[0]
    for s in series[1:]:
        if s.t0 != first.t0 or s.dt != first.dt or len(s) != len(first):
            raise ValueError(f"series {s.name!r} is not on the grid of {first.name!r}")
    buf = io.StringIO()
    if comment:
        buf.write(f"# {comment}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["timestamp"] + [s.name for s in series])
    for i in range(len(first)):
        w.writerow([first.time_at(i).isoformat()] + [_fmt(s.values[i]) for s in series])
    text = buf.getvalue()
    if path is not None:
        Path(path).write_text(text)
    return text


def read_csv(path: str | Path, units: dict[str, str] | None = None) -> dict[str, TimeSeries]:
    return parse_csv(Path(path).read_text(), units)


def parse_csv(text: str, units: dict[str, str] | None = None) -> dict[str, TimeSeries]:
    """Parse a ``timestamp,<name>...`` table; empty fields are gaps, ``#`` lines are skipped."""
    rows = [r for r in csv.reader(line for line in text.splitlines() if not line.startswith("#"))]
    if not rows or rows[0][0] != "timestamp":
        raise ValueError("CSV must start with a 'timestamp' header column")
    header, body = rows[0], [r for r in rows[1:] if r]
    if not body:
        raise ValueError("CSV has no data rows")
    stamps = [datetime.fromisoformat(r[0]) for r in body]
    dt = (stamps[1] - stamps[0]).total_seconds() / 60.0 if len(stamps) > 1 else 15.0
    for a, b in zip(stamps, stamps[1:]):
        if abs((b - a).total_seconds() / 60.0 - dt) > 1e-9:
            raise ValueError(f"irregular grid at {b.isoformat()}")
    units = units or {}
    out = {}
    for j, name in enumerate(header[1:], start=1):
        vals = np.array([float(r[j]) if r[j] != "" else np.nan for r in body])
        out[name] = TimeSeries(name, units.get(name, ""), stamps[0], vals, dt=dt)
    return out


@dataclass
class GapReport:
    name: str
    n: int
    gaps_before: int
    gaps_after: int
    stages: list[str] = field(default_factory=list)

    def as_row(self) -> dict:
        return {"name": self.name, "n": self.n, "gaps_before": self.gaps_before,
                "gaps_after": self.gaps_after, "stages": "|".join(self.stages)}
