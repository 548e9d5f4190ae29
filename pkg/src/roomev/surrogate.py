"""Recurrent delta-predictors for weather and room temperature, and their composition.

Models see a window of ``lookback`` rows and predict the next value of their
output variables as ``last value + network delta``. Training happens in
whitened units; predictions are unwhitened and clipped to physical bounds.

Historical data is handled as a *frame*: an ``(N, 6)`` array with columns
:data:`FRAME_COLUMNS` plus the minute of day of every row. ``valve[k]`` is
the opening during the interval that ends at row ``k``, so a window ending
at ``k`` is paired with the upcoming control ``valve[k + 1]``.
"""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Sequence

import numpy as np

from roomev import bundle, nn
from roomev.timeseries import TABLE_BOUNDS, ClipBounds, WhiteningStats

FRAME_COLUMNS = ("outside_temp", "irradiance", "room_temp", "water_in", "water_out", "valve")
TIME_INPUTS = ("t_sin", "t_cos")
WEATHER_INPUTS = ("outside_temp", "irradiance", "t_sin", "t_cos")
WEATHER_OUTPUTS = ("outside_temp", "irradiance")
ROOM_INPUTS = ("outside_temp", "irradiance", "room_temp", "water_in", "water_out",
               "t_sin", "t_cos", "valve_next")
ROOM_OUTPUTS = ("room_temp",)
_COL = {name: k for k, name in enumerate(FRAME_COLUMNS)}
STEP_MIN = 15.0


class EmptyDatasetError(ValueError):
    pass


@dataclass(frozen=True)
class TimeEncoding:
    t_sin: float
    t_cos: float


def encode_time(minute_of_day) -> TimeEncoding:
    if not 0 <= minute_of_day < 1440:
        raise ValueError("minute_of_day must lie in [0, 1440)")
    angle = 2.0 * math.pi * minute_of_day / 1440.0
    return TimeEncoding(math.sin(angle), math.cos(angle))


def encode_time_array(minutes: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    angle = 2.0 * np.pi * np.mod(minutes, 1440.0) / 1440.0
    return np.sin(angle), np.cos(angle)


@dataclass(frozen=True)
class SurrogateSpec:
    name: str
    inputs: tuple[str, ...]
    outputs: tuple[str, ...]
    lookback: int = 19
    n_layers: int = 1
    n_hidden: int = 30
    cell: str = "lstm"
    sigma_i: float = 0.0

    def __post_init__(self) -> None:
        object.__setattr__(self, "inputs", tuple(self.inputs))
        object.__setattr__(self, "outputs", tuple(self.outputs))
        if self.lookback < 1 or self.n_layers < 1 or self.n_hidden < 1:
            raise ValueError("lookback, n_layers and n_hidden must be >= 1")
        if self.sigma_i < 0:
            raise ValueError("sigma_i must be >= 0")
        if self.cell not in nn.CELLS:
            raise ValueError(f"cell must be one of {sorted(nn.CELLS)}")
        missing = [o for o in self.outputs if o not in self.inputs]
        if missing:
            raise ValueError(f"outputs must also be inputs (delta base): {missing}")
        for v in self.inputs:
            if v not in FRAME_COLUMNS and v not in TIME_INPUTS and v != "valve_next":
                raise ValueError(f"unknown input variable {v!r}")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["inputs"] = list(self.inputs)
        d["outputs"] = list(self.outputs)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "SurrogateSpec":
        return cls(**d)

    @property
    def bounds(self) -> list[ClipBounds]:
        return [TABLE_BOUNDS[o] for o in self.outputs]

    def source_columns(self) -> list[int]:
        cols = set()
        for v in self.inputs + self.outputs:
            if v in _COL:
                cols.add(_COL[v])
            elif v == "valve_next":
                cols.add(_COL["valve"])
        return sorted(cols)


def weather_spec(**kw) -> SurrogateSpec:
    base = dict(name="weather", inputs=WEATHER_INPUTS, outputs=WEATHER_OUTPUTS,
                n_layers=1, n_hidden=60, cell="gru", sigma_i=0.01202)
    base.update(kw)
    return SurrogateSpec(**base)


def room_spec(**kw) -> SurrogateSpec:
    base = dict(name="room", inputs=ROOM_INPUTS, outputs=ROOM_OUTPUTS,
                n_layers=3, n_hidden=30, cell="lstm", sigma_i=3.633e-6)
    base.update(kw)
    return SurrogateSpec(**base)


@dataclass(frozen=True)
class TrainConfig:
    eta: float = 1e-3
    n_ep: int = 10
    batch_size: int = 32
    seed: int = 0
    split: tuple[float, float, float] = (0.6, 0.2, 0.2)

    def __post_init__(self) -> None:
        object.__setattr__(self, "split", tuple(self.split))
        if not self.eta > 0:
            raise ValueError("eta must be positive")
        if self.n_ep < 1 or self.batch_size < 1:
            raise ValueError("n_ep and batch_size must be >= 1")
        if len(self.split) != 3 or abs(sum(self.split) - 1.0) > 1e-9 or min(self.split) < 0:
            raise ValueError("split must be three non-negative fractions summing to 1")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["split"] = list(self.split)
        return d


# Hyperparameters reported for the reference building.
PAPER_WEATHER_TRAIN = TrainConfig(eta=6.163e-5, n_ep=80)
PAPER_ROOM_TRAIN = TrainConfig(eta=1.544e-5, n_ep=10)


# -- frames and features ------------------------------------------------------------------


@dataclass
class Frame:
    """Historical signals on one grid; ``data`` columns follow :data:`FRAME_COLUMNS`."""

    data: np.ndarray
    minutes: np.ndarray

    def __post_init__(self) -> None:
        self.data = np.asarray(self.data, dtype=float)
        self.minutes = np.asarray(self.minutes, dtype=float)
        if self.data.ndim != 2 or self.data.shape[1] != len(FRAME_COLUMNS):
            raise ValueError(f"frame data must have shape (N, {len(FRAME_COLUMNS)})")
        if self.minutes.shape != (self.data.shape[0],):
            raise ValueError("minutes must have one entry per row")

    def __len__(self) -> int:
        return self.data.shape[0]

    def column(self, name: str) -> np.ndarray:
        return self.data[:, _COL[name]]

    @classmethod
    def from_series(cls, series: dict) -> "Frame":
        first = series[FRAME_COLUMNS[0]]
        data = np.column_stack([np.asarray(series[c].values, dtype=float) for c in FRAME_COLUMNS])
        return cls(data, first.minute_of_day())

    @classmethod
    def from_trace(cls, trace) -> "Frame":
        return cls.from_series({c: trace.series(c) for c in FRAME_COLUMNS})

    def slice(self, start: int, stop: int) -> "Frame":
        return Frame(self.data[start:stop], self.minutes[start:stop])


def window_features(windows: np.ndarray, last_minutes: np.ndarray, u_next: np.ndarray,
                    inputs: Sequence[str]) -> np.ndarray:
    """Raw-unit model inputs for frame windows ``(B, L, 6)`` ending at ``last_minutes``."""
    B, L, _ = windows.shape
    offsets = STEP_MIN * np.arange(-(L - 1), 1)
    minutes = np.asarray(last_minutes, dtype=float)[:, None] + offsets[None, :]
    t_sin, t_cos = encode_time_array(minutes)
    out = np.empty((B, L, len(inputs)))
    for j, name in enumerate(inputs):
        if name == "t_sin":
            out[:, :, j] = t_sin
        elif name == "t_cos":
            out[:, :, j] = t_cos
        elif name == "valve_next":
            out[:, :-1, j] = windows[:, 1:, _COL["valve"]]
            out[:, -1, j] = u_next
        else:
            out[:, :, j] = windows[:, :, _COL[name]]
    return out


# -- the model ----------------------------------------------------------------------------


class SurrogateModel:
    def __init__(self, spec: SurrogateSpec, stats: dict[str, WhiteningStats], seed: int = 0,
                 net: nn.RecurrentNet | None = None, delta_stats: dict[str, float] | None = None):
        self.spec = spec
        self.seed = seed
        for v in spec.inputs:
            if v not in stats and v not in TIME_INPUTS:
                raise ValueError(f"missing whitening stats for {v!r}")
        self.stats = dict(stats)
        self.net = net or nn.RecurrentNet(len(spec.inputs), len(spec.outputs), spec.n_layers,
                                          spec.n_hidden, spec.cell, rng=np.random.default_rng(seed))
        self._mean = np.array([0.0 if v in TIME_INPUTS else stats[v].mean for v in spec.inputs])
        self._std = np.array([1.0 if v in TIME_INPUTS else stats[v].std for v in spec.inputs])
        self._noisy = np.array([v not in TIME_INPUTS for v in spec.inputs])
        self._out_idx = np.array([spec.inputs.index(o) for o in spec.outputs])
        self._out_std = self._std[self._out_idx]
        lo = [b.lo for b in spec.bounds]
        hi = [b.hi for b in spec.bounds]
        self._lo, self._hi = np.array(lo), np.array(hi)
        # bounds of every input in whitened units, for clipping noisy inputs
        in_lo = np.array([-1.0 if v in TIME_INPUTS else TABLE_BOUNDS[_bound_key(v)].lo for v in spec.inputs])
        in_hi = np.array([1.0 if v in TIME_INPUTS else TABLE_BOUNDS[_bound_key(v)].hi for v in spec.inputs])
        self._wlo = (in_lo - self._mean) / self._std
        self._whi = (in_hi - self._mean) / self._std

    # whitening helpers
    def whiten_inputs(self, x_raw: np.ndarray) -> np.ndarray:
        return (x_raw - self._mean) / self._std

    def _check(self, window: np.ndarray) -> None:
        if window.ndim != 3 or window.shape[1] != self.spec.lookback or window.shape[2] != len(self.spec.inputs):
            raise ValueError(f"window must have shape (B, {self.spec.lookback}, {len(self.spec.inputs)}), "
                             f"got {window.shape}")

    def _noise(self, xw: np.ndarray, rng: np.random.Generator) -> np.ndarray:
        if self.spec.sigma_i <= 0:
            return xw
        noise = rng.normal(0.0, self.spec.sigma_i, xw.shape) * self._noisy
        return np.clip(xw + noise, self._wlo, self._whi)

    def forward(self, window_w: np.ndarray, train_mode: bool = False, seed: int | None = None,
                rng: np.random.Generator | None = None) -> np.ndarray:
        """Raw-unit, clipped prediction of the next output values from a whitened window."""
        window_w = np.asarray(window_w, dtype=float)
        self._check(window_w)
        x = window_w
        if train_mode:
            x = self._noise(window_w, rng or np.random.default_rng(seed))
        delta = self.net(x)
        base = window_w[:, -1, self._out_idx] * self._out_std + self._mean[self._out_idx]
        return np.clip(base + delta * self._out_std, self._lo, self._hi)

    def predict(self, window_raw: np.ndarray) -> np.ndarray:
        return self.forward(self.whiten_inputs(np.asarray(window_raw, dtype=float)))

    # serialisation
    def meta(self) -> dict:
        return {
            "spec": self.spec.to_dict(),
            "seed": self.seed,
            "stats": {k: {"mean": s.mean, "std": s.std} for k, s in sorted(self.stats.items())},
        }

    def save(self, path: str | Path, extra: dict | None = None) -> Path:
        meta = self.meta()
        if extra:
            meta["extra"] = extra
        return bundle.save_bundle(path, "surrogate", meta, self.net.named_params())

    @classmethod
    def load(cls, path: str | Path) -> "SurrogateModel":
        manifest, arrays = bundle.load_bundle(path, "surrogate")
        meta = manifest["meta"]
        spec = SurrogateSpec.from_dict(meta["spec"])
        stats = {k: WhiteningStats(v["mean"], v["std"]) for k, v in meta["stats"].items()}
        model = cls(spec, stats, meta["seed"])
        expected = dict(model.net.param_shapes())
        if set(arrays) != set(expected):
            raise bundle.BundleError("bundle parameters do not match the spec's layer layout")
        for name, arr in model.net.named_params():
            if arrays[name].shape != arr.shape:
                raise bundle.BundleError(f"{name}: shape {arrays[name].shape} != {arr.shape}")
            arr[...] = arrays[name]
        return model


def _bound_key(v: str) -> str:
    return "valve" if v == "valve_next" else v


# -- datasets ------------------------------------------------------------------------------


def valid_ends(frame: Frame, spec: SurrogateSpec, horizon: int = 1,
               start: int = 0, stop: int | None = None) -> np.ndarray:
    """Row indices ``k`` whose window ``[k-L+1, k]`` and targets up to ``k+horizon`` are gap-free."""
    stop = len(frame) if stop is None else stop
    L = spec.lookback
    ok_row = ~np.isnan(frame.data[:, spec.source_columns()]).any(axis=1)
    span = L + horizon
    csum = np.concatenate([[0], np.cumsum(~ok_row)])
    ends = np.arange(max(start + L - 1, 0), stop - horizon)
    if ends.size == 0:
        return ends
    bad = csum[ends + horizon + 1] - csum[ends + horizon + 1 - span]
    return ends[bad == 0]


def split_bounds(n: int, split: Sequence[float]) -> list[tuple[int, int]]:
    a = int(round(n * split[0]))
    b = int(round(n * (split[0] + split[1])))
    return [(0, a), (a, b), (b, n)]


def gather_windows(frame: Frame, ends: np.ndarray, lookback: int) -> np.ndarray:
    idx = ends[:, None] + np.arange(-(lookback - 1), 1)[None, :]
    return frame.data[idx]


def fit_stats(frame: Frame, spec: SurrogateSpec, stop: int | None = None) -> dict[str, WhiteningStats]:
    from roomev.timeseries import whitening_stats

    part = frame.data[:stop]
    stats = {}
    for v in spec.inputs:
        if v in TIME_INPUTS:
            continue
        stats[v] = whitening_stats(part[:, _COL[_bound_key(v)]])
    return stats


@dataclass
class Batch:
    x: np.ndarray        # whitened inputs (B, L, F)
    target: np.ndarray   # whitened deltas (B, n_out)


def make_batch(model: SurrogateModel, frame: Frame, ends: np.ndarray) -> Batch:
    spec = model.spec
    win = gather_windows(frame, ends, spec.lookback)
    u_next = frame.data[ends + 1, _COL["valve"]]
    x_raw = window_features(win, frame.minutes[ends], u_next, spec.inputs)
    nxt = frame.data[ends + 1][:, [_COL[o] for o in spec.outputs]]
    last = x_raw[:, -1, model._out_idx]
    return Batch(model.whiten_inputs(x_raw), (nxt - last) / model._out_std)


@dataclass
class TrainResult:
    model: SurrogateModel
    train_loss: list[float] = field(default_factory=list)
    val_loss: list[float] = field(default_factory=list)
    persistence_val: float = float("nan")
    n_train: int = 0
    n_val: int = 0


def _mse_delta(model: SurrogateModel, b: Batch) -> float:
    if b.x.shape[0] == 0:
        return float("nan")
    pred = model.net(b.x)
    return float(np.mean((pred - b.target) ** 2))


def train(spec: SurrogateSpec, frame: Frame, config: TrainConfig,
          zero_head: bool = False, log=None) -> TrainResult:
    """Fit a delta-predictor with Adam on shuffled minibatches of the chronological train split."""
    (tr0, tr1), (va0, va1), _ = split_bounds(len(frame), config.split)
    train_ends = valid_ends(frame, spec, 1, tr0, tr1)
    if train_ends.size == 0:
        raise EmptyDatasetError("empty training set: no gap-free windows in the train split")
    val_ends = valid_ends(frame, spec, 1, va0, va1)
    stats = fit_stats(frame, spec, tr1)
    rng = np.random.default_rng(config.seed)
    net = nn.RecurrentNet(len(spec.inputs), len(spec.outputs), spec.n_layers, spec.n_hidden,
                          spec.cell, rng=np.random.default_rng(config.seed), zero_head=zero_head)
    model = SurrogateModel(spec, stats, config.seed, net)
    train_b = make_batch(model, frame, train_ends)
    val_b = make_batch(model, frame, val_ends)
    opt = nn.Adam(net.n_params(), config.eta)
    result = TrainResult(model, n_train=train_ends.size, n_val=val_ends.size)
    result.persistence_val = float(np.mean(val_b.target ** 2)) if val_ends.size else float("nan")
    n = train_ends.size
    for epoch in range(config.n_ep):
        order = rng.permutation(n)
        total = 0.0
        for s in range(0, n, config.batch_size):
            idx = order[s:s + config.batch_size]
            x = model._noise(train_b.x[idx], rng)
            pred, caches = net.forward(x)
            err = pred - train_b.target[idx]
            total += float(np.sum(err ** 2))
            _, grads = net.backward(2.0 * err / err.size, caches)
            opt.apply(net, net.flatten_grads(grads))
        result.train_loss.append(total / (n * len(spec.outputs)))
        result.val_loss.append(_mse_delta(model, val_b))
        if log is not None:
            log(f"{spec.name} epoch {epoch + 1}/{config.n_ep}: train {result.train_loss[-1]:.5g} "
                f"val {result.val_loss[-1]:.5g}")
    return result


# -- multistep rollouts ------------------------------------------------------------------------


def rollout_self(model: SurrogateModel, frame: Frame, ends: np.ndarray, horizon: int) -> np.ndarray:
    """Feed a model its own outputs for ``horizon`` steps; other inputs come from the data.

    Returns predictions of shape ``(B, horizon, n_out)``.
    """
    spec = model.spec
    L = spec.lookback
    out_cols = [_COL[o] for o in spec.outputs]
    idx = ends[:, None] + np.arange(-(L - 1), horizon + 1)[None, :]
    work = frame.data[idx].copy()          # (B, L + horizon, 6)
    preds = np.empty((ends.size, horizon, len(spec.outputs)))
    for h in range(horizon):
        win = work[:, h:h + L]
        last = ends + h
        u_next = work[:, h + L, _COL["valve"]]
        y = model.predict(window_features(win, frame.minutes[last], u_next, spec.inputs))
        preds[:, h] = y
        work[:, h + L, out_cols] = y
    return preds


def multistep_mse(model: SurrogateModel, frame: Frame, horizon: int = 24, split_index: int = 1,
                  split: Sequence[float] = (0.6, 0.2, 0.2), stride: int = 4) -> float:
    """Mean squared whitened error over ``horizon``-step self-rollouts on a split (default validation)."""
    a, b = split_bounds(len(frame), split)[split_index]
    ends = valid_ends(frame, model.spec, horizon, a, b)[::stride]
    if ends.size == 0:
        raise EmptyDatasetError("no validation windows long enough for the rollout horizon")
    preds = rollout_self(model, frame, ends, horizon)
    cols = [_COL[o] for o in model.spec.outputs]
    truth = frame.data[ends[:, None] + np.arange(1, horizon + 1)[None, :]][:, :, cols]
    return float(np.mean(((preds - truth) / model._out_std) ** 2))


class HoldWater:
    """Constant predictor for the supply and return water temperatures."""

    def __call__(self, window: np.ndarray) -> np.ndarray:
        return window[:, -1, [_COL["water_in"], _COL["water_out"]]]


class FullRoomModel:
    """Weather model, constant water predictor and room model stepped together."""

    def __init__(self, weather: SurrogateModel, room: SurrogateModel, water: HoldWater | None = None):
        self.weather = weather
        self.room = room
        self.water = water or HoldWater()
        self.lookback = max(weather.spec.lookback, room.spec.lookback)

    def advance(self, window: np.ndarray, last_minutes: np.ndarray, u_next: np.ndarray,
                room_disturbance: np.ndarray | float = 0.0) -> np.ndarray:
        """Next frame row ``(B, 6)`` for windows ``(B, L, 6)``; ``u_next`` is the valve over the step."""
        window = np.asarray(window, dtype=float)
        u_next = np.broadcast_to(np.asarray(u_next, dtype=float), (window.shape[0],))
        wl, rl = self.weather.spec.lookback, self.room.spec.lookback
        w_in = window_features(window[:, -wl:], last_minutes, u_next, self.weather.spec.inputs)
        oi = self.weather.predict(w_in)
        r_in = window_features(window[:, -rl:], last_minutes, u_next, self.room.spec.inputs)
        r = self.room.predict(r_in)[:, 0] + room_disturbance
        r = np.clip(r, TABLE_BOUNDS["room_temp"].lo, TABLE_BOUNDS["room_temp"].hi)
        row = np.empty((window.shape[0], len(FRAME_COLUMNS)))
        row[:, [_COL["outside_temp"], _COL["irradiance"]]] = oi
        row[:, _COL["room_temp"]] = r
        row[:, [_COL["water_in"], _COL["water_out"]]] = self.water(window)
        row[:, _COL["valve"]] = u_next
        return row

    def predict_multistep(self, window: np.ndarray, last_minutes: np.ndarray, controls: np.ndarray,
                          horizon: int | None = None, return_rows: bool = False) -> np.ndarray:
        """Room temperature trajectory ``(B, H)`` under valve controls ``(B, H)``."""
        controls = np.atleast_2d(np.asarray(controls, dtype=float))
        H = controls.shape[1] if horizon is None else horizon
        if H < 1 or controls.shape[1] < H:
            raise ValueError("need H >= 1 controls")
        win = np.array(window, dtype=float)
        minutes = np.asarray(last_minutes, dtype=float).copy()
        rows = np.empty((win.shape[0], H, len(FRAME_COLUMNS)))
        for h in range(H):
            row = self.advance(win, minutes, controls[:, h])
            rows[:, h] = row
            win = np.concatenate([win[:, 1:], row[:, None]], axis=1)
            minutes = np.mod(minutes + STEP_MIN, 1440.0)
        return rows if return_rows else rows[:, :, _COL["room_temp"]]


def horizon_errors(full: FullRoomModel, frame: Frame, horizon: int = 48, split_index: int = 2,
                   split: Sequence[float] = (0.6, 0.2, 0.2), stride: int = 8) -> dict[str, np.ndarray]:
    """Room MAE and max-abs error per horizon step on held-out windows."""
    a, b = split_bounds(len(frame), split)[split_index]
    # the room inputs cover every frame column the weather model reads as well
    probe = replace(full.room.spec, lookback=full.lookback)
    ends = valid_ends(frame, probe, horizon, a, b)[::stride]
    if ends.size == 0:
        raise EmptyDatasetError("no held-out windows long enough for the horizon")
    win = gather_windows(frame, ends, full.lookback)
    controls = frame.data[ends[:, None] + np.arange(1, horizon + 1)[None, :], _COL["valve"]]
    pred = full.predict_multistep(win, frame.minutes[ends], controls)
    truth = frame.data[ends[:, None] + np.arange(1, horizon + 1)[None, :], _COL["room_temp"]]
    err = np.abs(pred - truth)
    persist = np.abs(frame.data[ends, _COL["room_temp"]][:, None] - truth)
    return {"step": np.arange(1, horizon + 1), "mae": err.mean(axis=0), "max_abs": err.max(axis=0),
            "persistence_mae": persist.mean(axis=0), "n_windows": np.array(ends.size)}


# -- hyperparameter search -------------------------------------------------------------------


@dataclass(frozen=True)
class SearchSpace:
    n_layers: tuple[int, ...] = (1, 2, 3)
    n_hidden: tuple[int, ...] = (10, 20, 30, 40, 60)
    eta: tuple[float, float] = (1e-4, 1e-2)       # log-uniform
    sigma_i: tuple[float, float] = (1e-6, 1e-1)   # log-uniform
    cell: tuple[str, ...] = ("lstm", "gru")

    @classmethod
    def from_dict(cls, d: dict) -> "SearchSpace":
        return cls(**{k: tuple(v) for k, v in d.items()})


def _log_uniform(rng: np.random.Generator, lo: float, hi: float) -> float:
    if lo == hi:
        return float(lo)
    return float(math.exp(rng.uniform(math.log(lo), math.log(hi))))


def hyper_search(base: SurrogateSpec, space: SearchSpace, budget: int, frame: Frame,
                 config: TrainConfig, seed: int = 0, horizon: int = 24, log=None):
    """Random search; each trial is scored by the ``horizon``-step validation MSE.

    Returns ``(best_spec, best_config, trials)`` where ``trials`` lists every
    sampled point with its objective.
    """
    if budget < 1:
        raise ValueError("budget must be >= 1")
    rng = np.random.default_rng(seed)
    trials = []
    for t in range(budget):
        spec = replace(base,
                       n_layers=int(rng.choice(space.n_layers)),
                       n_hidden=int(rng.choice(space.n_hidden)),
                       cell=str(rng.choice(space.cell)),
                       sigma_i=_log_uniform(rng, *space.sigma_i))
        cfg = replace(config, eta=_log_uniform(rng, *space.eta), seed=int(rng.integers(0, 2**31 - 1)))
        res = train(spec, frame, cfg)
        obj = multistep_mse(res.model, frame, horizon, 1, cfg.split)
        trial = {"trial": t, "n_layers": spec.n_layers, "n_hidden": spec.n_hidden, "cell": spec.cell,
                 "sigma_i": spec.sigma_i, "eta": cfg.eta, "seed": cfg.seed, "objective": obj,
                 "final_train_loss": res.train_loss[-1], "final_val_loss": res.val_loss[-1]}
        trials.append(trial)
        if log is not None:
            log(f"trial {t}: {trial}")
    best = min(trials, key=lambda r: r["objective"])
    best_spec = replace(base, n_layers=best["n_layers"], n_hidden=best["n_hidden"],
                        cell=best["cell"], sigma_i=best["sigma_i"])
    best_cfg = replace(config, eta=best["eta"], seed=best["seed"])
    return best_spec, best_cfg, trials


# -- disturbance model ---------------------------------------------------------------------


@dataclass(frozen=True)
class ArDisturbance:
    phi: float = 0.0
    sigma: float = 0.0
    order: int = 1

    def __post_init__(self) -> None:
        if self.order != 1:
            raise ValueError("only AR(1) is supported")
        if not abs(self.phi) < 1:
            raise ValueError("|phi| must be < 1")
        if self.sigma < 0:
            raise ValueError("sigma must be >= 0")

    def sample(self, n: int, rng: np.random.Generator, x0: float = 0.0) -> np.ndarray:
        out = np.empty(n)
        x = x0
        eps = rng.normal(0.0, self.sigma, n) if self.sigma > 0 else np.zeros(n)
        for k in range(n):
            x = self.phi * x + eps[k]
            out[k] = x
        return out


def fit_ar(residuals: Sequence[float]) -> ArDisturbance:
    """Yule-Walker AR(1) fit; constant residuals give the zero process."""
    r = np.asarray(residuals, dtype=float)
    r = r[~np.isnan(r)]
    if r.size < 30:
        raise ValueError("fit_ar needs at least 30 residuals")
    x = r - r.mean()
    var = float(np.mean(x * x))
    if var <= 0.0:
        return ArDisturbance(0.0, 0.0)
    phi = float(np.sum(x[1:] * x[:-1]) / np.sum(x * x))
    phi = max(-0.999, min(0.999, phi))
    sigma = math.sqrt(max(0.0, var * (1.0 - phi * phi)))
    return ArDisturbance(phi, sigma)


def one_step_residuals(model: SurrogateModel, frame: Frame, split_index: int = 1,
                       split: Sequence[float] = (0.6, 0.2, 0.2)) -> np.ndarray:
    """Raw-unit one-step errors (truth - prediction) of the first output on consecutive windows."""
    a, b = split_bounds(len(frame), split)[split_index]
    ends = valid_ends(frame, model.spec, 1, a, b)
    if ends.size == 0:
        raise EmptyDatasetError("no windows for residuals")
    batch = make_batch(model, frame, ends)
    pred = model.forward(batch.x)[:, 0]
    truth = frame.data[ends + 1, _COL[model.spec.outputs[0]]]
    return truth - pred
