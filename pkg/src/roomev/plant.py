"""Synthetic ground-truth building used to generate the historical data.

The room is a 2R2C network integrated with forward Euler at 15 minutes:

    C_room dT/dt = (T_wall - T) / R_rw + heat_gain * u * (h_in - T) + aperture * i / 1000
    C_wall dT_wall/dt = (T - T_wall) / R_rw + (o - T_wall) / R_wo

with temperatures in degC, ``i`` in W/m^2 and ``u`` the valve opening in [0, 1].
Weather is a daily sinusoid plus AR(1) noise; irradiance is a daylight bell
modulated by an AR cloud factor. The battery follows the same piecewise-linear
map that :mod:`roomev.battery` fits, plus Gaussian noise.
"""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field, replace
from datetime import datetime, timedelta
from pathlib import Path

import numpy as np

from roomev.timeseries import TimeSeries, frame_to_csv

DT_MIN = 15.0
DT_H = DT_MIN / 60.0
STEPS_PER_DAY = 96
DEFAULT_T0 = datetime(2021, 11, 1)


class UnstableModelError(ValueError):
    pass


@dataclass(frozen=True)
class RcRoomParams:
    C_room: float = 1.0        # kWh/degC
    C_wall: float = 5.0        # kWh/degC
    R_rw: float = 1.5          # degC/kW
    R_wo: float = 20.0         # degC/kW
    heat_gain: float = 0.2     # kW/degC at valve = 1
    solar_aperture: float = 2.0  # kW per kW/m^2
    kappa: float = 0.3         # fraction of the supply/room difference lost in the loop
    return_mode: str = "always"  # "always" or "valve"

    def __post_init__(self) -> None:
        for k in ("C_room", "C_wall", "R_rw", "R_wo", "heat_gain", "solar_aperture"):
            if not getattr(self, k) > 0:
                raise ValueError(f"{k} must be strictly positive")
        if not 0 < self.kappa < 1:
            raise ValueError("kappa must lie in (0, 1)")
        if self.return_mode not in ("always", "valve"):
            raise ValueError("return_mode must be 'always' or 'valve'")


@dataclass(frozen=True)
class WeatherGenParams:
    mean: float = 5.0
    amplitude: float = 4.0
    ar_phi: float = 0.99
    ar_sigma: float = 0.3
    irr_peak: float = 450.0
    sunrise_h: float = 7.5
    sunset_h: float = 16.5
    cloud_phi: float = 0.97
    cloud_sigma: float = 0.08

    def __post_init__(self) -> None:
        if not -1 < self.ar_phi < 1 or not -1 < self.cloud_phi < 1:
            raise ValueError("AR coefficients must lie in (-1, 1)")
        if self.ar_sigma < 0 or self.cloud_sigma < 0:
            raise ValueError("noise sigma must be >= 0")
        if not 0 <= self.sunrise_h < self.sunset_h <= 24:
            raise ValueError("need 0 <= sunrise < sunset <= 24")


@dataclass(frozen=True)
class HeatingCurve:
    """Daily supply temperature as a function of the previous day's mean outside temperature."""

    base: float = 32.0
    slope: float = 0.8
    balance: float = 15.0
    jitter: float = 1.5
    lo: float = 22.0
    hi: float = 48.0

    def __call__(self, o_mean: float, noise: float = 0.0) -> float:
        h = self.base + self.slope * max(0.0, self.balance - o_mean) + self.jitter * noise
        return float(min(self.hi, max(self.lo, h)))


@dataclass(frozen=True)
class BatteryGenParams:
    alpha_true: tuple[float, float, float] = (-0.01, 0.05, -0.02)
    noise_sigma: float = 0.01
    p_max: float = 100.0
    soc_lo: float = 10.0
    soc_hi: float = 90.0
    mean_hold: float = 4.0  # mean segment length in steps


@dataclass(frozen=True)
class ExcitationParams:
    enabled: bool = True
    setpoint_lo: float = 20.0
    setpoint_hi: float = 26.0
    hold_hours: float = 6.0
    duty_on: float = 0.85
    duty_off: float = 0.1


@dataclass(frozen=True)
class ArtifactParams:
    rate: float = 0.0
    spike_size: float = 3.0
    channels: tuple[str, ...] = ("outside_temp", "room_temp", "water_in", "water_out", "soc")


@dataclass(frozen=True)
class PlantConfig:
    room: RcRoomParams = field(default_factory=RcRoomParams)
    weather: WeatherGenParams = field(default_factory=WeatherGenParams)
    heating: HeatingCurve = field(default_factory=HeatingCurve)
    battery: BatteryGenParams = field(default_factory=BatteryGenParams)
    excitation: ExcitationParams = field(default_factory=ExcitationParams)
    artifacts: ArtifactParams = field(default_factory=ArtifactParams)
    t0: datetime = DEFAULT_T0

    def to_dict(self) -> dict:
        d = asdict(self)
        d["t0"] = self.t0.isoformat()
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "PlantConfig":
        d = dict(d)
        kw = {}
        for key, typ in (("room", RcRoomParams), ("weather", WeatherGenParams),
                         ("heating", HeatingCurve), ("battery", BatteryGenParams),
                         ("excitation", ExcitationParams), ("artifacts", ArtifactParams)):
            if key in d:
                sub = dict(d.pop(key))
                for k, v in list(sub.items()):
                    if isinstance(v, list):
                        sub[k] = tuple(v)
                kw[key] = typ(**sub)
        if "t0" in d:
            t0 = d.pop("t0")
            kw["t0"] = datetime.fromisoformat(t0) if isinstance(t0, str) else t0
        if d:
            raise ValueError(f"unknown plant keys: {sorted(d)}")
        return cls(**kw)


# -- weather ----------------------------------------------------------------------


def _ar1(rng: np.random.Generator, n: int, phi: float, sigma: float) -> np.ndarray:
    x = np.zeros(n)
    if sigma == 0 or n == 0:
        return x
    eps = rng.normal(0.0, sigma, n)
    x[0] = eps[0] / math.sqrt(1.0 - phi * phi)
    for k in range(1, n):
        x[k] = phi * x[k - 1] + eps[k]
    return x


def minutes_of_day(n: int, t0: datetime = DEFAULT_T0) -> np.ndarray:
    start = t0.hour * 60 + t0.minute
    return np.mod(start + DT_MIN * np.arange(n), 1440.0)


def simulate_weather(params: WeatherGenParams, days: int, seed: int,
                     t0: datetime = DEFAULT_T0) -> tuple[TimeSeries, TimeSeries]:
    """Outside temperature (degC) and global irradiance (W/m^2) on the 15-minute grid."""
    if days < 1:
        raise ValueError("days must be >= 1")
    n = days * STEPS_PER_DAY
    rng = np.random.default_rng(seed)
    minute = minutes_of_day(n, t0)
    base = params.mean + params.amplitude * np.cos(2.0 * np.pi * (minute - 720.0) / 1440.0)
    o = base + _ar1(rng, n, params.ar_phi, params.ar_sigma)

    hour = minute / 60.0
    span = params.sunset_h - params.sunrise_h
    phase = np.clip((hour - params.sunrise_h) / span, 0.0, 1.0)
    bell = np.sin(np.pi * phase) ** 2
    cloud = np.clip(0.7 + _ar1(rng, n, params.cloud_phi, params.cloud_sigma), 0.05, 1.0)
    irr = np.clip(params.irr_peak * bell * cloud, 0.0, 1300.0)
    return (TimeSeries("outside_temp", "degC", t0, o),
            TimeSeries("irradiance", "W/m2", t0, irr))


# -- room ----------------------------------------------------------------------------


def euler_matrix(p: RcRoomParams, u: float, dt_h: float = DT_H) -> np.ndarray:
    """Discrete state-transition matrix of (T_room, T_wall) at valve opening ``u``."""
    a = np.array([
        [-(1.0 / p.R_rw + p.heat_gain * u) / p.C_room, 1.0 / (p.R_rw * p.C_room)],
        [1.0 / (p.R_rw * p.C_wall), -(1.0 / p.R_rw + 1.0 / p.R_wo) / p.C_wall],
    ])
    return np.eye(2) + dt_h * a


def check_stability(p: RcRoomParams, dt_h: float = DT_H) -> None:
    for u in (0.0, 1.0):
        rho = float(np.max(np.abs(np.linalg.eigvals(euler_matrix(p, u, dt_h)))))
        if rho >= 1.0:
            raise UnstableModelError(f"RC parameters unstable at dt={dt_h} h (spectral radius {rho:.4f})")


class RoomPlant:
    """Stateless stepping of the RC room; state is ``(T_room, T_wall)``."""

    def __init__(self, params: RcRoomParams | None = None, dt_h: float = DT_H):
        self.params = params or RcRoomParams()
        self.dt_h = dt_h
        check_stability(self.params, dt_h)

    def step(self, room: float, wall: float, o: float, irr: float, h_in: float, u: float) -> tuple[float, float]:
        p = self.params
        q_heat = p.heat_gain * u * (h_in - room)
        q_sun = p.solar_aperture * irr / 1000.0
        d_room = ((wall - room) / p.R_rw + q_heat + q_sun) / p.C_room
        d_wall = ((room - wall) / p.R_rw + (o - wall) / p.R_wo) / p.C_wall
        return room + self.dt_h * d_room, wall + self.dt_h * d_wall

    def water_out(self, h_in, room, u):
        p = self.params
        loss = p.kappa * (np.asarray(h_in) - np.asarray(room))
        if p.return_mode == "valve":
            loss = loss * np.asarray(u)
        return np.asarray(h_in) - loss

    def steady_state(self, o: float, irr: float, h_in: float, u: float) -> tuple[float, float]:
        """Fixed point of the continuous balance under constant inputs."""
        p = self.params
        g_rw, g_wo = 1.0 / p.R_rw, 1.0 / p.R_wo
        g_h = p.heat_gain * u
        a = np.array([[g_rw + g_h, -g_rw], [-g_rw, g_rw + g_wo]])
        b = np.array([g_h * h_in + p.solar_aperture * irr / 1000.0, g_wo * o])
        room, wall = np.linalg.solve(a, b)
        return float(room), float(wall)


def simulate_room(params: RcRoomParams, o, irr, valve, h_in, T0: float,
                  wall0: float | None = None, return_wall: bool = False):
    """Open-loop room trajectory.

    ``valve[k]`` is the opening over the interval ending at sample ``k``, so
    the transition ``k -> k+1`` uses ``valve[k+1]``; ``valve[0]`` is unused.
    """
    arrays = [np.asarray(getattr(x, "values", x), dtype=float) for x in (o, irr, valve, h_in)]
    n = arrays[0].size
    if any(a.size != n for a in arrays):
        raise ValueError("weather and schedules must share one grid")
    o_v, i_v, u_v, h_v = arrays
    plant = RoomPlant(params)
    room = np.empty(n)
    wall = np.empty(n)
    room[0] = T0
    wall[0] = T0 if wall0 is None else wall0
    for k in range(n - 1):
        room[k + 1], wall[k + 1] = plant.step(room[k], wall[k], o_v[k], i_v[k], h_v[k], u_v[k + 1])
    r = TimeSeries("room_temp", "degC", getattr(o, "t0", DEFAULT_T0), room)
    if return_wall:
        return r, wall
    return r


def daily_supply_temperature(o: np.ndarray, curve: HeatingCurve, rng: np.random.Generator) -> np.ndarray:
    """Piecewise-constant supply temperature, one level per day driven by yesterday's mean."""
    n = o.size
    days = math.ceil(n / STEPS_PER_DAY)
    h = np.empty(n)
    prev_mean = float(np.mean(o[:STEPS_PER_DAY]))
    noise = rng.normal(0.0, 1.0, days)
    for d in range(days):
        sl = slice(d * STEPS_PER_DAY, min(n, (d + 1) * STEPS_PER_DAY))
        h[sl] = curve(prev_mean, noise[d])
        prev_mean = float(np.mean(o[sl]))
    return h


# -- battery -------------------------------------------------------------------------


def true_battery_step(alpha_true, s: float, p: float, noise_sigma: float = 0.0,
                      rng: np.random.Generator | int | None = None) -> float:
    a0, a1, a2 = alpha_true
    ds = a0 + a1 * p + a2 * max(0.0, p)
    if noise_sigma > 0:
        rng = rng if isinstance(rng, np.random.Generator) else np.random.default_rng(rng)
        ds += rng.normal(0.0, noise_sigma)
    return float(min(100.0, max(0.0, s + ds)))


def battery_history(params: BatteryGenParams, n: int, rng: np.random.Generator,
                    s0: float = 50.0) -> tuple[np.ndarray, np.ndarray]:
    """SoC and power traces; ``power[k]`` acts over the step ``k -> k+1``."""
    soc = np.empty(n)
    power = np.empty(n)
    soc[0] = s0
    current = 0.0
    hold = 0
    for k in range(n):
        s = soc[k]
        if hold <= 0 or (s > params.soc_hi and current > 0) or (s < params.soc_lo and current < 0):
            if s > params.soc_hi:
                current = -rng.uniform(0.1, 1.0) * params.p_max
            elif s < params.soc_lo:
                current = rng.uniform(0.1, 1.0) * params.p_max
            else:
                current = rng.uniform(-1.0, 1.0) * params.p_max
            hold = 1 + rng.geometric(1.0 / params.mean_hold)
        power[k] = current
        hold -= 1
        if k + 1 < n:
            soc[k + 1] = true_battery_step(params.alpha_true, s, current, params.noise_sigma, rng)
    return soc, power


# -- full history -------------------------------------------------------------------

CHANNELS = ("outside_temp", "irradiance", "room_temp", "water_in", "water_out", "valve", "soc", "power")
UNITS = {"outside_temp": "degC", "irradiance": "W/m2", "room_temp": "degC", "water_in": "degC",
         "water_out": "degC", "valve": "1", "soc": "%", "power": "kW"}


@dataclass
class TruePlantTrace:
    t0: datetime
    signals: dict[str, np.ndarray]
    wall_temp: np.ndarray
    valve_raw: np.ndarray  # 1-minute on/off log
    dt: float = DT_MIN

    def __len__(self) -> int:
        return self.signals["room_temp"].size

    def series(self, name: str) -> TimeSeries:
        return TimeSeries(name, UNITS[name], self.t0, self.signals[name], dt=self.dt)

    def valve_raw_series(self) -> TimeSeries:
        return TimeSeries("valve", UNITS["valve"], self.t0, self.valve_raw, dt=1.0)

    def to_csv(self, path: str | Path | None = None, comment: str | None = None) -> str:
        return frame_to_csv([self.series(c) for c in CHANNELS], path, comment)


def _excitation_valve(plant: RoomPlant, exc: ExcitationParams, o, irr, h_in, rng, T0):
    n = o.size
    room = np.empty(n)
    wall = np.empty(n)
    u = np.zeros(n)
    raw = np.zeros(n * 15)
    room[0], wall[0] = T0, T0 - 1.0
    hold = int(round(exc.hold_hours * 60 / DT_MIN))
    setpoint = rng.uniform(exc.setpoint_lo, exc.setpoint_hi)
    for k in range(n - 1):
        if k % hold == 0:
            setpoint = rng.uniform(exc.setpoint_lo, exc.setpoint_hi)
        if exc.enabled:
            duty = exc.duty_on if room[k] < setpoint else exc.duty_off
            opened = int(rng.binomial(15, duty))
            minutes = np.zeros(15)
            minutes[rng.choice(15, opened, replace=False)] = 1.0
            raw[(k + 1) * 15:(k + 2) * 15] = minutes
            u[k + 1] = opened / 15.0
        room[k + 1], wall[k + 1] = plant.step(room[k], wall[k], o[k], irr[k], h_in[k], u[k + 1])
    return room, wall, u, raw


def _inject(values: np.ndarray, rate: float, size: float, rng: np.random.Generator) -> np.ndarray:
    v = values.copy()
    hit = rng.random(v.size) < rate
    spike = rng.random(v.size) < 0.5
    sign = np.where(rng.random(v.size) < 0.5, -1.0, 1.0)
    v[hit & spike] += sign[hit & spike] * size
    v[hit & ~spike] = np.nan
    return v


def generate_history(config: PlantConfig, days: int, seed: int) -> TruePlantTrace:
    if days < 7:
        raise ValueError("generate_history needs at least 7 days")
    rng = np.random.default_rng(seed)
    weather_seed, room_seed, bat_seed, art_seed = rng.integers(0, 2**63 - 1, 4)
    o_ts, i_ts = simulate_weather(config.weather, days, int(weather_seed), config.t0)
    o, irr = o_ts.values, i_ts.values
    r_rng = np.random.default_rng(room_seed)
    h_in = daily_supply_temperature(o, config.heating, r_rng)
    plant = RoomPlant(config.room)
    room, wall, u, raw = _excitation_valve(plant, config.excitation, o, irr, h_in, r_rng, 22.0)
    h_out = plant.water_out(h_in, room, u)
    soc, power = battery_history(config.battery, o.size, np.random.default_rng(bat_seed))
    signals = {"outside_temp": o, "irradiance": irr, "room_temp": room, "water_in": h_in,
               "water_out": np.asarray(h_out, dtype=float), "valve": u, "soc": soc, "power": power}
    art = config.artifacts
    if art.rate > 0:
        a_rng = np.random.default_rng(art_seed)
        for name in art.channels:
            signals[name] = _inject(signals[name], art.rate, art.spike_size, a_rng)
    return TruePlantTrace(config.t0, signals, wall, raw)


def day_slices(n: int) -> list[slice]:
    return [slice(d, d + STEPS_PER_DAY) for d in range(0, n - STEPS_PER_DAY + 1, STEPS_PER_DAY)]


def start_of(t0: datetime, k: int) -> datetime:
    return t0 + timedelta(minutes=DT_MIN * k)


def heating_season(config: PlantConfig, days: int, seed: int,
                   mean_range: tuple[float, float] = (-2.0, 16.0), block_days: int = 7):
    """Weather and supply-temperature record whose mean temperature changes weekly.

    Spreads daily mean temperatures over ``mean_range`` so that a closed-loop
    run covers a useful range of heating degree days. Returns
    ``(outside, irradiance, supply, minutes)`` arrays on the 15-minute grid.
    """
    if days < 1 or block_days < 1:
        raise ValueError("days and block_days must be >= 1")
    rng = np.random.default_rng(seed)
    n_blocks = math.ceil(days / block_days)
    levels = np.linspace(mean_range[0], mean_range[1], n_blocks)
    rng.shuffle(levels)
    o_parts, i_parts = [], []
    for b, level in enumerate(levels):
        n_days = min(block_days, days - b * block_days)
        params = replace(config.weather, mean=float(level))
        o, irr = simulate_weather(params, n_days, int(rng.integers(0, 2**31 - 1)), config.t0)
        o_parts.append(o.values)
        i_parts.append(irr.values)
    o = np.concatenate(o_parts)
    irr = np.concatenate(i_parts)
    h_in = daily_supply_temperature(o, config.heating, rng)
    return o, irr, h_in, minutes_of_day(o.size, config.t0)
