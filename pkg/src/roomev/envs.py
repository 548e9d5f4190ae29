"""Episodic control environments: room heating, EV battery, both jointly, and a bandit.

All environments share the same contract: ``reset(seed)`` returns an
observation vector, ``step(action)`` returns an :class:`EnvStep`, episodes
last :data:`L_EP` steps of 15 minutes, and ``control_state`` exposes the
physical quantities the rule-based baselines need.
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from roomev import battery as bat
from roomev.plant import RoomPlant
from roomev.surrogate import FRAME_COLUMNS, STEP_MIN, ArDisturbance, Frame, FullRoomModel, encode_time_array

L_EP = 48
_COL = {name: k for k, name in enumerate(FRAME_COLUMNS)}


@dataclass(frozen=True)
class ComfortBounds:
    r_min: float = 22.5
    r_max: float = 22.5

    def __post_init__(self) -> None:
        if self.r_min > self.r_max:
            raise ValueError("need r_min <= r_max")

    @property
    def mid(self) -> float:
        return 0.5 * (self.r_min + self.r_max)


@dataclass(frozen=True)
class RewardConfig:
    alpha: float = 10.0
    alpha_bat: float = 0.05

    def __post_init__(self) -> None:
        if not self.alpha > 0 or not self.alpha_bat > 0:
            raise ValueError("alpha and alpha_bat must be positive")


@dataclass(frozen=True)
class PriceSchedule:
    high: float = 2.0
    low: float = 1.0
    high_start: int = 8 * 60
    high_end: int = 20 * 60

    def __post_init__(self) -> None:
        if not self.high >= self.low > 0:
            raise ValueError("need high >= low > 0")
        if not 0 <= self.high_start < self.high_end <= 1440:
            raise ValueError("high-tariff window must lie inside one day")


@dataclass(frozen=True)
class EvSchedule:
    departure: int = 7 * 60
    arrival: int = 17 * 60
    s_des: float = 60.0
    s_arrival: float = 30.0

    def __post_init__(self) -> None:
        if not 0 <= self.departure < self.arrival < 1440:
            raise ValueError("departure must come before arrival within a day")

    def present(self, minute: float) -> bool:
        m = minute % 1440
        return not (self.departure <= m < self.arrival)

    def steps_to_departure(self, minute: float) -> int:
        m = minute % 1440
        gap = (self.departure - m) % 1440
        return int(round(gap / STEP_MIN))


@dataclass
class EnvStep:
    next_state: np.ndarray
    reward: float
    done: bool
    info: dict = field(default_factory=dict)


def c_pen(r: float, b: ComfortBounds) -> float:
    """Distance of ``r`` from the comfort interval (zero inside)."""
    if r > b.r_max:
        return float(r - b.r_max)
    if r < b.r_min:
        return float(b.r_min - r)
    return 0.0


def price_at(minute_of_day: float, schedule: PriceSchedule | None = None) -> float:
    s = schedule or PriceSchedule()
    if not 0 <= minute_of_day < 1440:
        raise ValueError("minute_of_day must lie in [0, 1440)")
    return s.high if s.high_start <= minute_of_day < s.high_end else s.low


def _time_obs(minute: float) -> tuple[float, float]:
    s, c = encode_time_array(np.array([minute]))
    return float(s[0]), float(c[0])


# -- room ------------------------------------------------------------------------------


def room_features(last: np.ndarray, prev: np.ndarray, mean: np.ndarray, std: np.ndarray,
                  minute: float, setpoint: float) -> np.ndarray:
    """Room observation from the two most recent frame rows."""
    w = (last[:5] - mean) / std
    ts, tc = _time_obs(minute)
    r = last[_COL["room_temp"]]
    return np.array([*w, ts, tc, r - setpoint, last[_COL["valve"]], r - prev[_COL["room_temp"]]])


class RoomEnv:
    """Room temperature driven by the surrogate full model plus AR(1) disturbance."""

    action_low = np.array([0.0])
    action_high = np.array([1.0])
    obs_dim = 10
    name = "room"

    def __init__(self, model: FullRoomModel, history: Frame, bounds: ComfortBounds | None = None,
                 reward: RewardConfig | None = None, disturbance: ArDisturbance | None = None,
                 heating_threshold: float | None = None, start_minutes: tuple[float, ...] | None = None,
                 seed: int = 0):
        self.model = model
        self.history = history
        self.bounds = bounds or ComfortBounds()
        self.reward_cfg = reward or RewardConfig()
        self.disturbance = disturbance or ArDisturbance()
        self.heating_threshold = heating_threshold
        self.L = model.lookback
        self.candidates = self._candidates(start_minutes)
        if self.candidates.size == 0:
            raise ValueError("no gap-free historical window available for resets")
        stats = model.room.stats
        self._obs_mean = np.array([stats[c].mean for c in FRAME_COLUMNS[:5]])
        self._obs_std = np.array([stats[c].std for c in FRAME_COLUMNS[:5]])
        self.rng = np.random.default_rng(seed)
        self.window: np.ndarray | None = None
        self.minute = 0.0
        self.t = 0
        self.d = 0.0

    def _candidates(self, start_minutes) -> np.ndarray:
        ok = ~np.isnan(self.history.data).any(axis=1)
        csum = np.concatenate([[0], np.cumsum(~ok)])
        ends = np.arange(self.L - 1, len(self.history))
        clean = (csum[ends + 1] - csum[ends + 1 - self.L]) == 0
        ends = ends[clean]
        if self.heating_threshold is not None:
            ends = ends[self.history.data[ends, _COL["outside_temp"]] < self.heating_threshold]
        if start_minutes is not None:
            keep = np.isin(np.round(self.history.minutes[ends]).astype(int), np.round(start_minutes).astype(int))
            ends = ends[keep]
        return ends

    # state
    def reset(self, seed: int | None = None) -> np.ndarray:
        if seed is not None:
            self.rng = np.random.default_rng(seed)
        end = int(self.candidates[self.rng.integers(self.candidates.size)])
        self.start_index = end
        self.window = self.history.data[end - self.L + 1:end + 1].copy()
        self.minute = float(self.history.minutes[end])
        self.t = 0
        self.d = 0.0
        return self.observation()

    @property
    def room_temp(self) -> float:
        return float(self.window[-1, _COL["room_temp"]])

    def observation(self) -> np.ndarray:
        prev = self.window[-2] if self.L > 1 else self.window[-1]
        return room_features(self.window[-1], prev, self._obs_mean, self._obs_std, self.minute, self.bounds.mid)

    @property
    def control_state(self) -> dict:
        return {"room_temp": self.room_temp, "setpoint": self.bounds.mid, "minute": self.minute}

    def energy(self, a: float) -> float:
        last = self.window[-1]
        return float(a * abs(last[_COL["water_in"]] - last[_COL["water_out"]]))

    def advance(self, a: float) -> tuple[float, float]:
        """Move the room one step under valve ``a``; returns ``(e_room, c_pen)``."""
        e = self.energy(a)
        self.d = float(self.disturbance.sample(1, self.rng, self.d)[0]) if self.disturbance.sigma > 0 else 0.0
        row = self.model.advance(self.window[None], np.array([self.minute]), np.array([a]), self.d)[0]
        self.window = np.concatenate([self.window[1:], row[None]], axis=0)
        self.minute = (self.minute + STEP_MIN) % 1440.0
        return e, c_pen(self.room_temp, self.bounds)

    def step(self, action) -> EnvStep:
        raw = float(np.asarray(action, dtype=float).ravel()[0])
        a = float(np.clip(raw, 0.0, 1.0))
        price = price_at(self.minute)
        e, pen = self.advance(a)
        self.t += 1
        reward = -e - self.reward_cfg.alpha * pen
        info = {"raw_action": raw, "safe_action": a, "e_room": e, "e_bat": 0.0, "c_pen": pen,
                "infeasible": False, "room_temp": self.room_temp, "price": price, "cost": price * e}
        return EnvStep(self.observation(), reward, self.t == L_EP, info)


class PlantRoomEnv:
    """The room env's interface on the ground-truth RC plant over a fixed weather record.

    The whole record is one episode, so daily energy can be read off the
    step infos. Observations are normalised with the surrogate's statistics
    so that policies trained on the surrogate can be deployed unchanged.
    """

    action_low = np.array([0.0])
    action_high = np.array([1.0])
    obs_dim = 10
    name = "room"

    def __init__(self, plant: RoomPlant, outside: np.ndarray, irradiance: np.ndarray, supply: np.ndarray,
                 minutes: np.ndarray, obs_mean: np.ndarray, obs_std: np.ndarray,
                 bounds: ComfortBounds | None = None, reward: RewardConfig | None = None,
                 room0: float = 22.0):
        self.plant = plant
        self.o = np.asarray(outside, dtype=float)
        self.irr = np.asarray(irradiance, dtype=float)
        self.h_in = np.asarray(supply, dtype=float)
        self.minutes = np.asarray(minutes, dtype=float)
        if not self.o.size == self.irr.size == self.h_in.size == self.minutes.size >= 2:
            raise ValueError("weather and supply records must share one grid of >= 2 samples")
        self.obs_mean, self.obs_std = np.asarray(obs_mean), np.asarray(obs_std)
        self.bounds = bounds or ComfortBounds()
        self.reward_cfg = reward or RewardConfig()
        self.room0 = room0
        self.horizon = self.o.size - 1
        self.reset()

    def _row(self, t: int, room: float, u: float) -> np.ndarray:
        h_out = float(self.plant.water_out(self.h_in[t], room, u))
        return np.array([self.o[t], self.irr[t], room, self.h_in[t], h_out, u])

    def reset(self, seed: int | None = None) -> np.ndarray:
        self.t = 0
        self.room, self.wall = self.room0, self.room0 - 1.0
        self.last = self._row(0, self.room, 0.0)
        self.prev = self.last
        return self.observation()

    @property
    def minute(self) -> float:
        return float(self.minutes[self.t])

    def observation(self) -> np.ndarray:
        return room_features(self.last, self.prev, self.obs_mean, self.obs_std, self.minute, self.bounds.mid)

    @property
    def control_state(self) -> dict:
        return {"room_temp": self.room, "setpoint": self.bounds.mid, "minute": self.minute}

    def step(self, action) -> EnvStep:
        raw = float(np.asarray(action, dtype=float).ravel()[0])
        a = float(np.clip(raw, 0.0, 1.0))
        t = self.t
        e = a * abs(self.last[_COL["water_in"]] - self.last[_COL["water_out"]])
        self.room, self.wall = self.plant.step(self.room, self.wall, self.o[t], self.irr[t], self.h_in[t], a)
        self.t = t + 1
        self.prev, self.last = self.last, self._row(self.t, self.room, a)
        pen = c_pen(self.room, self.bounds)
        price = price_at(self.minutes[t])
        info = {"raw_action": raw, "safe_action": a, "e_room": e, "e_bat": 0.0, "c_pen": pen,
                "infeasible": False, "room_temp": self.room, "outside_temp": float(self.o[t]),
                "price": price, "cost": price * e}
        return EnvStep(self.observation(), -e - self.reward_cfg.alpha * pen, self.t == self.horizon, info)


# -- battery ------------------------------------------------------------------------------


class BatteryEnv:
    """EV battery behind the safety controller.

    Without an EV schedule the goal deadline is the episode end. With one,
    the deadline is the next departure, the action is masked to zero while the
    car is away, and the SoC is reset on arrival.
    """

    obs_dim = 6
    name = "battery"

    def __init__(self, coeffs: bat.BatteryCoefficients, limits: bat.SafetyLimits | None = None,
                 prices: PriceSchedule | None = None, ev: EvSchedule | None = None,
                 priced: bool = False, start_minute: float | None = None, seed: int = 0):
        self.coeffs = coeffs
        self.limits = limits or bat.SafetyLimits(t_des=L_EP)
        if ev is not None:
            self.limits = replace(self.limits, s_des=ev.s_des)
        self.prices = prices or PriceSchedule()
        self.ev = ev
        self.priced = priced
        if start_minute is None:
            start_minute = float(ev.arrival) if ev is not None else 0.0
        self.start_minute = start_minute
        self.action_low = np.array([self.limits.p_min])
        self.action_high = np.array([self.limits.p_max])
        self.ladder = bat.goal_ladder(self.limits.s_des, self.limits.p_max, coeffs, 2 * 96)
        self.rng = np.random.default_rng(seed)
        self.soc = 0.0
        self.minute = 0.0
        self.t = 0

    # goal deadline in steps from now, or None if no goal applies
    def steps_to_goal(self) -> int | None:
        if self.ev is None:
            return self.limits.t_des - self.t if self.limits.t_des is not None and self.t < self.limits.t_des else None
        if not self.present:
            return None
        return self.ev.steps_to_departure(self.minute)

    @property
    def present(self) -> bool:
        return True if self.ev is None else self.ev.present(self.minute)

    def reset(self, seed: int | None = None, minute: float | None = None, soc: float | None = None) -> np.ndarray:
        if seed is not None:
            self.rng = np.random.default_rng(seed)
        self.minute = float(self.start_minute if minute is None else minute) % 1440.0
        self.t = 0
        if soc is not None:
            self.soc = float(soc)
        elif self.ev is not None:
            self.soc = self.ev.s_arrival
        else:
            self.soc = self._admissible_soc()
        return self.observation()

    def _admissible_soc(self) -> float:
        lim = self.limits
        for _ in range(1000):
            s = float(self.rng.uniform(lim.s_min, lim.s_max))
            if lim.t_des is None or bat.goal_admissible(s, lim.t_des, lim.s_des, lim.p_max, self.coeffs):
                return s
        return lim.s_max

    def observation(self) -> np.ndarray:
        ts, tc = _time_obs(self.minute)
        k = self.steps_to_goal()
        high = 1.0 if price_at(self.minute, self.prices) == self.prices.high else 0.0
        return np.array([(self.soc - 50.0) / 30.0, ts, tc, 1.0 if self.present else 0.0, high,
                         (k if k is not None else 0) / 96.0])

    @property
    def control_state(self) -> dict:
        return {"soc": self.soc, "s_max": self.limits.s_max, "s_min": self.limits.s_min,
                "p_max": self.limits.p_max, "p_min": self.limits.p_min, "present": self.present,
                "minute": self.minute}

    def envelope(self) -> bat.Envelope:
        k = self.steps_to_goal()
        lim = replace(self.limits, t_des=None if k is None or k == 0 else k)
        return bat.safe_envelope(self.soc, 0, lim, self.coeffs, self.ladder)

    def advance(self, raw: float) -> tuple[float, bool]:
        """Apply the safety-clipped power; returns ``(applied_power, infeasible)``."""
        if not self.present:
            p, infeasible = 0.0, False
        else:
            p, infeasible = bat.apply_envelope(raw, self.envelope(), self.limits.p_max)
            self.soc = bat.step(self.coeffs, self.soc, p)
        was_present = self.present
        self.minute = (self.minute + STEP_MIN) % 1440.0
        if self.ev is not None and not was_present and self.present:
            self.soc = self.ev.s_arrival
        return p, infeasible

    def step(self, action) -> EnvStep:
        raw = float(np.asarray(action, dtype=float).ravel()[0])
        price = price_at(self.minute, self.prices)
        departing = self.ev is not None and self.present and self.ev.steps_to_departure(self.minute) == 1
        p, infeasible = self.advance(raw)
        self.t += 1
        reward = -p * (price if self.priced else 1.0)
        info = {"raw_action": raw, "safe_action": p, "e_room": 0.0, "e_bat": p, "c_pen": 0.0,
                "infeasible": infeasible, "soc": self.soc, "price": price, "cost": price * p}
        if departing:
            info["goal_met"] = self.soc >= self.limits.s_des
        return EnvStep(self.observation(), reward, self.t == L_EP, info)


# -- joint ---------------------------------------------------------------------------------


class JointEnv:
    """Room and EV battery evolving side by side under one tariff-weighted reward."""

    name = "joint"

    def __init__(self, room: RoomEnv, battery: BatteryEnv, reward: RewardConfig | None = None):
        self.room = room
        self.battery = battery
        self.reward_cfg = reward or room.reward_cfg
        self.prices = battery.prices
        self.action_low = np.concatenate([room.action_low, battery.action_low])
        self.action_high = np.concatenate([room.action_high, battery.action_high])
        self.obs_dim = room.obs_dim + battery.obs_dim - 2
        self.t = 0

    def reset(self, seed: int | None = None) -> np.ndarray:
        if seed is not None:
            self.room.rng = np.random.default_rng(seed)
        self.room.reset()
        self.battery.reset(minute=self.room.minute)
        self.t = 0
        return self.observation()

    def observation(self) -> np.ndarray:
        b = self.battery.observation()
        return np.concatenate([self.room.observation(), b[[0, 3, 4, 5]]])

    @property
    def control_state(self) -> dict:
        return {**self.room.control_state, **self.battery.control_state}

    def step(self, action) -> EnvStep:
        a = np.asarray(action, dtype=float).ravel()
        if a.size != 2:
            raise ValueError("joint action must be (a_room, a_bat)")
        raw_room, raw_bat = float(a[0]), float(a[1])
        a_room = float(np.clip(raw_room, 0.0, 1.0))
        price = price_at(self.room.minute, self.prices)
        e_room, pen = self.room.advance(a_room)
        e_bat, infeasible = self.battery.advance(raw_bat)
        self.t += 1
        self.room.t = self.battery.t = self.t
        rc = self.reward_cfg
        reward = -price * (rc.alpha_bat * e_bat + e_room) - rc.alpha * pen
        info = {"raw_action": [raw_room, raw_bat], "safe_action": [a_room, e_bat], "e_room": e_room,
                "e_bat": e_bat, "c_pen": pen, "infeasible": infeasible, "room_temp": self.room.room_temp,
                "soc": self.battery.soc, "price": price,
                "cost": price * (rc.alpha_bat * e_bat + e_room)}
        return EnvStep(self.observation(), reward, self.t == L_EP, info)


# -- bandit -----------------------------------------------------------------------------------


class BanditEnv:
    """One-step task with reward ``-(a - target)^2``; used to sanity-check learners."""

    action_low = np.array([-1.0])
    action_high = np.array([1.0])
    obs_dim = 1
    name = "bandit"

    def __init__(self, target: float = 0.7, seed: int = 0):
        self.target = target
        self.t = 0

    def reset(self, seed: int | None = None) -> np.ndarray:
        self.t = 0
        return np.ones(1)

    @property
    def control_state(self) -> dict:
        return {}

    def step(self, action) -> EnvStep:
        a = float(np.clip(np.asarray(action, dtype=float).ravel()[0], -1.0, 1.0))
        self.t = 1
        return EnvStep(np.ones(1), -(a - self.target) ** 2, True,
                       {"raw_action": a, "safe_action": a, "e_room": 0.0, "e_bat": 0.0, "c_pen": 0.0,
                        "infeasible": False, "price": 0.0, "cost": 0.0})
