"""Piecewise-linear EV battery model, its least-squares fit, and the safety controller.

The SoC change over one 15-minute step is

    delta(p) = alpha0 + alpha1 * p + alpha2 * max(0, p)

with power ``p`` in kW (positive = charging) and SoC in percent. The fallback
controller inverts this map to clip any requested power into the range that
keeps the SoC inside ``[s_min, s_max]`` and still reaches ``s_des`` by ``t_des``.

Float exactness
---------------
The closed-form inverse (:func:`c_bat`) is exact in real arithmetic but can
miss the bound by one rounding step in floating point. The enforced envelope
(:func:`safe_envelope`) therefore nudges each bound until ``step`` provably
respects it, and the departure goal is expressed as a backward ladder of
required SoC levels (:func:`goal_ladder`). Because IEEE addition is monotone,
staying on the ladder guarantees ``s(t_des) >= s_des`` bit-exactly.
"""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass
from typing import Sequence

import numpy as np

_EPS = 2.0**-52


class InsufficientExcitationError(ValueError):
    """Raised when the battery data cannot identify all three coefficients."""


class UnphysicalFitError(ValueError):
    """Raised when fitted coefficients violate the model's sign constraints."""

    def __init__(self, message: str, raw: tuple[float, float, float]):
        super().__init__(f"{message}: alpha={raw}")
        self.raw = raw


@dataclass(frozen=True)
class BatteryCoefficients:
    alpha0: float
    alpha1: float
    alpha2: float

    def __post_init__(self) -> None:
        problems = _coefficient_problems(self.alpha0, self.alpha1, self.alpha2)
        if problems:
            raise ValueError("invalid battery coefficients: " + "; ".join(problems))

    @property
    def charge_slope(self) -> float:
        return self.alpha1 + self.alpha2

    def as_tuple(self) -> tuple[float, float, float]:
        return (self.alpha0, self.alpha1, self.alpha2)

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "BatteryCoefficients":
        return cls(float(d["alpha0"]), float(d["alpha1"]), float(d["alpha2"]))


def _coefficient_problems(a0: float, a1: float, a2: float) -> list[str]:
    problems = []
    if not all(math.isfinite(v) for v in (a0, a1, a2)):
        problems.append("non-finite value")
        return problems
    if not a1 > 0:
        problems.append("alpha1 must be > 0")
    if not -a1 < a2 < 0:
        problems.append("alpha2 must lie in (-alpha1, 0)")
    if not a0 <= 0:
        problems.append("alpha0 must be <= 0")
    return problems


@dataclass(frozen=True)
class SafetyLimits:
    """SoC/power envelope and the departure goal.

    ``t_des`` is a step index counted from the episode start; ``None`` disables
    the goal constraint.
    """

    s_min: float = 20.0
    s_max: float = 80.0
    p_min: float = -100.0
    p_max: float = 100.0
    s_des: float = 60.0
    t_des: int | None = 48

    def __post_init__(self) -> None:
        if not self.s_min < self.s_max:
            raise ValueError("s_min must be < s_max")
        if not self.p_min < 0 < self.p_max:
            raise ValueError("need p_min < 0 < p_max")
        if not self.s_min <= self.s_des <= self.s_max:
            raise ValueError("s_des must lie in [s_min, s_max]")
        if self.t_des is not None and self.t_des < 0:
            raise ValueError("t_des must be >= 0")

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "SafetyLimits":
        return cls(**d)


def delta_soc(c: BatteryCoefficients, p: float) -> float:
    # charge branch uses the pre-summed slope so delta is monotone in p after rounding
    if p > 0:
        return c.alpha0 + c.charge_slope * p
    return c.alpha0 + c.alpha1 * p


def step(c: BatteryCoefficients, s: float, p: float) -> float:
    """Next SoC without clipping; bounds are the safety controller's job."""
    return s + delta_soc(c, p)


def fit_coefficients(p: Sequence[float], ds: Sequence[float]) -> BatteryCoefficients:
    """Ordinary least squares of ``ds`` on the columns ``[1, p, max(0, p)]``.

    Raises
    ------
    InsufficientExcitationError
        Fewer than three samples, or no mix of charging and discharging samples.
    UnphysicalFitError
        The fitted coefficients violate the sign constraints; ``.raw`` holds them.
    """
    p = np.asarray(p, dtype=float).ravel()
    ds = np.asarray(ds, dtype=float).ravel()
    if p.shape != ds.shape:
        raise ValueError("p and ds must have the same length")
    ok = np.isfinite(p) & np.isfinite(ds)
    p, ds = p[ok], ds[ok]
    if p.size < 3:
        raise InsufficientExcitationError("insufficient excitation: need at least 3 samples")
    design = np.column_stack([np.ones_like(p), p, np.maximum(0.0, p)])
    coef, _, rank, _ = np.linalg.lstsq(design, ds, rcond=None)
    if rank < 3 or not (np.any(p > 0) and np.any(p < 0)):
        raise InsufficientExcitationError(
            "insufficient excitation: samples must contain both charging and discharging power"
        )
    raw = (float(coef[0]), float(coef[1]), float(coef[2]))
    problems = _coefficient_problems(*raw)
    if problems:
        raise UnphysicalFitError("unphysical fit (" + "; ".join(problems) + ")", raw)
    return BatteryCoefficients(*raw)


def fit_r2(c: BatteryCoefficients, p: Sequence[float], ds: Sequence[float]) -> float:
    p = np.asarray(p, dtype=float)
    ds = np.asarray(ds, dtype=float)
    pred = c.alpha0 + c.alpha1 * p + c.alpha2 * np.maximum(0.0, p)
    ss_res = float(np.sum((ds - pred) ** 2))
    ss_tot = float(np.sum((ds - ds.mean()) ** 2))
    return 1.0 - ss_res / ss_tot if ss_tot > 0 else 1.0


def c_bat(s_bound: float, s_t: float, c: BatteryCoefficients) -> float:
    """Power that moves ``s_t`` exactly onto ``s_bound`` in one step (closed form)."""
    d = s_bound - s_t - c.alpha0
    if d > 0:
        return d / c.charge_slope
    return d / c.alpha1


def p_min_des(
    s_des: float, t_des: int, t: int, s_t: float, p_max: float, c: BatteryCoefficients
) -> float:
    """Minimum power now so that full-power charging afterwards still reaches ``s_des``."""
    if t >= t_des:
        raise ValueError("p_min_des requires t < t_des")
    remaining = t_des - t - 1
    return c_bat(s_des - remaining * delta_soc(c, p_max), s_t, c)


# -- float-exact envelope ----------------------------------------------------


def _nudge_size(s: float, bound: float, c: BatteryCoefficients) -> float:
    # divides by the smaller slope, so one nudge moves the SoC by at least ~1 ulp
    return (abs(s) + abs(bound) + 1.0) * _EPS / c.alpha1


def power_upper(s_bound: float, s_t: float, c: BatteryCoefficients, floor: float) -> float:
    """A power ``p`` with ``step(c, s_t, p) <= s_bound``, within rounding of :func:`c_bat`.

    If ``floor`` already satisfies the bound the result is never below it, so
    rounding alone cannot empty the envelope.
    """
    p = c_bat(s_bound, s_t, c)
    h = _nudge_size(s_t, s_bound, c)
    while step(c, s_t, p) > s_bound:
        p -= h
    if p < floor and step(c, s_t, floor) <= s_bound:
        p = floor
    return p


def power_lower(s_bound: float, s_t: float, c: BatteryCoefficients, cap: float) -> float:
    """A power ``p`` with ``step(c, s_t, p) >= s_bound``; mirror image of :func:`power_upper`."""
    p = c_bat(s_bound, s_t, c)
    h = _nudge_size(s_t, s_bound, c)
    while step(c, s_t, p) < s_bound:
        p += h
    if p > cap and step(c, s_t, cap) >= s_bound:
        p = cap
    return p


def goal_ladder(s_des: float, p_max: float, c: BatteryCoefficients, depth: int) -> np.ndarray:
    """Required SoC ``k`` steps before the deadline, for ``k = 0..depth``.

    ``ladder[0] == s_des`` and ``step(c, ladder[k + 1], p_max) >= ladder[k]``
    holds exactly, which is what makes the goal guarantee survive rounding.
    """
    d = delta_soc(c, p_max)
    out = np.empty(depth + 1)
    target = float(s_des)
    out[0] = target
    for k in range(depth):
        x = target - d
        h = (abs(target) + 1.0) * _EPS
        while x + d < target:
            x += h
        out[k + 1] = x
        target = x
    return out


@dataclass(frozen=True)
class Envelope:
    lo: float
    hi: float

    @property
    def feasible(self) -> bool:
        return self.lo <= self.hi


def safe_envelope(
    s_t: float,
    t: int,
    limits: SafetyLimits,
    c: BatteryCoefficients,
    ladder: np.ndarray | None = None,
) -> Envelope:
    """Tightest admissible power interval ``[p~_min, p~_max]`` at step ``t``.

    ``ladder`` may be passed to avoid recomputing :func:`goal_ladder` every step.
    """
    lo = max(limits.p_min, power_lower(limits.s_min, s_t, c, limits.p_max))
    hi = min(limits.p_max, power_upper(limits.s_max, s_t, c, limits.p_min))
    if limits.t_des is not None and t < limits.t_des:
        k = limits.t_des - t - 1
        if ladder is None or len(ladder) <= k:
            ladder = goal_ladder(limits.s_des, limits.p_max, c, k)
        lo = max(lo, power_lower(float(ladder[k]), s_t, c, limits.p_max))
    return Envelope(lo, hi)


def clip(p: float, lo: float, hi: float) -> float:
    if p <= lo:
        return lo
    if p >= hi:
        return hi
    return p


def apply_envelope(p: float, env: Envelope, p_max: float) -> tuple[float, bool]:
    """Clip ``p`` into the envelope; returns ``(safe_power, infeasible)``.

    When the envelope is empty the departure goal wins: ``min(lo, p_max)``.
    """
    if env.feasible:
        return clip(p, env.lo, env.hi), False
    return min(env.lo, p_max), True


def f_safe(
    p: float,
    s_t: float,
    t: int,
    limits: SafetyLimits,
    c: BatteryCoefficients,
    ladder: np.ndarray | None = None,
) -> float:
    """Safety-clipped power for a requested power ``p`` at SoC ``s_t`` and step ``t``."""
    env = safe_envelope(s_t, t, limits, c, ladder)
    return apply_envelope(float(p), env, limits.p_max)[0]


def goal_admissible(s0: float, t_des: int, s_des: float, p_max: float, c: BatteryCoefficients) -> bool:
    """True if always charging at ``p_max`` from ``s0`` reaches ``s_des`` by ``t_des``."""
    s = float(s0)
    for _ in range(t_des):
        s = step(c, s, p_max)
    return s >= s_des


def safe_rollout(
    c: BatteryCoefficients,
    limits: SafetyLimits,
    s0: np.ndarray,
    actions: np.ndarray,
    s_des: np.ndarray | None = None,
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Batched closed-loop rollout through the safety controller.

    Parameters
    ----------
    s0 : (E,) initial SoC per episode
    actions : (E, T) requested powers
    s_des : (E,) optional per-episode goal SoC (defaults to ``limits.s_des``)

    Returns
    -------
    soc : (E, T + 1), applied : (E, T), infeasible : (E, T) bool
    """
    from roomev import kernels

    s0 = np.ascontiguousarray(s0, dtype=float)
    actions = np.ascontiguousarray(actions, dtype=float)
    if s_des is None:
        s_des = np.full(s0.shape, limits.s_des)
    s_des = np.ascontiguousarray(s_des, dtype=float)
    t_des = -1 if limits.t_des is None else int(limits.t_des)
    return kernels.safe_rollout(
        c.alpha0, c.alpha1, c.alpha2,
        limits.s_min, limits.s_max, limits.p_min, limits.p_max,
        t_des, s0, actions, s_des,
    )
