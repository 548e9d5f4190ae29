"""Episode metrics, paired comparisons and heating-degree-day normalisation."""
from __future__ import annotations

import csv
import io
import math
from dataclasses import asdict, dataclass, field, fields
from typing import Callable, Sequence

import numpy as np

from roomev.bundle import dumps

HDD_BASE = 18.0


@dataclass(frozen=True)
class EpisodeMetrics:
    total_energy_room: float = 0.0
    total_energy_bat: float = 0.0
    mean_comfort_violation: float = 0.0
    max_comfort_violation: float = 0.0
    total_cost: float = 0.0
    total_reward: float = 0.0
    final_soc: float = float("nan")
    infeasible_steps: int = 0
    seed: int = 0

    def __post_init__(self) -> None:
        if self.mean_comfort_violation < 0 or self.max_comfort_violation < 0:
            raise ValueError("comfort violations are non-negative")
        if self.infeasible_steps < 0:
            raise ValueError("infeasible_steps must be >= 0")

    @classmethod
    def from_infos(cls, infos: Sequence[dict], rewards: Sequence[float], seed: int = 0) -> "EpisodeMetrics":
        pen = [i["c_pen"] for i in infos]
        socs = [i["soc"] for i in infos if "soc" in i]
        return cls(
            total_energy_room=float(sum(i["e_room"] for i in infos)),
            total_energy_bat=float(sum(i["e_bat"] for i in infos)),
            mean_comfort_violation=float(np.mean(pen)) if pen else 0.0,
            max_comfort_violation=float(max(pen)) if pen else 0.0,
            total_cost=float(sum(i.get("cost", 0.0) for i in infos)),
            total_reward=float(sum(rewards)),
            final_soc=float(socs[-1]) if socs else float("nan"),
            infeasible_steps=int(sum(bool(i["infeasible"]) for i in infos)),
            seed=seed,
        )


METRIC_FIELDS = tuple(f.name for f in fields(EpisodeMetrics) if f.name != "seed")


def aggregate(metrics: Sequence[EpisodeMetrics]) -> dict[str, dict[str, float]]:
    """Mean, population std, min and max of every metric field."""
    if not metrics:
        raise ValueError("aggregate needs at least one episode")
    out = {}
    for name in METRIC_FIELDS:
        v = np.array([getattr(m, name) for m in metrics], dtype=float)
        out[name] = {"mean": float(v.mean()), "std": float(v.std()), "min": float(v.min()),
                     "max": float(v.max())}
    return out


def savings_percent(reference: float, candidate: float) -> float:
    """``100 * (ref - cand) / ref``; positive means the candidate uses less."""
    if reference == 0 or not math.isfinite(reference):
        raise ValueError("undefined savings: reference value is zero")
    return 100.0 * (reference - candidate) / reference


@dataclass(frozen=True)
class HddPoint:
    day: int
    hdd: float
    daily_energy: float = float("nan")

    def __post_init__(self) -> None:
        if self.hdd < 0:
            raise ValueError("hdd must be >= 0")


def hdd_value(mean_temp: float, base: float = HDD_BASE) -> float:
    return max(0.0, base - mean_temp)


def hdd(daily_mean_temps: Sequence[float], daily_energy: Sequence[float] | None = None,
        base: float = HDD_BASE) -> list[HddPoint]:
    temps = [float(t) for t in daily_mean_temps]
    if not all(math.isfinite(t) for t in temps):
        raise ValueError("daily mean temperatures must be finite")
    energy = list(daily_energy) if daily_energy is not None else [float("nan")] * len(temps)
    if len(energy) != len(temps):
        raise ValueError("need one energy value per day")
    return [HddPoint(d, hdd_value(t, base), float(e)) for d, (t, e) in enumerate(zip(temps, energy))]


@dataclass(frozen=True)
class LinearFit:
    slope: float
    intercept: float
    residual: float

    def __call__(self, x):
        return self.slope * np.asarray(x, dtype=float) + self.intercept


def fit_line(points: Sequence[HddPoint]) -> LinearFit:
    x = np.array([p.hdd for p in points], dtype=float)
    y = np.array([p.daily_energy for p in points], dtype=float)
    if x.size < 2 or np.unique(x).size < 2:
        raise ValueError("hdd regression needs at least two distinct hdd values")
    design = np.column_stack([x, np.ones_like(x)])
    coef, *_ = np.linalg.lstsq(design, y, rcond=None)
    resid = float(np.sqrt(np.mean((design @ coef - y) ** 2)))
    return LinearFit(float(coef[0]), float(coef[1]), resid)


def hdd_regression(reference: Sequence[HddPoint], candidate: Sequence[HddPoint],
                   n_grid: int = 200) -> dict:
    """Per-agent OLS lines and the mean relative gap over the jointly observed hdd range."""
    ref_fit, cand_fit = fit_line(reference), fit_line(candidate)
    lo = max(min(p.hdd for p in reference), min(p.hdd for p in candidate))
    hi = min(max(p.hdd for p in reference), max(p.hdd for p in candidate))
    if not hi > lo:
        lo = min(p.hdd for p in reference)
        hi = max(p.hdd for p in reference)
    grid = np.linspace(lo, hi, n_grid)
    ref_y = ref_fit(grid)
    if np.any(ref_y == 0):
        raise ValueError("undefined savings: reference fit crosses zero")
    gap = float(np.mean((ref_y - cand_fit(grid)) / ref_y))
    return {"reference": asdict(ref_fit), "candidate": asdict(cand_fit), "hdd_range": [float(lo), float(hi)],
            "mean_gap_percent": 100.0 * gap}


def daily_points(infos: Sequence[dict], steps_per_day: int = 96, base: float = HDD_BASE) -> list[HddPoint]:
    """Group a continuous closed-loop run into days of (hdd, room energy)."""
    n_days = len(infos) // steps_per_day
    if n_days == 0:
        raise ValueError("need at least one full day of steps")
    temps, energy = [], []
    for d in range(n_days):
        day = infos[d * steps_per_day:(d + 1) * steps_per_day]
        temps.append(float(np.mean([i["outside_temp"] for i in day])))
        energy.append(float(sum(i["e_room"] for i in day)))
    return hdd(temps, energy, base)


def hdd_experiment(controllers: dict[str, Callable], env_factory: Callable, steps_per_day: int = 96) -> dict:
    """Run each controller over one long true-plant episode and regress energy on hdd.

    ``controllers`` map names to callables ``(obs, control_state) -> action``;
    the first name is the reference for the regression gaps.
    """
    if not controllers:
        raise ValueError("need at least one controller")
    points = {}
    for name, ctrl in controllers.items():
        env = env_factory()
        obs = env.reset()
        infos = []
        done = False
        while not done:
            res = env.step(ctrl(obs, env.control_state))
            infos.append(res.info)
            obs, done = res.next_state, res.done
        points[name] = daily_points(infos, steps_per_day)
    ref = next(iter(controllers))
    fits = {name: asdict(fit_line(p)) for name, p in points.items()}
    gaps = {name: hdd_regression(points[ref], p)["mean_gap_percent"]
            for name, p in points.items() if name != ref}
    return {"reference": ref, "points": {k: [asdict(p) for p in v] for k, v in points.items()},
            "fits": fits, "mean_gap_percent": gaps}


def hdd_csv(experiment: dict, comment: str | None = None) -> str:
    buf = io.StringIO()
    if comment:
        buf.write(f"# {comment}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["agent", "day", "hdd", "daily_energy", "fit_energy"])
    for name in sorted(experiment["points"]):
        fit = experiment["fits"][name]
        for p in experiment["points"][name]:
            w.writerow([name, p["day"], repr(p["hdd"]), repr(p["daily_energy"]),
                        repr(fit["slope"] * p["hdd"] + fit["intercept"])])
    return buf.getvalue()


@dataclass
class ComparisonReport:
    reference: str
    agents: dict[str, dict]
    seeds: list[int]
    deltas: dict[str, dict[str, float]] = field(default_factory=dict)
    extra: dict = field(default_factory=dict)

    @classmethod
    def build(cls, results: dict[str, Sequence[EpisodeMetrics]], reference: str,
              extra: dict | None = None) -> "ComparisonReport":
        if reference not in results:
            raise ValueError(f"reference agent {reference!r} not among results")
        seeds = [m.seed for m in results[reference]]
        for name, ms in results.items():
            if [m.seed for m in ms] != seeds:
                raise ValueError(f"agent {name!r} was not evaluated on the reference seeds")
        agg = {name: aggregate(ms) for name, ms in results.items()}
        deltas = {}
        ref = agg[reference]
        for name, a in agg.items():
            if name == reference:
                continue
            d = {}
            for key, metric in (("energy", "total_energy_room"), ("comfort", "mean_comfort_violation"),
                                ("cost", "total_cost")):
                try:
                    d[key] = savings_percent(ref[metric]["mean"], a[metric]["mean"])
                except ValueError:
                    d[key] = None
            d["reward_diff"] = a["total_reward"]["mean"] - ref["total_reward"]["mean"]
            deltas[name] = d
        return cls(reference, agg, seeds, deltas, dict(extra or {}))

    def to_dict(self) -> dict:
        return {"reference": self.reference, "agents": self.agents, "seeds": self.seeds,
                "deltas": self.deltas, "extra": self.extra}

    def to_json(self) -> str:
        return dumps(_finite(self.to_dict()))

    def to_csv(self, comment: str | None = None) -> str:
        buf = io.StringIO()
        if comment:
            buf.write(f"# {comment}\n")
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["agent"] + [f"{m}_{s}" for m in METRIC_FIELDS for s in ("mean", "std")])
        for name in sorted(self.agents):
            a = self.agents[name]
            w.writerow([name] + [repr(a[m][s]) for m in METRIC_FIELDS for s in ("mean", "std")])
        return buf.getvalue()


def _finite(obj):
    """Replace NaN/inf by None so the JSON stays standard."""
    if isinstance(obj, float):
        return obj if math.isfinite(obj) else None
    if isinstance(obj, dict):
        return {k: _finite(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_finite(v) for v in obj]
    return obj


def metrics_csv(results: dict[str, Sequence[EpisodeMetrics]], comment: str | None = None) -> str:
    buf = io.StringIO()
    if comment:
        buf.write(f"# {comment}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["agent", "episode", "seed"] + list(METRIC_FIELDS))
    for name in sorted(results):
        for k, m in enumerate(results[name]):
            w.writerow([name, k, m.seed] + [repr(getattr(m, f)) for f in METRIC_FIELDS])
    return buf.getvalue()
