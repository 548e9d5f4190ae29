"""``roomev`` command line: one verb per pipeline stage, all writing into a run directory."""
from __future__ import annotations

import argparse
import copy
import csv
import io
import json
import sys
from pathlib import Path

import numpy as np

from roomev import __version__, agents, bundle, config, envs, evaluation, plant, surrogate
from roomev import battery as bat
from roomev import timeseries as ts

EXIT_OK = 0
EXIT_INTERNAL = 1
EXIT_CONFIG = 2
EXIT_MISSING = 3
EXIT_DATA = 4
EXIT_DIVERGED = 5

MANIFEST = "manifest.json"


class MissingInputError(FileNotFoundError):
    pass


# -- run directory ----------------------------------------------------------------------------


class Run:
    """Output directory of one configuration plus its reproducibility manifest."""

    def __init__(self, cfg: dict, run_dir: str | None = None, warn=None):
        self.cfg = cfg
        self.base_cfg = copy.deepcopy(cfg)
        self.hash = config.config_hash(cfg)
        self.dir = Path(run_dir) if run_dir else Path(cfg["output_dir"]) / f"run-{self.hash}"
        self.dir.mkdir(parents=True, exist_ok=True)
        self.warn = warn or (lambda msg: print(f"warning: {msg}", file=sys.stderr))
        self.comment = f"config_hash={self.hash}"

    def path(self, *parts: str) -> Path:
        p = self.dir.joinpath(*parts)
        p.parent.mkdir(parents=True, exist_ok=True)
        return p

    def subdir(self, *parts: str) -> Path:
        p = self.dir.joinpath(*parts)
        p.mkdir(parents=True, exist_ok=True)
        return p

    def require(self, *parts: str, hint: str = "") -> Path:
        p = self.dir.joinpath(*parts)
        if not p.exists():
            msg = f"missing input {p}"
            raise MissingInputError(msg + (f" (run `roomev {hint}` first)" if hint else ""))
        return p

    def write_text(self, rel: str, text: str) -> Path:
        p = self.path(rel)
        p.write_text(text)
        return p

    def record(self, command: str, files: list[Path], flags: dict | None = None) -> None:
        """Store artifact checksums; warn when a rerun produced different bytes."""
        mpath = self.dir / MANIFEST
        manifest = json.loads(mpath.read_text()) if mpath.exists() else {}
        if manifest.get("config_hash", self.hash) != self.hash:
            self.warn(f"determinism-manifest mismatch: run directory holds config {manifest['config_hash']}")
        artifacts = manifest.get("artifacts", {})
        for f in sorted(files):
            rel = f.relative_to(self.dir).as_posix()
            digest = bundle.file_sha256(f)
            if rel in artifacts and artifacts[rel] != digest:
                self.warn(f"determinism-manifest mismatch: {rel} changed since the last run")
            artifacts[rel] = digest
        commands = manifest.get("commands", {})
        commands[command] = {"flags": flags or {}}
        out = {"config_hash": self.hash, "seed": self.cfg["seed"], "config": self.base_cfg,
               "commands": commands, "artifacts": dict(sorted(artifacts.items()))}
        mpath.write_text(bundle.dumps(out))


def _bundle_files(path: Path) -> list[Path]:
    return [path / bundle.MANIFEST, path / bundle.WEIGHTS]


def _rows_csv(header: list[str], rows, comment: str) -> str:
    buf = io.StringIO()
    buf.write(f"# {comment}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for r in rows:
        w.writerow([repr(x) if isinstance(x, float) else x for x in r])
    return buf.getvalue()


# -- shared loaders -----------------------------------------------------------------------------


def _data_path(run: Run, explicit: str | None) -> Path:
    if explicit:
        p = Path(explicit)
        if not p.is_file():
            raise MissingInputError(f"missing input {p}")
        return p
    clean = run.dir / "data" / "clean.csv"
    if clean.exists():
        return clean
    return run.require("data", "history.csv", hint="gen-data")


def _load_series(path: Path) -> dict[str, ts.TimeSeries]:
    return ts.read_csv(path, plant.UNITS)


def _load_frame(run: Run, explicit: str | None) -> surrogate.Frame:
    series = _load_series(_data_path(run, explicit))
    missing = [c for c in surrogate.FRAME_COLUMNS if c not in series]
    if missing:
        raise ValueError(f"data file lacks columns {missing}")
    return surrogate.Frame.from_series(series)


def _coefficients(run: Run) -> bat.BatteryCoefficients:
    fixed = run.cfg["battery"]["coefficients"]
    if fixed is not None:
        return bat.BatteryCoefficients(*fixed)
    rec = json.loads(run.require("battery", "coefficients.json", hint="fit-battery").read_text())
    return bat.BatteryCoefficients(rec["alpha0"], rec["alpha1"], rec["alpha2"])


def _surrogates(run: Run) -> tuple[surrogate.SurrogateModel, surrogate.SurrogateModel]:
    room = surrogate.SurrogateModel.load(run.require("surrogate", "room", "model", hint="train-surrogate room"))
    weather = surrogate.SurrogateModel.load(
        run.require("surrogate", "weather", "model", hint="train-surrogate weather"))
    return weather, room


def env_factory(run: Run, which: str, data: str | None = None):
    cfg = run.cfg
    e = cfg["env"]
    bounds = envs.ComfortBounds(**e["comfort"])
    reward = envs.RewardConfig(e["alpha"], e["alpha_bat"])
    prices = envs.PriceSchedule(**e["prices"])
    ev = envs.EvSchedule(**e["ev"])
    if which == "bandit":
        return envs.BanditEnv
    if which in ("battery", "joint"):
        coeffs = _coefficients(run)
        limits = config.battery_limits(cfg)

        def battery():
            return envs.BatteryEnv(coeffs, limits, prices, ev, priced=e["priced"], seed=cfg["seed"])

        if which == "battery":
            return battery
    frame = _load_frame(run, data)
    weather, room = _surrogates(run)
    full = surrogate.FullRoomModel(weather, room)
    dist = surrogate.fit_ar(surrogate.one_step_residuals(room, frame)) if e["disturbance"] else None
    starts = (e["joint_start_minute"],) if which == "joint" else None

    def room_env():
        return envs.RoomEnv(full, frame, bounds, reward, dist, start_minutes=starts, seed=cfg["seed"])

    if which == "room":
        return room_env
    return lambda: envs.JointEnv(room_env(), battery(), reward)


# -- commands ---------------------------------------------------------------------------------


def cmd_gen_data(run: Run, args) -> list[Path]:
    cfg = run.cfg
    trace = plant.generate_history(plant.PlantConfig.from_dict(cfg["plant"]), int(cfg["data"]["days"]),
                                   int(cfg["data"]["seed"]))
    out = run.path("data", "history.csv")
    trace.to_csv(out, run.comment)
    raw = run.path("data", "valve_raw.csv")
    ts.to_csv(trace.valve_raw_series(), raw, run.comment)
    print(f"wrote {len(trace)} samples to {out}")
    return [out, raw]


def _pipelines(cfg: dict) -> dict:
    pre = cfg["preprocess"]
    table = dict(ts.PIPELINES)
    if not pre["smooth"]:
        # the synthetic sensors are noise-free; a centred filter would leak future heating into the room target
        table = {k: tuple(st for st in v if st[0] != "gaussian_smooth") for k, v in table.items()}
    for name, stages in pre["pipelines"].items():
        table[name] = tuple((s[0], dict(s[1]) if len(s) > 1 else {}) for s in stages)
    return table


def cmd_preprocess(run: Run, args) -> list[Path]:
    src = Path(args.input) if args.input else run.require("data", "history.csv", hint="gen-data")
    if not src.is_file():
        raise MissingInputError(f"missing input {src}")
    series = _load_series(src)
    n_grid = len(next(iter(series.values())).values)
    raw_path = Path(args.valve_raw) if args.valve_raw else src.parent / "valve_raw.csv"
    if "valve" in series and raw_path.is_file():
        raw = _load_series(raw_path)["valve"]
        if raw.t0 != series["valve"].t0:
            raise ValueError(f"{raw_path} does not start at the same time as {src}")
        series["valve"] = raw
    table = _pipelines(run.cfg)
    cleaned, reports = [], []
    for name, s in series.items():
        stages = table.get(name, ()) if run.cfg["preprocess"]["enabled"] else ()
        if s.dt == plant.DT_MIN:
            # already on the model grid: nothing to subsample
            stages = tuple(st for st in stages if st[0] != "subsample_valve")
        out = ts.run_pipeline(s, stages)
        if out.values.size > n_grid:
            out = ts.TimeSeries(out.name, out.unit, out.t0, out.values[:n_grid], dt=out.dt)
        cleaned.append(out)
        reports.append(ts.GapReport(name, len(s.values), int(np.isnan(s.values).sum()),
                                    int(np.isnan(out.values).sum()), [st[0] for st in stages]))
    dst = run.path("data", "clean.csv") if not args.output else Path(args.output)
    dst.parent.mkdir(parents=True, exist_ok=True)
    ts.frame_to_csv(cleaned, dst, run.comment)
    rep = run.path("data", "gap_report.json")
    rep.write_text(bundle.dumps({"config_hash": run.hash, "channels": [r.as_row() for r in reports]}))
    for r in reports:
        print(f"{r.name}: gaps {r.gaps_before} -> {r.gaps_after}")
    files = [rep]
    if dst.resolve().is_relative_to(run.dir.resolve()):
        files.append(dst)
    return files


def cmd_fit_battery(run: Run, args) -> list[Path]:
    series = _load_series(_data_path(run, args.data))
    if "soc" not in series or "power" not in series:
        raise ValueError("data file needs soc and power columns")
    soc, power = series["soc"].values, series["power"].values
    p, ds = power[:-1], np.diff(soc)
    coeffs = bat.fit_coefficients(p, ds)
    ok = np.isfinite(p) & np.isfinite(ds)
    r2 = bat.fit_r2(coeffs, p[ok], ds[ok])
    rec = {"alpha0": coeffs.alpha0, "alpha1": coeffs.alpha1, "alpha2": coeffs.alpha2, "r2": r2,
           "n_samples": int(ok.sum()), "config_hash": run.hash}
    out = run.write_text("battery/coefficients.json", bundle.dumps(rec))
    pred = coeffs.alpha0 + coeffs.alpha1 * p + coeffs.alpha2 * np.maximum(0.0, p)
    rows = [(float(p[k]), float(ds[k]), float(pred[k]), float(ds[k] - pred[k])) for k in np.flatnonzero(ok)]
    res = run.write_text("battery/residuals.csv", _rows_csv(["power", "delta_soc", "fitted", "residual"], rows,
                                                            run.comment))
    print(f"alpha0={coeffs.alpha0!r} alpha1={coeffs.alpha1!r} alpha2={coeffs.alpha2!r} r2={r2:.6f}")
    return [out, res]


def _weather_horizon_rows(model: surrogate.SurrogateModel, frame: surrogate.Frame, horizon: int, split):
    a, b = surrogate.split_bounds(len(frame), split)[2]
    ends = surrogate.valid_ends(frame, model.spec, horizon, a, b)[::8]
    if ends.size == 0:
        raise surrogate.EmptyDatasetError("no held-out windows long enough for the horizon")
    pred = surrogate.rollout_self(model, frame, ends, horizon)
    cols = [surrogate.FRAME_COLUMNS.index(o) for o in model.spec.outputs]
    truth = frame.data[ends[:, None] + np.arange(1, horizon + 1)[None, :]][:, :, cols]
    err = np.abs(pred - truth)
    rows = []
    for h in range(horizon):
        row = [h + 1]
        for j in range(len(cols)):
            row += [float(err[:, h, j].mean()), float(err[:, h, j].max())]
        rows.append(row)
    header = ["step"] + [f"{o}_{m}" for o in model.spec.outputs for m in ("mae", "max_abs")]
    return header, rows


def cmd_train_surrogate(run: Run, args) -> list[Path]:
    which = args.which
    frame = _load_frame(run, args.data)
    spec = config.surrogate_spec(run.cfg, which)
    tcfg = config.train_config(run.cfg, which)
    tuned = run.dir / "tune" / which / "best.json"
    if args.use_tuned:
        if not tuned.exists():
            raise MissingInputError(f"missing input {tuned} (run `roomev tune {which}` first)")
        best = json.loads(tuned.read_text())
        spec = surrogate.SurrogateSpec.from_dict(best["spec"])
        tcfg = surrogate.TrainConfig(**best["train"])
    res = surrogate.train(spec, frame, tcfg, log=print if args.verbose else None)
    base = f"surrogate/{which}"
    model_dir = res.model.save(run.subdir(base, "model"),
                               {"train": tcfg.to_dict(), "config_hash": run.hash})
    rows = [(k + 1, float(a), float(b)) for k, (a, b) in enumerate(zip(res.train_loss, res.val_loss))]
    loss = run.write_text(f"{base}/loss.csv", _rows_csv(["epoch", "train_loss", "val_loss"], rows, run.comment))
    files = _bundle_files(model_dir) + [loss]
    horizon = int(run.cfg["surrogate"]["horizon"])
    if which == "room":
        weather_dir = run.dir / "surrogate" / "weather" / "model"
        if weather_dir.exists():
            full = surrogate.FullRoomModel(surrogate.SurrogateModel.load(weather_dir), res.model)
            err = surrogate.horizon_errors(full, frame, horizon, split=tcfg.split)
            rows = [(int(s), float(m), float(x), float(p)) for s, m, x, p in
                    zip(err["step"], err["mae"], err["max_abs"], err["persistence_mae"])]
            header = ["step", "mae", "max_abs", "persistence_mae"]
            files.append(run.write_text(f"{base}/horizon_errors.csv", _rows_csv(header, rows, run.comment)))
            print(f"room MAE at 24 steps {err['mae'][min(23, horizon - 1)]:.4f}, "
                  f"at {horizon} steps {err['mae'][-1]:.4f}")
        else:
            print("weather model not trained yet: skipping room horizon errors", file=sys.stderr)
    else:
        header, rows = _weather_horizon_rows(res.model, frame, horizon, tcfg.split)
        files.append(run.write_text(f"{base}/horizon_errors.csv", _rows_csv(header, rows, run.comment)))
    print(f"{which}: train loss {res.train_loss[-1]:.6g}, val loss {res.val_loss[-1]:.6g}, "
          f"persistence {res.persistence_val:.6g}")
    return files


def cmd_tune(run: Run, args) -> list[Path]:
    frame = _load_frame(run, args.data)
    s = run.cfg["surrogate"]["search"]
    budget = int(args.budget if args.budget is not None else s["budget"])
    spec = config.surrogate_spec(run.cfg, args.which)
    tcfg = config.train_config(run.cfg, args.which)
    best_spec, best_cfg, trials = surrogate.hyper_search(spec, config.search_space(run.cfg), budget, frame, tcfg,
                                                         seed=run.cfg["seed"], horizon=int(s["horizon"]),
                                                         log=print if args.verbose else None)
    base = f"tune/{args.which}"
    best = run.write_text(f"{base}/best.json", bundle.dumps({"spec": best_spec.to_dict(),
                                                              "train": best_cfg.to_dict(),
                                                              "config_hash": run.hash}))
    keys = list(trials[0])
    log = run.write_text(f"{base}/trials.csv", _rows_csv(keys, [[t[k] for k in keys] for t in trials],
                                                         run.comment))
    print(f"best trial: {min(trials, key=lambda t: t['objective'])}")
    return [best, log]


def cmd_train_agent(run: Run, args) -> list[Path]:
    factory = env_factory(run, args.env, args.data)
    dcfg = config.ddpg_config(run.cfg)
    policy, curve = agents.train_ddpg(factory, dcfg, log=print if args.verbose else None)
    base = f"agents/{args.env}"
    pdir = policy.save(run.subdir(base, "policy"))
    lc = run.write_text(f"{base}/learning_curve.csv", curve.csv(run.comment))
    last = curve.rows[-10:]
    if last:
        print(f"{args.env}: mean return over last {len(last)} episodes "
              f"{np.mean([r['episode_return'] for r in last]):.4g}")
    return _bundle_files(pdir) + [lc]


def _controllers(run: Run, names: list[str], env_name: str) -> dict:
    policies = {}
    if "DDPG" in names:
        pdir = run.require("agents", env_name, "policy", hint=f"train-agent {env_name}")
        policies["DDPG"] = agents.PolicyArtifact.load(pdir)
    out = {}
    for name in names:
        try:
            out[name] = agents.resolve_agent(name, policies)
        except ValueError:
            raise config.ConfigError(
                f"unknown agent {name!r}; valid agents: {', '.join(config.valid_agent_names())}") from None
    return out


def _trace_csv(traces: list[dict], comment: str) -> str:
    keys = ["agent", "seed", "step", "reward", "raw_action", "safe_action", "e_room", "e_bat", "c_pen",
            "infeasible", "price", "cost", "room_temp", "soc"]
    rows = []
    for t in traces:
        rows.append([t.get(k, "") if not isinstance(t.get(k), list) else "|".join(repr(v) for v in t[k])
                     for k in keys])
    return _rows_csv(keys, rows, comment)


def cmd_evaluate(run: Run, args) -> list[Path]:
    ev = run.cfg["eval"]
    names = args.agents.split(",") if args.agents else list(ev["agents"])
    env_name = args.env or ev["env"]
    n = int(args.n_episodes if args.n_episodes is not None else ev["n_episodes"])
    reference = args.reference or ev["reference"]
    if reference not in names:
        reference = names[0]
    bad = [a for a in names if a not in config.valid_agent_names()]
    if bad:
        raise config.ConfigError(f"unknown agent {bad[0]!r}; valid agents: {', '.join(config.valid_agent_names())}")
    controllers = _controllers(run, names, env_name)
    factory = env_factory(run, env_name, args.data)
    results, traces = {}, []
    n_trace = int(ev["trace_episodes"])
    for name, ctrl in controllers.items():
        tr: list[dict] = []
        results[name] = agents.evaluate(ctrl, factory, n, int(ev["seed"]), tr)
        seeds = set(int(ev["seed"]) + k for k in range(min(n, n_trace)))
        traces += [{"agent": name, **t} for t in tr if t["seed"] in seeds]
    report = evaluation.ComparisonReport.build(results, reference, {"env": env_name, "n_episodes": n,
                                                                    "config_hash": run.hash})
    base = f"eval/{env_name}"
    files = [run.write_text(f"{base}/report.json", report.to_json()),
             run.write_text(f"{base}/report.csv", report.to_csv(run.comment)),
             run.write_text(f"{base}/episodes.csv", evaluation.metrics_csv(results, run.comment)),
             run.write_text(f"{base}/traces.csv", _trace_csv(traces, run.comment))]
    if env_name == "room" and int(ev["hdd_days"]) > 0:
        files += _hdd(run, controllers)
    for name in names:
        a = report.agents[name]
        print(f"{name}: reward {a['total_reward']['mean']:.4g} energy {a['total_energy_room']['mean']:.4g} "
              f"comfort {a['mean_comfort_violation']['mean']:.4g} cost {a['total_cost']['mean']:.4g}")
    return files


def _hdd(run: Run, controllers: dict) -> list[Path]:
    ev = run.cfg["eval"]
    pcfg = plant.PlantConfig.from_dict(run.cfg["plant"])
    o, irr, h_in, minutes = plant.heating_season(pcfg, int(ev["hdd_days"]), int(ev["hdd_seed"]))
    _, room = _surrogates(run)
    mean = np.array([room.stats[c].mean for c in surrogate.FRAME_COLUMNS[:5]])
    std = np.array([room.stats[c].std for c in surrogate.FRAME_COLUMNS[:5]])
    e = run.cfg["env"]

    def factory():
        return envs.PlantRoomEnv(plant.RoomPlant(pcfg.room), o, irr, h_in, minutes, mean, std,
                                 envs.ComfortBounds(**e["comfort"]), envs.RewardConfig(e["alpha"], e["alpha_bat"]))

    calls = {}
    for name, ctrl in controllers.items():
        if isinstance(ctrl, agents.Baseline):
            calls[name] = lambda obs, state, c=ctrl: c.act(state, "room")
        else:
            calls[name] = lambda obs, state, c=ctrl: c.act(obs)
    exp = evaluation.hdd_experiment(calls, factory)
    exp["config_hash"] = run.hash
    return [run.write_text("eval/room/hdd.json", bundle.dumps(exp)),
            run.write_text("eval/room/hdd.csv", evaluation.hdd_csv(exp, run.comment))]


def cmd_report(run: Run, args) -> list[Path]:
    root = Path(args.results) if args.results else run.dir
    eval_dir = root / "eval"
    reports = sorted(eval_dir.glob("*/report.json")) if eval_dir.exists() else []
    if not reports:
        raise MissingInputError(f"missing input: no evaluation reports under {eval_dir} (run `roomev evaluate`)")
    summary: dict = {"config_hash": run.hash, "environments": {}}
    bar_rows = []
    for rp in reports:
        env_name = rp.parent.name
        rep = json.loads(rp.read_text())
        entry = {"reference": rep["reference"], "deltas": rep["deltas"], "agents": {}}
        for name, agg in sorted(rep["agents"].items()):
            entry["agents"][name] = {k: agg[k]["mean"] for k in agg}
            bar_rows.append([env_name, name] + [agg[k]["mean"] for k in
                            ("total_reward", "total_energy_room", "mean_comfort_violation", "total_cost")])
        hdd_path = rp.parent / "hdd.json"
        if hdd_path.exists():
            h = json.loads(hdd_path.read_text())
            entry["hdd"] = {"fits": h["fits"], "mean_gap_percent": h["mean_gap_percent"]}
        summary["environments"][env_name] = entry
    files = [run.write_text("report/summary.json", bundle.dumps(summary)),
             run.write_text("report/bars.csv", _rows_csv(
                 ["env", "agent", "reward", "energy_room", "comfort_violation", "cost"], bar_rows, run.comment))]
    hdd_csv = eval_dir / "room" / "hdd.csv"
    if hdd_csv.exists():
        files.append(run.write_text("report/hdd_scatter.csv", hdd_csv.read_text()))
    print(f"report written to {run.dir / 'report'}")
    return files


COMMANDS = {
    "gen-data": cmd_gen_data,
    "preprocess": cmd_preprocess,
    "fit-battery": cmd_fit_battery,
    "train-surrogate": cmd_train_surrogate,
    "tune": cmd_tune,
    "train-agent": cmd_train_agent,
    "evaluate": cmd_evaluate,
    "report": cmd_report,
}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help=f"YAML config file (default: ${config.CONFIG_ENV})")
    common.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                        help="override a config key, e.g. --set agent.total_steps=5000")
    common.add_argument("--seed", type=int, help="global seed")
    common.add_argument("--output-dir", help="parent of the run directories")
    common.add_argument("--run-dir", help="explicit run directory instead of output_dir/run-<hash>")
    common.add_argument("-v", "--verbose", action="store_true")

    parser = argparse.ArgumentParser(prog="roomev", description="Room heating and EV charging control pipeline.")
    parser.add_argument("--version", action="version", version=f"roomev {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-data", parents=[common], help="simulate the synthetic building history")
    p.add_argument("--days", type=int)

    p = sub.add_parser("preprocess", parents=[common], help="clean raw CSVs and report gaps")
    p.add_argument("--input")
    p.add_argument("--output")
    p.add_argument("--valve-raw", help="1-minute valve log (default: valve_raw.csv next to the input)")

    p = sub.add_parser("fit-battery", parents=[common], help="fit the piecewise-linear battery model")
    p.add_argument("--data")

    p = sub.add_parser("train-surrogate", parents=[common], help="train the weather or room model")
    p.add_argument("which", choices=("weather", "room"))
    p.add_argument("--data")
    p.add_argument("--use-tuned", action="store_true", help="take spec and training config from `tune`")

    p = sub.add_parser("tune", parents=[common], help="random hyperparameter search")
    p.add_argument("which", choices=("weather", "room"), nargs="?", default="room")
    p.add_argument("--data")
    p.add_argument("--budget", type=int)

    p = sub.add_parser("train-agent", parents=[common], help="train a DDPG policy")
    p.add_argument("env", choices=("room", "battery", "joint"))
    p.add_argument("--data")
    p.add_argument("--steps", type=int, help="total environment steps")

    p = sub.add_parser("evaluate", parents=[common], help="paired evaluation of agents")
    p.add_argument("--agents", help="comma-separated agent names")
    p.add_argument("--env", choices=("room", "battery", "joint"))
    p.add_argument("--n-episodes", type=int)
    p.add_argument("--reference")
    p.add_argument("--data")

    p = sub.add_parser("report", parents=[common], help="consolidate evaluation results")
    p.add_argument("--results", help="run directory holding eval/ (default: this run)")
    return parser


def _global_overrides(args) -> dict:
    out = dict(config.parse_override(item) for item in args.set)
    if args.seed is not None:
        out["seed"] = args.seed
        out.setdefault("agent.seed", args.seed)
    if args.output_dir is not None:
        out["output_dir"] = args.output_dir
    return out


def _command_overrides(args) -> dict:
    """Per-command flags; they do not move the run directory but are stored in the manifest."""
    out = {}
    if getattr(args, "days", None) is not None:
        out["data.days"] = args.days
    if getattr(args, "steps", None) is not None:
        out["agent.total_steps"] = args.steps
    return out


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = config.load(args.config, _global_overrides(args))
        run = Run(cfg, args.run_dir)
        extra = _command_overrides(args)
        if extra:
            for key, value in extra.items():
                config.set_path(cfg, key, value)
            config.validate(cfg)
        files = COMMANDS[args.command](run, args)
        run.record(args.command, files, extra)
        return EXIT_OK
    except config.ConfigError as exc:
        print(f"roomev: config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except FileNotFoundError as exc:
        print(f"roomev: missing input: {exc}", file=sys.stderr)
        return EXIT_MISSING
    except agents.TrainingDivergedError as exc:
        print(f"roomev: {exc}", file=sys.stderr)
        return EXIT_DIVERGED
    except ValueError as exc:
        print(f"roomev: data error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
