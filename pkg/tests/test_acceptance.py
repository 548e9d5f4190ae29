"""End-to-end acceptance checks; each test prints one PASS/FAIL line with its measured value.

The DDPG and surrogate runs take several minutes in total on one core.
"""
import json
import math
import time
from dataclasses import astuple

import numpy as np
import pytest

from roomev import agents as ag
from roomev import battery as bat
from roomev import cli, envs, nn, plant
from roomev import surrogate as sg
from roomev.evaluation import aggregate, hdd_value

TRUE = bat.BatteryCoefficients(-0.01, 0.05, -0.02)
N_EVAL = 100
EVAL_SEED = 10_000


@pytest.fixture
def verdict(capsys):
    def emit(number: int, ok: bool, detail: str) -> None:
        with capsys.disabled():
            print(f"\n{'PASS' if ok else 'FAIL'} criterion {number}: {detail}")
        assert ok, detail
    return emit


@pytest.fixture(scope="module")
def trace_frame():
    return sg.Frame.from_trace(plant.generate_history(plant.PlantConfig(), 90, 7))


@pytest.fixture(scope="module")
def trained(trace_frame):
    room = sg.train(sg.room_spec(n_layers=3, n_hidden=30), trace_frame, sg.TrainConfig(eta=1e-3, n_ep=20, seed=0))
    weather = sg.train(sg.weather_spec(n_hidden=60), trace_frame, sg.TrainConfig(eta=1e-3, n_ep=10, seed=0))
    return room, weather


@pytest.fixture(scope="module")
def room_factory(trained, trace_frame):
    room, weather = trained
    full = sg.FullRoomModel(weather.model, room.model)
    dist = sg.fit_ar(sg.one_step_residuals(room.model, trace_frame))

    def make(start_minutes=None):
        return envs.RoomEnv(full, trace_frame, disturbance=dist, start_minutes=start_minutes)
    return make


def battery_env():
    return envs.BatteryEnv(TRUE, ev=envs.EvSchedule(), priced=True)


# 1 ------------------------------------------------------------------------------------------------


def test_battery_safety_random_agents(verdict):
    rng = np.random.default_rng(0)
    n, T = 10_000, envs.L_EP
    limits = bat.SafetyLimits(t_des=T)
    s0 = rng.uniform(20.0, 80.0, n)
    s_des = rng.uniform(20.0, 80.0, n)
    actions = rng.uniform(-100.0, 100.0, (n, T))
    t = time.perf_counter()
    soc, applied, _ = bat.safe_rollout(TRUE, limits, s0, actions, s_des)
    elapsed = time.perf_counter() - t

    # oracle: replay the applied powers through the scalar model
    replay = np.empty_like(soc)
    replay[:, 0] = s0
    for k in range(T):
        replay[:, k + 1] = [bat.step(TRUE, s, p) for s, p in zip(replay[:, k], applied[:, k])]
    admissible = np.array([bat.goal_admissible(a, T, b, 100.0, TRUE) for a, b in zip(s0, s_des)])
    in_bounds = bool(np.all((soc >= 20.0) & (soc <= 80.0)))
    goal = bool(np.all(soc[admissible, T] >= s_des[admissible]))
    ok = in_bounds and goal and np.array_equal(replay, soc) and elapsed < 10.0
    verdict(1, ok, f"{n} episodes, bounds held={in_bounds}, goal held on {admissible.sum()} admissible "
                   f"episodes={goal}, rollout {elapsed:.2f}s")


# 2 ------------------------------------------------------------------------------------------------


def test_battery_fit_recovery(verdict):
    rng = np.random.default_rng(1)
    p = rng.uniform(-100.0, 100.0, 5000)
    clean = np.array([bat.delta_soc(TRUE, x) for x in p])
    noisy = clean + rng.normal(0.0, 0.01, p.size)
    fit = bat.fit_coefficients(p, noisy)
    X = np.column_stack([np.ones_like(p), p, np.maximum(p, 0.0)])
    oracle = np.linalg.solve(X.T @ X, X.T @ noisy)
    exact = bat.fit_coefficients(p, clean)
    got, true = np.array(fit.as_tuple()), np.array(TRUE.as_tuple())
    ok = (abs(got[0] - true[0]) <= 0.005 and np.all(np.abs(got[1:] - true[1:]) <= 0.05 * np.abs(true[1:]))
          and np.allclose(got, oracle, rtol=1e-9, atol=1e-12)
          and np.all(np.abs(np.array(exact.as_tuple()) - true) <= 1e-10))
    verdict(2, ok, f"noisy fit {np.round(got, 5).tolist()}, noiseless error "
                   f"{np.max(np.abs(np.array(exact.as_tuple()) - true)):.1e}")


# 3 ------------------------------------------------------------------------------------------------


def test_gradient_correctness(verdict):
    worst = {}
    for kind in ("dense", "lstm", "gru"):
        errs = []
        for k in range(20):
            rng = np.random.default_rng(100 + k)
            if kind == "dense":
                net = nn.MLP([4, 8, 8, 2], "relu", "tanh", rng=rng, final_init=0.3)
                x = rng.normal(size=(3, 4))
            else:
                net = nn.RecurrentNet(3, 2, 2, 5, kind, rng=rng)
                x = rng.normal(size=(2, 4, 3))
            errs.append(nn.grad_check(net, x, h=1e-6, rng=rng))
        worst[kind] = max(errs)
    ok = all(v <= 1e-5 for v in worst.values())
    verdict(3, ok, "max relative error over 20 points " + ", ".join(f"{k} {v:.1e}" for k, v in worst.items()))


# 4 ------------------------------------------------------------------------------------------------


@pytest.mark.slow
def test_surrogate_skill(trained, trace_frame, verdict):
    room, weather = trained
    full = sg.FullRoomModel(weather.model, room.model)
    err = sg.horizon_errors(full, trace_frame, 48)
    mae24, mae48 = float(err["mae"][23]), float(err["mae"][47])
    beats = room.val_loss[-1] < room.persistence_val
    ok = beats and mae24 <= 0.7 and mae48 <= 1.0
    verdict(4, ok, f"one-step val MSE {room.val_loss[-1]:.3g} vs persistence {room.persistence_val:.3g}; "
                   f"room MAE 24 steps {mae24:.3f}, 48 steps {mae48:.3f} over {int(err['n_windows'])} windows")


# 5 ------------------------------------------------------------------------------------------------


@pytest.mark.slow
def test_ddpg_bandit(verdict):
    policy, _ = ag.train_ddpg(lambda: envs.BanditEnv(0.7), ag.DdpgConfig(total_steps=5000, seed=0))
    a = float(policy.act(np.ones(1))[0])
    verdict(5, abs(a - 0.7) <= 0.05, f"learned action {a:.4f}, optimum 0.7")


# 6 ------------------------------------------------------------------------------------------------


def bang_bang_cost(seed: int, start: int) -> float:
    env = battery_env()
    env.reset(seed)
    return sum(env.step(100.0 if k >= start else 0.0).info["cost"] for k in range(envs.L_EP))


@pytest.mark.slow
def test_battery_tariff_shifting(verdict):
    policy, _ = ag.train_ddpg(battery_env, ag.DdpgConfig(total_steps=20_000, seed=0))
    ddpg = aggregate(ag.evaluate(policy, battery_env, N_EVAL, EVAL_SEED))["total_cost"]["mean"]
    ref = aggregate(ag.evaluate(ag.Baseline("RuleBasedCharge"), battery_env, N_EVAL, EVAL_SEED))
    ref_cost = ref["total_cost"]["mean"]
    # oracle: best bang-bang start time per paired episode
    best = np.mean([min(bang_bang_cost(EVAL_SEED + e, k) for k in range(envs.L_EP)) for e in range(N_EVAL)])
    headroom = 1.0 - best / ref_cost
    ok = ddpg <= 0.9 * ref_cost and headroom >= 0.10
    verdict(6, ok, f"DDPG cost {ddpg:.1f} vs charge-immediately {ref_cost:.1f} "
                   f"(ratio {ddpg / ref_cost:.3f}); bang-bang oracle headroom {100 * headroom:.1f}%")


# 7 ------------------------------------------------------------------------------------------------


@pytest.mark.slow
def test_room_non_inferiority(room_factory, verdict):
    policy, _ = ag.train_ddpg(room_factory, ag.DdpgConfig(total_steps=20_000, seed=0))
    d = aggregate(ag.evaluate(policy, room_factory, N_EVAL, EVAL_SEED))
    r = aggregate(ag.evaluate(ag.Baseline("RuleBased"), room_factory, N_EVAL, EVAL_SEED))
    dr, rr = d["total_reward"]["mean"], r["total_reward"]["mean"]
    energy = 100 * (1 - d["total_energy_room"]["mean"] / r["total_energy_room"]["mean"])
    comfort = 100 * (1 - d["mean_comfort_violation"]["mean"] / r["mean_comfort_violation"]["mean"])
    verdict(7, dr >= rr, f"DDPG reward {dr:.1f} vs bang-bang {rr:.1f}; energy savings {energy:.1f}%, "
                         f"comfort improvement {comfort:.1f}%")


# 8 ------------------------------------------------------------------------------------------------


@pytest.mark.slow
def test_joint_agent(room_factory, verdict):
    def joint():
        return envs.JointEnv(room_factory(start_minutes=(1020,)), battery_env())

    policy, _ = ag.train_ddpg(joint, ag.DdpgConfig(total_steps=20_000, seed=0))
    traces: list[dict] = []
    d = aggregate(ag.evaluate(policy, joint, N_EVAL, EVAL_SEED, traces))
    r = aggregate(ag.evaluate(ag.Baseline("RuleBasedCharge"), joint, N_EVAL, EVAL_SEED, traces))
    socs = np.array([t["soc"] for t in traces])
    safe = bool(np.all((socs >= 20.0) & (socs <= 80.0))) and not any(t["infeasible"] for t in traces)
    dc, rc = d["total_cost"]["mean"], r["total_cost"]["mean"]
    verdict(8, dc <= rc and safe, f"joint DDPG cost {dc:.1f} vs RuleBased+charge {rc:.1f}; "
                                  f"SoC in bounds on {socs.size} steps={safe}")


# 9 ------------------------------------------------------------------------------------------------


SMALL = ["--set", "data.days=14",
         "--set", "surrogate.room={lookback: 5, n_layers: 1, n_hidden: 8, cell: lstm, sigma_i: 0.001}",
         "--set", "surrogate.weather={lookback: 5, n_layers: 1, n_hidden: 8, cell: gru, sigma_i: 0.001}",
         "--set", "surrogate.room_train.n_ep=2", "--set", "surrogate.weather_train.n_ep=2",
         "--set", "surrogate.horizon=12",
         "--set", "agent={hidden: [16, 16], batch_size: 16, warmup: 50, total_steps: 200}",
         "--set", "eval.n_episodes=3", "--set", "eval.hdd_days=7"]
STAGES = [["gen-data"], ["preprocess"], ["fit-battery"], ["train-surrogate", "weather"],
          ["train-surrogate", "room"], ["tune", "room", "--budget", "2"], ["train-agent", "battery"],
          ["train-agent", "room"], ["train-agent", "joint"],
          ["evaluate", "--env", "room", "--agents", "RuleBased,DDPG"],
          ["evaluate", "--env", "battery", "--agents", "RuleBasedCharge,DDPG"],
          ["evaluate", "--env", "joint", "--agents", "RuleBasedCharge,DDPG"], ["report"]]


def test_determinism(tmp_path, capsys, verdict):
    digests = []
    for name in ("a", "b"):
        d = tmp_path / name
        for stage in STAGES:
            assert cli.main(stage + ["--run-dir", str(d)] + SMALL) == 0, stage
        digests.append(json.loads((d / cli.MANIFEST).read_text())["artifacts"])
    capsys.readouterr()
    differing = sorted(k for k in digests[0] if digests[0][k] != digests[1].get(k))
    ok = not differing and digests[0].keys() == digests[1].keys()
    verdict(9, ok, f"{len(digests[0])} artifacts across {len(STAGES)} stages, differing: {differing or 'none'}")


# 10 -----------------------------------------------------------------------------------------------


def test_exact_tables(verdict):
    box = envs.ComfortBounds(21.0, 25.0)
    track = envs.ComfortBounds(22.5, 22.5)
    rows = [
        envs.c_pen(23.0, box) == 0.0, envs.c_pen(26.0, box) == 1.0, envs.c_pen(22.0, track) == 0.5,
        envs.price_at(720) == 2.0, envs.price_at(180) == 1.0, envs.price_at(480) == 2.0,
        [hdd_value(t) for t in (11.0, 18.0, 20.0)] == [7.0, 0.0, 0.0],
        sg.encode_time(0) == sg.TimeEncoding(0.0, 1.0),
        abs(sg.encode_time(360).t_sin - 1.0) <= 1e-15 and abs(sg.encode_time(360).t_cos) <= 1e-15,
        math.isclose(math.dist(astuple(sg.encode_time(1439)), astuple(sg.encode_time(0))),
                     2 * math.sin(math.pi / 1440), abs_tol=1e-12),
    ]
    verdict(10, all(rows), f"{sum(rows)}/{len(rows)} tabulated examples exact")
