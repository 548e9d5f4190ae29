import copy

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from roomev import battery as bat
from roomev import envs, plant
from roomev import surrogate as sg

BOX = envs.ComfortBounds(21.0, 25.0)


def room_env(model, frame, **kw):
    return envs.RoomEnv(model, frame, **kw)


def run(env, actions, seed=0):
    env.reset(seed)
    return [env.step(a) for a in actions]


# penalty and tariff -------------------------------------------------------------------------


@pytest.mark.parametrize("r,b,expected", [(23.0, BOX, 0.0), (26.0, BOX, 1.0), (20.5, BOX, 0.5),
                                          (22.0, envs.ComfortBounds(), 0.5), (22.5, envs.ComfortBounds(), 0.0)])
def test_c_pen_table(r, b, expected):
    assert envs.c_pen(r, b) == expected


@given(st.floats(0, 50), st.floats(15, 30), st.floats(0, 5))
def test_c_pen_nonnegative_and_zero_inside(r, lo, width):
    b = envs.ComfortBounds(lo, lo + width)
    pen = envs.c_pen(r, b)
    assert pen >= 0
    assert (pen == 0) == (b.r_min <= r <= b.r_max)


@pytest.mark.parametrize("minute,expected", [(720, 2.0), (180, 1.0), (480, 2.0), (479, 1.0), (1200, 1.0),
                                             (1199, 2.0)])
def test_price_table(minute, expected):
    assert envs.price_at(minute) == expected


def test_schedule_invariants():
    with pytest.raises(ValueError):
        envs.PriceSchedule(high=1.0, low=2.0)
    with pytest.raises(ValueError):
        envs.EvSchedule(departure=1100, arrival=1000)
    with pytest.raises(ValueError):
        envs.ComfortBounds(23.0, 22.0)
    with pytest.raises(ValueError):
        envs.RewardConfig(alpha=0.0)
    with pytest.raises(ValueError):
        envs.price_at(1440)


def test_ev_schedule():
    ev = envs.EvSchedule()
    assert ev.present(1020) and ev.present(0) and not ev.present(420) and not ev.present(1019)
    assert ev.steps_to_departure(1020) == 56
    assert ev.steps_to_departure(405) == 1


# room -----------------------------------------------------------------------------------------


def test_reset_deterministic_and_gap_free(frozen_model, small_frame):
    data = small_frame.data.copy()
    data[::7, 2] = np.nan
    gappy = sg.Frame(data, small_frame.minutes)
    env = room_env(frozen_model, gappy)
    L = env.L
    for end in env.candidates:
        assert not np.isnan(data[end - L + 1:end + 1]).any()
    a, b = env.reset(3), env.reset(3)
    assert np.array_equal(a, b)
    assert not np.isnan(env.window).any()


def test_heating_filter_and_start_minutes(frozen_model, small_frame):
    env = room_env(frozen_model, small_frame, heating_threshold=6.0, start_minutes=(1020,))
    assert env.candidates.size > 0
    for seed in range(20):
        env.reset(seed)
        assert env.window[-1, 0] < 6.0 and env.minute == 1020.0
    with pytest.raises(ValueError, match="no gap-free"):
        room_env(frozen_model, small_frame, heating_threshold=-100.0)


def test_closed_valve_uses_no_energy(frozen_model, small_frame):
    steps = run(room_env(frozen_model, small_frame), [0.0] * envs.L_EP)
    assert sum(s.info["e_room"] for s in steps) == 0.0


def test_frozen_model_reward_is_penalty_only(frozen_model, small_frame):
    env = room_env(frozen_model, small_frame, bounds=BOX, reward=envs.RewardConfig(alpha=3.0))
    env.reset(1)
    r0 = env.room_temp
    for _ in range(10):
        s = env.step(0.0)
        assert env.room_temp == r0
        assert s.reward == -3.0 * envs.c_pen(r0, BOX)


def test_reward_strictly_decreasing_in_action(frozen_model, small_frame):
    rewards = []
    for a in (0.0, 0.3, 0.6, 1.0):
        env = room_env(frozen_model, small_frame)
        env.reset(5)
        rewards.append(env.step(a).reward)
    assert all(x > y for x, y in zip(rewards, rewards[1:]))


def test_episode_length_and_done_flag(frozen_model, small_frame):
    steps = run(room_env(frozen_model, small_frame), [0.5] * envs.L_EP)
    assert [s.done for s in steps] == [False] * (envs.L_EP - 1) + [True]


def test_room_episodes_reproducible_with_disturbance(frozen_model, small_frame):
    acts = np.random.default_rng(0).uniform(0, 1, envs.L_EP)
    kw = dict(disturbance=sg.ArDisturbance(0.5, 0.05))
    a = run(room_env(frozen_model, small_frame, **kw), acts, seed=9)
    b = run(room_env(frozen_model, small_frame, **kw), acts, seed=9)
    assert [s.reward for s in a] == [s.reward for s in b]
    assert len({s.info["room_temp"] for s in a}) > 1


def test_room_observation_layout(frozen_model, small_frame):
    env = room_env(frozen_model, small_frame)
    obs = env.reset(0)
    assert obs.shape == (env.obs_dim,)
    assert obs[7] == pytest.approx(env.room_temp - 22.5)
    assert obs[5] ** 2 + obs[6] ** 2 == pytest.approx(1.0)


# battery ------------------------------------------------------------------------------------------


def test_zero_action_zero_reward(coeffs):
    env = envs.BatteryEnv(coeffs)
    env.reset(soc=50.0)
    s = env.step(0.0)
    assert s.reward == 0.0 and s.info["safe_action"] == 0.0


def test_constant_discharge_is_pinned_then_charged(coeffs):
    env = envs.BatteryEnv(coeffs)
    env.reset(soc=40.0)
    steps = [env.step(-100.0) for _ in range(envs.L_EP)]
    socs = np.array([s.info["soc"] for s in steps])
    rewards = np.array([s.reward for s in steps])
    assert socs.min() >= 20.0 and socs.max() <= 80.0
    assert np.any(np.isclose(socs, 20.0, atol=1e-9))
    assert socs[-1] >= env.limits.s_des
    assert np.all(rewards[-5:] < 0)
    assert steps[-1].done


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 10_000), st.lists(st.floats(-200, 200), min_size=48, max_size=48))
def test_soc_stays_in_limits_for_any_agent(seed, actions):
    env = envs.BatteryEnv(bat.BatteryCoefficients(-0.01, 0.05, -0.02))
    env.reset(seed)
    for a in actions:
        s = env.step(a)
        assert 20.0 <= s.info["soc"] <= 80.0
        assert not s.info["infeasible"]
    assert env.soc >= env.limits.s_des


def test_priced_reward(coeffs):
    env = envs.BatteryEnv(coeffs, priced=True, start_minute=600)
    env.reset(soc=50.0)
    s = env.step(10.0)
    assert s.reward == -2.0 * s.info["safe_action"]


def test_ev_absence_masks_and_arrival_resets(coeffs):
    env = envs.BatteryEnv(coeffs, ev=envs.EvSchedule(), start_minute=420)
    env.reset(soc=70.0)
    assert env.step(100.0).info["e_bat"] == 0.0 and env.soc == 70.0
    env.reset(minute=1005, soc=70.0)
    s = env.step(-50.0)
    assert s.info["e_bat"] == 0.0 and s.info["soc"] == 30.0


def test_departure_goal_met(coeffs):
    env = envs.BatteryEnv(coeffs, ev=envs.EvSchedule())
    env.reset()
    assert env.minute == 1020.0 and env.soc == 30.0
    flags = [env.step(-100.0).info.get("goal_met") for _ in range(56)]
    assert flags[-1] is True and all(f is None for f in flags[:-1])


# joint --------------------------------------------------------------------------------------------


def joint(frozen_model, frame, coeffs, **kw):
    room = room_env(frozen_model, frame, **kw)
    return envs.JointEnv(room, envs.BatteryEnv(coeffs, ev=envs.EvSchedule(), priced=True))


def test_tariff_ratio_on_energy_term(frozen_model, small_frame, coeffs):
    env = joint(frozen_model, small_frame, coeffs)
    env.reset(2)
    env.battery.soc = 50.0
    saved = copy.deepcopy((env.room.window, env.room.d, env.battery.soc))
    out = {}
    for minute in (1260.0, 1140.0):
        env.room.window, env.room.d, env.battery.soc = copy.deepcopy(saved)
        env.room.minute = env.battery.minute = minute
        s = env.step([0.7, 5.0])
        out[minute] = s.reward + env.reward_cfg.alpha * s.info["c_pen"]
        assert s.info["e_bat"] == 5.0
    assert out[1260.0] / out[1140.0] == pytest.approx(1.0 / 2.0, rel=1e-12)


def test_joint_reward_formula_and_room_decomposition(frozen_model, small_frame, coeffs):
    env = joint(frozen_model, small_frame, coeffs)
    env.reset(4)
    solo = room_env(frozen_model, small_frame)
    solo.reset(4)
    price = envs.price_at(env.room.minute)
    s = env.step([0.4, 0.0])
    r = solo.step(0.4)
    rc = env.reward_cfg
    assert s.reward == -price * (rc.alpha_bat * s.info["e_bat"] + s.info["e_room"]) - rc.alpha * s.info["c_pen"]
    assert s.info["e_room"] == r.info["e_room"] and s.info["c_pen"] == r.info["c_pen"]
    room_part = s.reward + price * rc.alpha_bat * s.info["e_bat"]
    assert room_part == pytest.approx(-price * r.info["e_room"] - rc.alpha * r.info["c_pen"], abs=1e-12)


def test_joint_ev_absence_and_arrival(frozen_model, small_frame, coeffs):
    env = joint(frozen_model, small_frame, coeffs, start_minutes=(900,))
    env.reset(0)
    assert not env.battery.present
    for _ in range(7):
        s = env.step([0.0, 100.0])
        assert s.info["e_bat"] == 0.0
    s = env.step([0.0, 100.0])
    assert env.battery.minute == 1020.0 and s.info["soc"] == 30.0


def test_joint_rejects_scalar_action(frozen_model, small_frame, coeffs):
    env = joint(frozen_model, small_frame, coeffs)
    env.reset(0)
    with pytest.raises(ValueError):
        env.step(0.5)


def test_joint_episode_done_at_48(frozen_model, small_frame, coeffs):
    env = joint(frozen_model, small_frame, coeffs)
    steps = run(env, [[0.5, 0.0]] * envs.L_EP)
    assert steps[-1].done and not any(s.done for s in steps[:-1])
    assert env.observation().shape == (env.obs_dim,)


# plant-backed room ------------------------------------------------------------------------------


def test_plant_room_env(frozen_model):
    o, irr, h, minutes = plant.heating_season(plant.PlantConfig(), 2, seed=0)
    stats = frozen_model.room.stats
    mean = np.array([stats[c].mean for c in sg.FRAME_COLUMNS[:5]])
    std = np.array([stats[c].std for c in sg.FRAME_COLUMNS[:5]])
    rp = plant.RoomPlant()
    env = envs.PlantRoomEnv(rp, o, irr, h, minutes, mean, std)
    env.reset()
    steps = [env.step(0.0) for _ in range(env.horizon)]
    assert sum(s.info["e_room"] for s in steps) == 0.0
    assert steps[-1].done and not steps[-2].done
    env.reset()
    s = env.step(1.0)
    assert s.info["e_room"] == pytest.approx(abs(h[0] - float(rp.water_out(h[0], 22.0, 0.0))))
    room, _ = rp.step(22.0, 21.0, o[0], irr[0], h[0], 1.0)
    assert s.info["room_temp"] == room


def test_bandit():
    env = envs.BanditEnv(0.7)
    env.reset()
    s = env.step(0.7)
    assert s.reward == 0.0 and s.done
    assert env.step(5.0).reward == pytest.approx(-0.09)
