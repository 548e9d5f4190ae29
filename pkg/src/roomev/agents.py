"""DDPG and the rule-based baselines."""
from __future__ import annotations

from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Callable, Protocol

import numpy as np

from roomev import bundle, nn
from roomev.evaluation import EpisodeMetrics


class TrainingDivergedError(RuntimeError):
    pass


class Env(Protocol):
    action_low: np.ndarray
    action_high: np.ndarray
    obs_dim: int
    name: str

    def reset(self, seed: int | None = None) -> np.ndarray: ...

    def step(self, action): ...


@dataclass(frozen=True)
class DdpgConfig:
    gamma: float = 0.99
    tau: float = 0.001
    actor_lr: float = 1e-4
    critic_lr: float = 1e-3
    batch_size: int = 64
    replay_capacity: int = 100_000
    total_steps: int = 20_000
    warmup: int = 1000
    ou_theta: float = 0.15
    ou_sigma: float = 0.2
    ou_mu: float = 0.0
    hidden: tuple[int, ...] = (100, 100)
    reward_scale: float = 1.0
    seed: int = 0
    divergence_threshold: float = 1e6
    divergence_patience: int = 100

    def __post_init__(self) -> None:
        object.__setattr__(self, "hidden", tuple(self.hidden))
        if not 0 < self.gamma < 1:
            raise ValueError("gamma must lie in (0, 1)")
        if not 0 < self.tau <= 1:
            raise ValueError("tau must lie in (0, 1]")
        if self.replay_capacity < self.batch_size:
            raise ValueError("replay capacity must be at least the batch size")
        if self.total_steps < 1 or self.batch_size < 1:
            raise ValueError("total_steps and batch_size must be >= 1")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["hidden"] = list(self.hidden)
        return d


class OUNoise:
    """Ornstein-Uhlenbeck process ``dx = theta (mu - x) dt + sigma dW`` with unit step."""

    def __init__(self, dim: int, theta: float, sigma: float, mu: float = 0.0,
                 rng: np.random.Generator | None = None):
        self.theta, self.sigma, self.mu = theta, sigma, mu
        self.rng = rng or np.random.default_rng(0)
        self.x = np.full(dim, mu, dtype=float)

    def reset(self) -> None:
        self.x[:] = self.mu

    def sample(self) -> np.ndarray:
        dw = self.rng.normal(size=self.x.shape) if self.sigma > 0 else 0.0
        self.x = self.x + self.theta * (self.mu - self.x) + self.sigma * dw
        return self.x.copy()


class ReplayBuffer:
    def __init__(self, capacity: int, obs_dim: int, act_dim: int):
        self.capacity = capacity
        self.obs = np.zeros((capacity, obs_dim))
        self.act = np.zeros((capacity, act_dim))
        self.rew = np.zeros(capacity)
        self.next_obs = np.zeros((capacity, obs_dim))
        self.done = np.zeros(capacity)
        self.size = 0
        self.pos = 0

    def __len__(self) -> int:
        return self.size

    def add(self, o, a, r, o2, d) -> None:
        i = self.pos
        self.obs[i], self.act[i], self.rew[i], self.next_obs[i], self.done[i] = o, a, r, o2, float(d)
        self.pos = (self.pos + 1) % self.capacity
        self.size = min(self.size + 1, self.capacity)

    def sample(self, n: int, rng: np.random.Generator):
        idx = rng.integers(0, self.size, n)
        return self.obs[idx], self.act[idx], self.rew[idx], self.next_obs[idx], self.done[idx]


class ActionScaler:
    """Affine map between the squashed range ``[-1, 1]`` and the env's action box."""

    def __init__(self, low, high):
        self.low = np.asarray(low, dtype=float)
        self.high = np.asarray(high, dtype=float)
        if self.low.shape != self.high.shape or np.any(self.low >= self.high):
            raise ValueError("need low < high per action dimension")

    def to_env(self, a_norm: np.ndarray) -> np.ndarray:
        return self.low + (np.asarray(a_norm) + 1.0) * 0.5 * (self.high - self.low)

    def to_norm(self, a: np.ndarray) -> np.ndarray:
        return 2.0 * (np.asarray(a) - self.low) / (self.high - self.low) - 1.0

    def to_dict(self) -> dict:
        return {"low": self.low.tolist(), "high": self.high.tolist()}


def make_actor(obs_dim: int, act_dim: int, hidden, rng) -> nn.MLP:
    return nn.MLP([obs_dim, *hidden, act_dim], "relu", "tanh", rng=rng, final_init=3e-3)


def make_critic(obs_dim: int, act_dim: int, hidden, rng) -> nn.MLP:
    return nn.MLP([obs_dim + act_dim, *hidden, 1], "relu", "linear", rng=rng, final_init=3e-3)


def soft_update(target: nn.Network, online: nn.Network, tau: float) -> None:
    target.set_flat((1.0 - tau) * target.get_flat() + tau * online.get_flat())


@dataclass
class PolicyArtifact:
    actor: nn.MLP
    scaler: ActionScaler
    env_name: str
    seed: int
    config: dict = field(default_factory=dict)
    critic: nn.MLP | None = None

    def act(self, obs: np.ndarray, noise: np.ndarray | None = None) -> np.ndarray:
        a = self.actor(np.atleast_2d(obs))[0]
        if noise is not None:
            a = np.clip(a + noise, -1.0, 1.0)
        return self.scaler.to_env(a)

    def __call__(self, obs, state=None) -> np.ndarray:
        return self.act(obs)

    def save(self, path: str | Path) -> Path:
        meta = {"env": self.env_name, "seed": self.seed, "config": self.config,
                "scaler": self.scaler.to_dict(), "actor_sizes": self.actor.sizes,
                "critic_sizes": self.critic.sizes if self.critic is not None else None}
        arrays = [("actor." + n, a) for n, a in self.actor.named_params()]
        if self.critic is not None:
            arrays += [("critic." + n, a) for n, a in self.critic.named_params()]
        return bundle.save_bundle(path, "policy", meta, arrays)

    @classmethod
    def load(cls, path: str | Path) -> "PolicyArtifact":
        manifest, arrays = bundle.load_bundle(path, "policy")
        meta = manifest["meta"]
        actor = nn.MLP(meta["actor_sizes"], "relu", "tanh")
        _fill(actor, arrays, "actor.")
        critic = None
        if meta.get("critic_sizes"):
            critic = nn.MLP(meta["critic_sizes"], "relu", "linear")
            _fill(critic, arrays, "critic.")
        scaler = ActionScaler(meta["scaler"]["low"], meta["scaler"]["high"])
        return cls(actor, scaler, meta["env"], meta["seed"], meta["config"], critic)


def _fill(net: nn.Network, arrays: dict, prefix: str) -> None:
    for name, arr in net.named_params():
        key = prefix + name
        if key not in arrays or arrays[key].shape != arr.shape:
            raise bundle.BundleError(f"policy bundle is missing or mis-shaped: {key}")
        arr[...] = arrays[key]


@dataclass
class LearningCurve:
    rows: list[dict] = field(default_factory=list)

    def csv(self, comment: str | None = None) -> str:
        lines = [f"# {comment}"] if comment else []
        lines.append("step,episode,episode_return,critic_loss")
        for r in self.rows:
            lines.append(f"{r['step']},{r['episode']},{r['episode_return']!r},{r['critic_loss']!r}")
        return "\n".join(lines) + "\n"


class DDPG:
    def __init__(self, obs_dim: int, action_low, action_high, config: DdpgConfig):
        self.config = config
        self.scaler = ActionScaler(action_low, action_high)
        act_dim = self.scaler.low.size
        self.obs_dim, self.act_dim = obs_dim, act_dim
        rng = np.random.default_rng(config.seed)
        self.rng = rng
        self.actor = make_actor(obs_dim, act_dim, config.hidden, rng)
        self.critic = make_critic(obs_dim, act_dim, config.hidden, rng)
        self.actor_target = make_actor(obs_dim, act_dim, config.hidden, rng)
        self.critic_target = make_critic(obs_dim, act_dim, config.hidden, rng)
        self.actor_target.copy_from(self.actor)
        self.critic_target.copy_from(self.critic)
        self.actor_opt = nn.Adam(self.actor.n_params(), config.actor_lr)
        self.critic_opt = nn.Adam(self.critic.n_params(), config.critic_lr)
        self.noise = OUNoise(act_dim, config.ou_theta, config.ou_sigma, config.ou_mu, rng)
        self.buffer = ReplayBuffer(config.replay_capacity, obs_dim, act_dim)
        self._bad_updates = 0

    def act_norm(self, obs: np.ndarray, explore: bool = False) -> np.ndarray:
        a = self.actor(np.atleast_2d(obs))[0]
        if explore:
            a = np.clip(a + self.noise.sample(), -1.0, 1.0)
        return a

    def update(self) -> float:
        cfg = self.config
        o, a, r, o2, d = self.buffer.sample(cfg.batch_size, self.rng)
        B = o.shape[0]
        a2 = self.actor_target(o2)
        q2 = self.critic_target(np.hstack([o2, a2]))[:, 0]
        y = r * cfg.reward_scale + cfg.gamma * (1.0 - d) * q2

        q, caches = self.critic.forward(np.hstack([o, a]))
        err = q[:, 0] - y
        loss = float(np.mean(err ** 2))
        _, grads = self.critic.backward((2.0 * err / B)[:, None], caches)
        self.critic_opt.apply(self.critic, self.critic.flatten_grads(grads))

        mu, a_caches = self.actor.forward(o)
        _, c_caches = self.critic.forward(np.hstack([o, mu]))
        dx, _ = self.critic.backward(np.full((B, 1), -1.0 / B), c_caches)
        _, a_grads = self.actor.backward(dx[:, self.obs_dim:], a_caches)
        self.actor_opt.apply(self.actor, self.actor.flatten_grads(a_grads))

        soft_update(self.critic_target, self.critic, cfg.tau)
        soft_update(self.actor_target, self.actor, cfg.tau)

        if not np.isfinite(loss) or loss > cfg.divergence_threshold:
            self._bad_updates += 1
            if self._bad_updates >= cfg.divergence_patience:
                raise TrainingDivergedError(
                    f"training diverged: critic loss above {cfg.divergence_threshold:g} "
                    f"for {cfg.divergence_patience} consecutive updates")
        else:
            self._bad_updates = 0
        return loss

    def policy(self, env_name: str) -> PolicyArtifact:
        actor = make_actor(self.obs_dim, self.act_dim, self.config.hidden, None)
        actor.copy_from(self.actor)
        critic = make_critic(self.obs_dim, self.act_dim, self.config.hidden, None)
        critic.copy_from(self.critic)
        return PolicyArtifact(actor, self.scaler, env_name, self.config.seed, self.config.to_dict(), critic)


def train_ddpg(env_factory: Callable[[], Env], config: DdpgConfig, log=None) -> tuple[PolicyArtifact, LearningCurve]:
    """Run DDPG for ``config.total_steps`` environment steps.

    The first ``warmup`` steps act uniformly at random and only fill the
    replay buffer; afterwards every step performs one update.
    """
    env = env_factory()
    agent = DDPG(env.obs_dim, env.action_low, env.action_high, config)
    curve = LearningCurve()
    env_rng = np.random.default_rng(config.seed + 1)
    obs = env.reset(seed=int(env_rng.integers(2**31 - 1)))
    agent.noise.reset()
    ep_return, ep_losses, episode = 0.0, [], 0
    for step in range(1, config.total_steps + 1):
        if step <= config.warmup:
            a_norm = agent.rng.uniform(-1.0, 1.0, agent.act_dim)
        else:
            a_norm = agent.act_norm(obs, explore=True)
        res = env.step(agent.scaler.to_env(a_norm))
        agent.buffer.add(obs, a_norm, res.reward, res.next_state, res.done)
        ep_return += res.reward
        obs = res.next_state
        if step > config.warmup and len(agent.buffer) >= config.batch_size:
            ep_losses.append(agent.update())
        if res.done:
            curve.rows.append({"step": step, "episode": episode, "episode_return": float(ep_return),
                               "critic_loss": float(np.mean(ep_losses)) if ep_losses else float("nan")})
            if log is not None and episode % 50 == 0:
                log(f"step {step}: episode {episode} return {ep_return:.4g}")
            episode += 1
            ep_return, ep_losses = 0.0, []
            obs = env.reset(seed=int(env_rng.integers(2**31 - 1)))
            agent.noise.reset()
    return agent.policy(env.name), curve


# -- baselines --------------------------------------------------------------------------

BASELINES = ("ValvesOpen", "ValvesClosed", "RuleBased", "ValvesOpenCharge",
             "ValvesClosedDischarge", "RuleBasedCharge")

_ROOM_RULE = {"ValvesOpen": "open", "ValvesClosed": "closed", "RuleBased": "bang",
              "ValvesOpenCharge": "open", "ValvesClosedDischarge": "closed", "RuleBasedCharge": "bang"}
_BAT_RULE = {"ValvesOpenCharge": "charge", "ValvesClosedDischarge": "discharge", "RuleBasedCharge": "charge"}


class Baseline:
    """Stateless decision rule acting on an environment's ``control_state``.

    The room channel is used by room and joint environments, the battery
    channel by battery and joint environments; a missing battery rule idles.
    """

    def __init__(self, kind: str):
        if kind not in BASELINES:
            raise ValueError(f"unknown agent {kind!r}; valid agents: {', '.join(BASELINES)}")
        self.kind = kind

    def room_action(self, state: dict) -> float:
        rule = _ROOM_RULE[self.kind]
        if rule == "open":
            return 1.0
        if rule == "closed":
            return 0.0
        return 1.0 if state["room_temp"] < state["setpoint"] else 0.0

    def battery_action(self, state: dict) -> float:
        rule = _BAT_RULE.get(self.kind)
        if rule == "charge":
            return state["p_max"] if state["soc"] < state["s_max"] else 0.0
        if rule == "discharge":
            return state["p_min"] if state["soc"] > state["s_min"] else 0.0
        return 0.0

    def act(self, state: dict, env_name: str) -> np.ndarray:
        if env_name == "room":
            return np.array([self.room_action(state)])
        if env_name == "battery":
            return np.array([self.battery_action(state)])
        if env_name == "joint":
            return np.array([self.room_action(state), self.battery_action(state)])
        raise ValueError(f"baselines do not apply to env {env_name!r}")

    def __call__(self, obs, state=None, env_name: str = "room") -> np.ndarray:
        return self.act(state, env_name)


def run_episode(controller, env: Env, seed: int, trace: list | None = None) -> EpisodeMetrics:
    obs = env.reset(seed=seed)
    infos, rewards = [], []
    done = False
    while not done:
        if isinstance(controller, Baseline):
            a = controller.act(env.control_state, env.name)
        else:
            a = controller.act(obs)
        res = env.step(a)
        infos.append(res.info)
        rewards.append(res.reward)
        if trace is not None:
            trace.append({"seed": seed, "step": len(infos), "reward": res.reward, **res.info})
        obs, done = res.next_state, res.done
    return EpisodeMetrics.from_infos(infos, rewards, seed)


def evaluate(controller, env_factory: Callable[[], Env], n_episodes: int, seed: int = 0,
             traces: list | None = None) -> list[EpisodeMetrics]:
    """Noise-free evaluation on the paired seeds ``seed, seed + 1, ...``."""
    if n_episodes < 1:
        raise ValueError("n_episodes must be >= 1")
    env = env_factory()
    return [run_episode(controller, env, seed + k, traces) for k in range(n_episodes)]


def resolve_agent(name: str, policies: dict[str, PolicyArtifact] | None = None):
    if policies and name in policies:
        return policies[name]
    if name in BASELINES:
        return Baseline(name)
    valid = list(BASELINES) + sorted(policies or {})
    raise ValueError(f"unknown agent {name!r}; valid agents: {', '.join(valid)}")
