"""Threshold generator: a DDPG agent whose action is a CPU threshold pair.

One agent is shared by all VNF types; the type is part of the state as a
one-hot, so the thresholds can still differ per type. Each decision cycle
yields one transition per type.
"""

from __future__ import annotations

import json
import logging
from dataclasses import asdict, dataclass, field
from typing import Iterable, Protocol, Sequence

import numpy as np

from . import neuralnet as nn
from .domain import (
    NormalizationConstants,
    ThresholdPair,
    VnfObservation,
    feature_length,
    observation_to_feature_vector,
)

log = logging.getLogger(__name__)

ACTION_DIM = 2
UPPER_RANGE = (0.5, 0.95)
LOWER_RANGE = (0.05, 0.5)


@dataclass(frozen=True)
class AgentConfig:
    hidden: tuple[int, ...] = (64, 64)
    gamma: float = 0.95
    tau: float = 0.01
    buffer_size: int = 50_000
    batch_size: int = 64
    actor_lr: float = 1e-4
    critic_lr: float = 1e-3
    optimizer: str = "adam"
    momentum: float = 0.0
    ou_theta: float = 0.15
    ou_sigma: float = 0.2
    ou_mu: float = 0.0
    sigma_decay: float = 1.0
    sigma_min: float = 0.0
    train_steps_per_cycle: int = 1
    margin: float = 0.1
    final_init: float = 3e-3

    def __post_init__(self):
        if not 0.0 <= self.gamma <= 1.0 or not 0.0 <= self.tau <= 1.0:
            raise ValueError("gamma and tau must be in [0, 1]")
        if self.batch_size < 1 or self.buffer_size < self.batch_size:
            raise ValueError("need 1 <= batch_size <= buffer_size")
        _check_margin(self.margin)


@dataclass(frozen=True)
class RewardConfig:
    """Scale and per-term weights for the cycle reward.

    ``scale=None`` means ``1 / (base_rate * cycle_len)``, which keeps per-cycle
    rewards near unit size.
    """

    scale: float | None = None
    w_throughput: float = 1.0
    w_loss: float = 1.0
    w_queue: float = 1.0


@dataclass(frozen=True)
class Transition:
    state: np.ndarray
    action: np.ndarray
    reward: float
    next_state: np.ndarray
    terminal: bool


class ReplayBuffer:
    """Fixed-capacity ring of transitions; the oldest entry is overwritten first."""

    def __init__(self, capacity: int, state_dim: int, action_dim: int = ACTION_DIM, seed: int = 0):
        self.capacity = capacity
        self.state_dim = state_dim
        self.action_dim = action_dim
        self.s = np.zeros((capacity, state_dim))
        self.a = np.zeros((capacity, action_dim))
        self.r = np.zeros(capacity)
        self.s2 = np.zeros((capacity, state_dim))
        self.done = np.zeros(capacity)
        self._next = 0
        self._size = 0
        self.rng = np.random.default_rng(seed)

    def __len__(self) -> int:
        return self._size

    def add(self, t: Transition) -> None:
        if len(t.state) != self.state_dim or len(t.next_state) != self.state_dim or len(t.action) != self.action_dim:
            raise ValueError("transition dims do not match the buffer")
        i = self._next
        self.s[i], self.a[i], self.r[i], self.s2[i] = t.state, t.action, t.reward, t.next_state
        self.done[i] = float(t.terminal)
        self._next = (i + 1) % self.capacity
        self._size = min(self._size + 1, self.capacity)

    def oldest_index(self) -> int:
        return self._next if self._size == self.capacity else 0

    def sample(self, batch_size: int) -> tuple[np.ndarray, ...]:
        if batch_size > self._size:
            raise ValueError(f"buffer holds {self._size} < batch {batch_size}")
        idx = self.rng.choice(self._size, size=batch_size, replace=False)
        return self.s[idx], self.a[idx], self.r[idx], self.s2[idx], self.done[idx]


class OUNoise:
    def __init__(self, dim: int, theta: float = 0.15, sigma: float = 0.2, mu: float = 0.0, seed=0):
        self.dim = dim
        self.theta, self.sigma, self.mu = theta, sigma, mu
        self.rng = np.random.default_rng(seed)
        self.state = np.full(dim, mu, dtype=np.float64)

    def reset(self) -> None:
        self.state = np.full(self.dim, self.mu, dtype=np.float64)

    def sample(self) -> np.ndarray:
        x = self.state
        self.state = x + self.theta * (self.mu - x) + self.sigma * self.rng.standard_normal(self.dim)
        return self.state.copy()


def _check_margin(margin: float) -> None:
    # the lowest upper threshold must still leave room above the lowest lower one
    if not 0.0 < margin <= UPPER_RANGE[0] - LOWER_RANGE[0]:
        raise ValueError(f"margin must be in (0, {UPPER_RANGE[0] - LOWER_RANGE[0]}], got {margin}")


def map_action(raw: Sequence[float], margin: float = 0.1) -> ThresholdPair:
    """Map an actor output in [-1, 1]^2 to an upper/lower threshold pair."""
    _check_margin(margin)
    a0 = float(np.clip(raw[0], -1.0, 1.0))
    a1 = float(np.clip(raw[1], -1.0, 1.0))
    upper = UPPER_RANGE[0] + (UPPER_RANGE[1] - UPPER_RANGE[0]) / 2.0 * (a0 + 1.0)
    lower = LOWER_RANGE[0] + (LOWER_RANGE[1] - LOWER_RANGE[0]) / 2.0 * (a1 + 1.0)
    return ThresholdPair(upper, min(lower, upper - margin))


def compute_reward(
    aggregates: Iterable[tuple[float, float, float]],
    scale: float = 1.0,
    weights: tuple[float, float, float] = (1.0, 1.0, 1.0),
) -> float:
    """Mean over VNF instances of (processed - dropped - mean queue length).

    ``aggregates`` holds one ``(processed, dropped, mean_queue)`` tuple per
    instance for the elapsed cycle.
    """
    rows = list(aggregates)
    if not rows:
        raise ValueError("reward needs at least one VNF")
    wv, wl, wq = weights
    total = sum(wv * v - wl * l - wq * q for v, l, q in rows)
    return scale * total / len(rows)


class DdpgAgent:
    def __init__(
        self,
        type_ids: Sequence[int],
        norms: NormalizationConstants,
        cfg: AgentConfig = AgentConfig(),
        seed: int = 0,
    ):
        self.type_ids = list(type_ids)
        self.norms = norms
        self.cfg = cfg
        self.seed = seed
        self.state_dim = feature_length(len(self.type_ids))
        rng = np.random.default_rng([seed, 1])
        sizes = [self.state_dim, *cfg.hidden, ACTION_DIM]
        self.actor = nn.DenseNet(sizes, "tanh", rng, final_scale=cfg.final_init)
        self.critic = nn.DenseNet([self.state_dim + ACTION_DIM, *cfg.hidden, 1], "linear", rng,
                                  final_scale=cfg.final_init)
        self.actor_target = self.actor.copy()
        self.critic_target = self.critic.copy()
        self._make_optimizers()
        self.buffer = ReplayBuffer(cfg.buffer_size, self.state_dim, ACTION_DIM, seed=seed)
        self.noise = {
            vt: OUNoise(ACTION_DIM, cfg.ou_theta, cfg.ou_sigma, cfg.ou_mu, seed=[seed, 7, vt])
            for vt in self.type_ids
        }
        self.train_steps = 0

    def _make_optimizers(self) -> None:
        c = self.cfg
        self.actor_opt = nn.make_optimizer(self.actor, c.optimizer, c.actor_lr, c.momentum)
        self.critic_opt = nn.make_optimizer(self.critic, c.optimizer, c.critic_lr, c.momentum)

    def features(self, obs: VnfObservation) -> np.ndarray:
        return observation_to_feature_vector(obs, self.norms, self.type_ids)

    def act_raw(self, features: np.ndarray, explore: bool = False, vnf_type: int | None = None) -> np.ndarray:
        a = nn.forward(self.actor, features)
        if explore:
            key = vnf_type if vnf_type in self.noise else self.type_ids[0]
            a = a + self.noise[key].sample()
        return np.clip(a, -1.0, 1.0)

    def act(self, features: np.ndarray, explore: bool = False, vnf_type: int | None = None) -> ThresholdPair:
        return map_action(self.act_raw(features, explore, vnf_type), self.cfg.margin)

    def decay_noise(self) -> None:
        for n in self.noise.values():
            n.sigma = max(self.cfg.sigma_min, n.sigma * self.cfg.sigma_decay)
            n.reset()

    # ---- learning -----------------------------------------------------------

    def critic_targets(self, r, s2, done) -> np.ndarray:
        a2 = nn.forward(self.actor_target, s2)
        q2 = nn.forward(self.critic_target, np.hstack([s2, a2]))[:, 0]
        return r + self.cfg.gamma * (1.0 - done) * q2

    def critic_loss_and_grad(self, batch) -> tuple[float, nn.ParamGrad]:
        """Mean squared TD error and its exact gradient w.r.t. the critic."""
        s, a, r, s2, done = batch
        y = self.critic_targets(r, s2, done)
        sa = np.hstack([s, a])
        q = nn.forward(self.critic, sa)[:, 0]
        n = len(r)
        err = q - y
        loss = float(np.mean(err ** 2))
        grad, _ = nn.backward(self.critic, sa, (2.0 / n * err)[:, None])
        return loss, grad

    def actor_grad(self, s: np.ndarray) -> tuple[float, nn.ParamGrad]:
        """Gradient of ``-mean Q(s, actor(s))`` w.r.t. the actor parameters."""
        a = nn.forward(self.actor, s)
        sa = np.hstack([s, a])
        q = nn.forward(self.critic, sa)[:, 0]
        n = len(s)
        _, dq_dsa = nn.backward(self.critic, sa, np.full((n, 1), 1.0 / n))
        dq_da = dq_dsa[:, self.state_dim:]
        grad, _ = nn.backward(self.actor, s, -dq_da)
        return float(np.mean(q)), grad

    def train_step(self, batch=None) -> tuple[float, float] | None:
        if batch is None:
            if len(self.buffer) < self.cfg.batch_size:
                return None
            batch = self.buffer.sample(self.cfg.batch_size)
        closs, cgrad = self.critic_loss_and_grad(batch)
        self.critic_opt.step(cgrad)
        qmean, agrad = self.actor_grad(batch[0])
        self.actor_opt.step(agrad)
        nn.soft_update(self.critic_target, self.critic, self.cfg.tau)
        nn.soft_update(self.actor_target, self.actor, self.cfg.tau)
        self.train_steps += 1
        return closs, qmean

    # ---- checkpoints ----------------------------------------------------------

    def dumps(self) -> str:
        meta = {
            "type_ids": self.type_ids,
            "norms": asdict(self.norms),
            "config": {k: (list(v) if isinstance(v, tuple) else v) for k, v in asdict(self.cfg).items()},
            "seed": self.seed,
        }
        parts = ["nfvscale-agent 1", "meta " + json.dumps(meta, sort_keys=True)]
        for name in ("actor", "critic", "actor_target", "critic_target"):
            parts += [f"net {name}", nn.dumps(getattr(self, name)).rstrip("\n"), "end"]
        return "\n".join(parts) + "\n"

    def save(self, path) -> None:
        with open(path, "w") as fh:
            fh.write(self.dumps())

    @classmethod
    def loads(cls, text: str) -> "DdpgAgent":
        lines = text.splitlines()
        if not lines or lines[0] != "nfvscale-agent 1":
            raise ValueError("not an nfvscale agent checkpoint")
        meta = json.loads(lines[1][len("meta "):])
        cfg = dict(meta["config"])
        cfg["hidden"] = tuple(cfg["hidden"])
        agent = cls(meta["type_ids"], NormalizationConstants(**meta["norms"]), AgentConfig(**cfg), meta["seed"])
        i = 2
        while i < len(lines):
            name = lines[i].split()[1]
            j = lines.index("end", i)
            setattr(agent, name, nn.loads("\n".join(lines[i + 1:j])))
            i = j + 1
        agent._make_optimizers()
        return agent

    @classmethod
    def load(cls, path) -> "DdpgAgent":
        with open(path) as fh:
            return cls.loads(fh.read())

    def clone_weights(self) -> dict[str, nn.DenseNet]:
        return {k: getattr(self, k).copy() for k in ("actor", "critic", "actor_target", "critic_target")}


class ScalingEnvLike(Protocol):
    done: bool

    def reset(self) -> list[VnfObservation]: ...

    def decide(self, thresholds: dict[int, ThresholdPair]) -> list: ...

    def advance(self): ...

    def instance_aggregates(self, window, vnf_type: int) -> list[tuple[float, float, float]]: ...


@dataclass
class CycleLog:
    cycle: int
    tick: int
    thresholds: dict[int, ThresholdPair]
    rewards: dict[int, float]
    critic_loss: float | None = None
    q_mean: float | None = None


@dataclass
class EpisodeLog:
    cycles: list[CycleLog] = field(default_factory=list)

    @property
    def total_reward(self) -> float:
        return sum(sum(c.rewards.values()) for c in self.cycles)


def run_episode(
    env: ScalingEnvLike,
    agent: DdpgAgent,
    explore: bool = True,
    train: bool = True,
    reward: RewardConfig = RewardConfig(),
    reward_scale: float = 1.0,
    max_cycles: int | None = None,
) -> EpisodeLog:
    """Drive ``env`` one decision cycle at a time with thresholds from ``agent``."""
    out = EpisodeLog()
    if max_cycles == 0:
        return out
    obs = env.reset()
    weights = (reward.w_throughput, reward.w_loss, reward.w_queue)
    k = 0
    while not env.done and (max_cycles is None or k < max_cycles):
        feats = {o.f: agent.features(o) for o in obs}
        raws = {vt: agent.act_raw(x, explore, vt) for vt, x in feats.items()}
        thresholds = {vt: map_action(a, agent.cfg.margin) for vt, a in raws.items()}
        tick = env.tick
        env.decide(thresholds)
        outcome = env.advance()
        k += 1
        terminal = env.done or (max_cycles is not None and k >= max_cycles)
        next_feats = {o.f: agent.features(o) for o in outcome.observations}
        rewards = {}
        for vt in feats:
            r = compute_reward(env.instance_aggregates(outcome.window, vt), reward_scale, weights)
            rewards[vt] = r
            agent.buffer.add(Transition(feats[vt], raws[vt], r, next_feats[vt], env.done))
        row = CycleLog(k - 1, tick, thresholds, rewards)
        if train:
            for _ in range(agent.cfg.train_steps_per_cycle):
                res = agent.train_step()
                if res is not None:
                    row.critic_loss, row.q_mean = res
        out.cycles.append(row)
        obs = outcome.observations
        if terminal:
            break
    return out
