"""End-to-end runs: traffic -> simulator -> policy -> scaling -> metrics and CSVs."""

from __future__ import annotations

import csv
import logging
from dataclasses import dataclass, field
from pathlib import Path

from . import traffic
from .baselines import AgentPolicy, ProportionalPolicy, StaticPolicy
from .config import RunConfig
from .ddpg import DdpgAgent, run_episode
from .env import ScalingEnv
from .metrics import RunMetrics, collect_metrics

log = logging.getLogger(__name__)

TICK_COLUMNS = ["tick", "instance", "vnf_type", "S", "L", "Q", "U"]
DECISION_COLUMNS = ["tick", "vnf_type", "action", "source", "target", "migrated", "n_run", "n_idle",
                    "gamma_run", "n_idle_star", "emergency", "deferred", "note"]
ALARM_COLUMNS = ["tick", "breach_tick", "vnf_type", "vm_id", "cause", "action"]
CURVE_COLUMNS = ["episode", "scenario_seed", "total_reward", "critic_loss", "eval_alpha",
                 "eval_loss_rate", "best_alpha"]


def make_env(cfg: RunConfig, record_ticks: bool = False) -> ScalingEnv:
    return ScalingEnv(cfg.env_settings(record_ticks), traffic.generate(cfg.scenario))


def make_policy(cfg: RunConfig, agent: DdpgAgent | None = None):
    p = cfg.policy
    if p.kind == "static":
        return StaticPolicy(p.upper, p.lower)
    if p.kind == "proportional":
        return ProportionalPolicy(p.k_i, p.setpoint, p.gap, p.initial_upper)
    if agent is None:
        agent = DdpgAgent.load(p.checkpoint)
    return AgentPolicy(agent)


@dataclass
class RunResult:
    metrics: RunMetrics
    env: ScalingEnv
    alarms: list = field(default_factory=list)


def simulate(cfg: RunConfig, policy, record_ticks: bool = False) -> RunResult:
    env = make_env(cfg, record_ticks)
    obs = env.reset()
    while not env.done:
        env.decide(policy.thresholds(obs))
        obs = env.advance().observations
    return RunResult(collect_metrics(env), env, env.ep.records)


def run(cfg: RunConfig, out_dir: str | Path | None = None, agent: DdpgAgent | None = None) -> RunMetrics:
    """One full run of ``cfg``; writes the CSV artifacts when ``out_dir`` is given."""
    res = simulate(cfg, make_policy(cfg, agent), record_ticks=out_dir is not None)
    if out_dir is not None:
        write_artifacts(res, Path(out_dir))
    return res.metrics


def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, bool):
        return str(int(v))
    if isinstance(v, float):
        return repr(v)
    if isinstance(v, tuple):
        return " ".join(str(x) for x in v)
    return str(v)


def write_table(path: Path, columns: list[str], rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(columns)
        for r in rows:
            w.writerow([_fmt(x) for x in r])


def write_artifacts(res: RunResult, out: Path) -> None:
    out.mkdir(parents=True, exist_ok=True)
    write_table(out / "metrics.csv", RunMetrics.columns(), [res.metrics.row()])
    write_table(out / "ticks.csv", TICK_COLUMNS,
               ([t, r.vm_id, r.vnf_type, r.s, r.l, r.q, r.u] for t, r in res.env.tick_rows))
    write_table(out / "decisions.csv", DECISION_COLUMNS,
               ([getattr(rec, c) for c in DECISION_COLUMNS] for rec in res.env.engine.records))
    write_table(out / "alarms.csv", ALARM_COLUMNS,
               ([getattr(rec, c) for c in ALARM_COLUMNS] for rec in res.alarms))


def read_csv(path: str | Path) -> list[dict[str, str]]:
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


# ---- training ---------------------------------------------------------------


def training_seed(cfg: RunConfig, episode: int) -> int:
    return cfg.seed * 100_000 + episode


def new_agent(cfg: RunConfig) -> DdpgAgent:
    return DdpgAgent(sorted(cfg.profiles), cfg.normalization(), cfg.agent, seed=cfg.seed)


def evaluate(agent: DdpgAgent, cfg: RunConfig, seeds) -> list[RunMetrics]:
    policy = AgentPolicy(agent)
    return [simulate(cfg.with_seed(s), policy).metrics for s in seeds]


def _mean(xs) -> float:
    xs = list(xs)
    return sum(xs) / len(xs)


@dataclass
class TrainResult:
    agent: DdpgAgent
    curve: list[list]
    best_alpha: float | None
    best_episode: int | None
    checkpoint: Path | None = None


def train(cfg: RunConfig, episodes: int, out_dir: str | Path | None = None) -> TrainResult:
    """Train a fresh agent for ``episodes`` episodes over seeded scenario variants.

    The policy is evaluated greedily on ``cfg.train.eval_seeds`` every
    ``eval_every`` episodes and after the last one; the checkpoint kept is
    the one with the lowest mean evaluation alpha.
    """
    if episodes < 0:
        raise ValueError("episodes must be >= 0")
    agent = new_agent(cfg)
    best_text = agent.dumps()
    best_alpha = best_ep = None
    curve = []
    scale = cfg.reward_scale()
    every = cfg.train.eval_every
    for ep in range(episodes):
        seed = training_seed(cfg, ep)
        env = make_env(cfg.with_seed(seed))
        elog = run_episode(env, agent, explore=True, train=True, reward=cfg.reward, reward_scale=scale)
        agent.decay_noise()
        losses = [c.critic_loss for c in elog.cycles if c.critic_loss is not None]
        row = [ep, seed, elog.total_reward, _mean(losses) if losses else None, None, None]
        if (ep + 1) % every == 0 or ep == episodes - 1:
            ms = evaluate(agent, cfg, cfg.train.eval_seeds)
            alpha = _mean(m.alpha for m in ms)
            row[4], row[5] = alpha, _mean(m.packet_loss_rate for m in ms)
            if best_alpha is None or alpha < best_alpha:
                best_alpha, best_ep, best_text = alpha, ep, agent.dumps()
        row.append(best_alpha)
        curve.append(row)
        log.info("episode %d reward %.3f eval_alpha %s", ep, row[2], row[4])
    best = DdpgAgent.loads(best_text)
    res = TrainResult(best, curve, best_alpha, best_ep)
    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        res.checkpoint = out / "checkpoint.txt"
        best.save(res.checkpoint)
        write_table(out / "learning_curve.csv", CURVE_COLUMNS, curve)
    return res
