"""Run configuration loaded from YAML.

Top-level keys: ``scenario``, ``vnf_profiles``, ``policy``, ``sim``, ``cycle_len``,
``sla``, ``energy``, ``norms``, ``agent``, ``reward``, ``train``, ``seed``,
``initial_instances``, ``initial_idle``. Only ``scenario`` and ``vnf_profiles``
are required. Errors name the offending field path.
"""

from __future__ import annotations

import dataclasses
import math
import types
import typing
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import yaml

from .ddpg import AgentConfig, RewardConfig
from .domain import NormalizationConstants, VnfProfile
from .env import EnvSettings
from .monitor import SlaPolicy
from .scaling import EnergyConfig
from .sim import SimConfig
from .traffic import Pattern, TrafficScenario


class ConfigError(ValueError):
    def __init__(self, path: str, message: str):
        super().__init__(f"{path}: {message}" if path else message)
        self.path = path


POLICY_KINDS = ("static", "proportional", "ddpg")


@dataclass(frozen=True)
class PolicyConfig:
    kind: str = "static"
    upper: float = 0.8
    lower: float = 0.2
    k_i: float = 0.1
    setpoint: float = 0.6
    gap: float = 0.6
    initial_upper: float = 0.8
    checkpoint: str | None = None

    def __post_init__(self):
        if self.kind not in POLICY_KINDS:
            raise ValueError(f"kind must be one of {POLICY_KINDS}, got {self.kind!r}")
        if self.kind == "ddpg" and not self.checkpoint:
            raise ValueError("ddpg policy needs a checkpoint")


@dataclass(frozen=True)
class SlaConfig:
    enabled: bool = True
    max_loss_rate: float = 0.1
    max_queue_frac: float = 0.9
    consecutive_ticks: int = 2

    def policy(self) -> SlaPolicy:
        return SlaPolicy(self.max_loss_rate, self.max_queue_frac, self.consecutive_ticks)


@dataclass(frozen=True)
class TrainConfig:
    episodes: int = 200
    eval_every: int = 10
    eval_seeds: tuple[int, ...] = (1_000_001,)
    warmup_cycles: int = 0

    def __post_init__(self):
        if self.episodes < 0 or self.eval_every < 1:
            raise ValueError("need episodes >= 0 and eval_every >= 1")
        if not self.eval_seeds:
            raise ValueError("eval_seeds must not be empty")


@dataclass(frozen=True)
class RunConfig:
    scenario: TrafficScenario
    profiles: dict[int, VnfProfile]
    policy: PolicyConfig = PolicyConfig()
    sim: SimConfig = SimConfig()
    cycle_len: int = 60
    sla: SlaConfig = SlaConfig()
    energy: EnergyConfig = EnergyConfig()
    norms: NormalizationConstants | None = None
    agent: AgentConfig = AgentConfig()
    reward: RewardConfig = RewardConfig()
    train: TrainConfig = TrainConfig()
    seed: int = 0
    initial_instances: int = 1
    initial_idle: int = 0
    source: dict = field(default_factory=dict, compare=False, repr=False)

    def with_seed(self, seed: int) -> RunConfig:
        return dataclasses.replace(self, seed=seed, scenario=dataclasses.replace(self.scenario, seed=seed))

    def with_policy(self, **kw) -> RunConfig:
        return dataclasses.replace(self, policy=dataclasses.replace(self.policy, **kw))

    def env_settings(self, record_ticks: bool = False) -> EnvSettings:
        return EnvSettings(
            profiles=self.profiles,
            sim=self.sim,
            cycle_len=self.cycle_len,
            horizon=self.scenario.horizon,
            sla=self.sla.policy(),
            ep_enabled=self.sla.enabled,
            energy=self.energy,
            initial_instances=self.initial_instances,
            initial_idle=self.initial_idle,
            record_ticks=record_ticks,
        )

    def normalization(self) -> NormalizationConstants:
        """Configured constants, or ones sized from the base rate and profiles."""
        if self.norms is not None:
            return self.norms
        sc = self.scenario
        peak = max(sc.base_rate, 1.0) * 2.0
        return NormalizationConstants(
            m=max(1.0, math.ceil(peak / sc.flow_rate_cap)),
            s=peak * self.cycle_len,
            l=peak * self.cycle_len / 2.0,
            q=float(4 * max(p.max_queue_len for p in self.profiles.values())),
        )

    def reward_scale(self) -> float:
        if self.reward.scale is not None:
            return self.reward.scale
        return 1.0 / (max(self.scenario.base_rate, 1e-9) * self.cycle_len)


# ---- generic dataclass construction -------------------------------------------


def _convert(tp: Any, value: Any, path: str) -> Any:
    origin = typing.get_origin(tp)
    args = typing.get_args(tp)
    if origin in (typing.Union, types.UnionType):
        if value is None and type(None) in args:
            return None
        inner = [a for a in args if a is not type(None)]
        return _convert(inner[0], value, path)
    if value is None:
        raise ConfigError(path, "must not be null")
    if tp is bool:
        if not isinstance(value, bool):
            raise ConfigError(path, f"expected a boolean, got {value!r}")
        return value
    if tp is int:
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError(path, f"expected an integer, got {value!r}")
        return value
    if tp is float:
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(path, f"expected a number, got {value!r}")
        return float(value)
    if tp is str:
        if not isinstance(value, str):
            raise ConfigError(path, f"expected a string, got {value!r}")
        return value
    if tp is Pattern:
        try:
            return Pattern(value)
        except ValueError:
            raise ConfigError(path, f"unknown pattern {value!r}; use one of {[p.value for p in Pattern]}") from None
    if origin is tuple:
        if not isinstance(value, (list, tuple)):
            raise ConfigError(path, f"expected a list, got {value!r}")
        return tuple(_convert(args[0], v, f"{path}[{i}]") for i, v in enumerate(value))
    if dataclasses.is_dataclass(tp):
        return build(tp, value, path)
    raise ConfigError(path, f"unsupported field type {tp!r}")


def build(cls: type, data: Any, path: str = "") -> Any:
    """Instantiate dataclass ``cls`` from a mapping, converting field types."""
    if data is None:
        data = {}
    if not isinstance(data, dict):
        raise ConfigError(path, f"expected a mapping, got {data!r}")
    hints = typing.get_type_hints(cls)
    known = {f.name for f in dataclasses.fields(cls) if f.init}
    unknown = sorted(set(data) - known)
    if unknown:
        raise ConfigError(_join(path, str(unknown[0])), "unknown field")
    kwargs = {k: _convert(hints[k], v, _join(path, k)) for k, v in data.items()}
    try:
        return cls(**kwargs)
    except TypeError as e:
        raise ConfigError(path, str(e)) from None
    except ValueError as e:
        if isinstance(e, ConfigError):
            raise
        raise ConfigError(path, str(e)) from None


def _join(path: str, key: str) -> str:
    return f"{path}.{key}" if path else key


def _profiles(data: Any) -> dict[int, VnfProfile]:
    if not isinstance(data, dict) or not data:
        raise ConfigError("vnf_profiles", "expected a non-empty mapping of type id -> profile")
    out = {}
    for k, v in data.items():
        try:
            vt = int(k)
        except (TypeError, ValueError):
            raise ConfigError(f"vnf_profiles.{k}", "type id must be an integer") from None
        out[vt] = build(VnfProfile, v, f"vnf_profiles.{k}")
    return out


def config_from_dict(data: Any) -> RunConfig:
    if not isinstance(data, dict):
        raise ConfigError("", "config must be a mapping")
    data = dict(data)
    if "scenario" not in data:
        raise ConfigError("scenario", "missing required section")
    profiles = _profiles(data.pop("vnf_profiles", None))
    scn_data = dict(data.pop("scenario") or {})
    seed = data.get("seed", scn_data.get("seed", 0))
    scn_data.setdefault("vnf_types", sorted(profiles))
    scn_data["seed"] = seed
    scenario = build(TrafficScenario, scn_data, "scenario")
    if set(scenario.vnf_types) != set(profiles):
        raise ConfigError("scenario.vnf_types", "must match the vnf_profiles keys")
    data["seed"] = seed
    hints = typing.get_type_hints(RunConfig)
    allowed = {f.name for f in dataclasses.fields(RunConfig)} - {"scenario", "profiles", "source"}
    kwargs = {}
    for k, v in data.items():
        if k not in allowed:
            raise ConfigError(str(k), "unknown field")
        kwargs[k] = _convert(hints[k], v, k)
    try:
        cfg = RunConfig(scenario=scenario, profiles=profiles, source=data, **kwargs)
        cfg.env_settings()
    except ValueError as e:
        raise ConfigError("", str(e)) from None
    return cfg


def load_config(path: str | Path) -> RunConfig:
    try:
        text = Path(path).read_text()
    except OSError as e:
        raise ConfigError("", f"cannot read {path}: {e.strerror}") from None
    try:
        data = yaml.safe_load(text)
    except yaml.YAMLError as e:
        raise ConfigError("", f"invalid YAML in {path}: {e}") from None
    return config_from_dict(data)
