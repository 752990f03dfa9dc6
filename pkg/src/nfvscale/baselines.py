"""Threshold policies the learned agent is compared against."""

from __future__ import annotations

from dataclasses import dataclass, field

from .domain import ScaleAction, ThresholdPair, VnfObservation, validate_thresholds
from .scaling import evaluate_thresholds


class StaticPolicy:
    name = "static"

    def __init__(self, upper: float = 0.8, lower: float = 0.2):
        tp = ThresholdPair(upper, lower)
        problem = validate_thresholds(tp, margin=0.0)
        if problem:
            raise ValueError(problem)
        self.tp = tp

    def thresholds(self, observations: list[VnfObservation]) -> dict[int, ThresholdPair]:
        return {o.f: self.tp for o in observations}


def baseline_static(obs: VnfObservation, upper: float, lower: float, n_running: int = 2) -> ScaleAction:
    return evaluate_thresholds(obs, ThresholdPair(upper, lower), n_running)


def integral_step(h: float, u: float, setpoint: float, k_i: float) -> float:
    """One unclamped integrator update of the upper threshold."""
    return h + k_i * (u - setpoint)


@dataclass
class ProportionalPolicy:
    """Integral controller on the upper threshold, lower trailing by a fixed gap.

    Each cycle ``H <- clamp(H + k_i * (U - setpoint))`` and ``D = H - gap``.
    """

    k_i: float = 0.1
    setpoint: float = 0.6
    gap: float = 0.6
    initial_upper: float = 0.8
    upper_max: float = 0.95
    history: dict[int, float] = field(default_factory=dict)
    name: str = "proportional"

    def __post_init__(self):
        if not 0.0 < self.gap < self.upper_max:
            raise ValueError("gap must be in (0, upper_max)")
        if not self.upper_min <= self.initial_upper <= self.upper_max:
            raise ValueError("initial_upper outside the controller bounds")

    @property
    def upper_min(self) -> float:
        return self.gap + 0.05

    def update(self, obs: VnfObservation) -> ThresholdPair:
        h = self.history.get(obs.f)
        if h is None:
            h = self.initial_upper
        else:
            h = integral_step(h, obs.u, self.setpoint, self.k_i)
        h = min(max(h, self.upper_min), self.upper_max)
        self.history[obs.f] = h
        return ThresholdPair(h, h - self.gap)

    def thresholds(self, observations: list[VnfObservation]) -> dict[int, ThresholdPair]:
        return {o.f: self.update(o) for o in observations}


def baseline_proportional(obs: VnfObservation, policy: ProportionalPolicy, n_running: int = 2) -> ScaleAction:
    return evaluate_thresholds(obs, policy.update(obs), n_running)


class AgentPolicy:
    """Greedy (no exploration) thresholds from a trained agent."""

    name = "ddpg"

    def __init__(self, agent):
        self.agent = agent

    def thresholds(self, observations: list[VnfObservation]) -> dict[int, ThresholdPair]:
        return {o.f: self.agent.act(self.agent.features(o), explore=False) for o in observations}
