"""Closed control loop: simulator + scaling engine + monitor, one cycle at a time."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping, Sequence

from .domain import FlowSpec, ScaleAction, ScaleDecision, ThresholdPair, VnfObservation, VnfProfile
from .monitor import EmergencyProcessor, Monitor, SlaPolicy
from .scaling import EnergyConfig, ScalingEngine
from .sim import CycleWindow, InstanceTick, SimConfig, World, snapshot_observations


@dataclass(frozen=True)
class EnvSettings:
    profiles: Mapping[int, VnfProfile]
    sim: SimConfig = SimConfig()
    cycle_len: int = 60
    horizon: int = 3600
    sla: SlaPolicy = SlaPolicy()
    ep_enabled: bool = True
    energy: EnergyConfig = EnergyConfig()
    initial_instances: int = 1
    initial_idle: int = 0
    record_ticks: bool = False

    def __post_init__(self):
        if self.cycle_len < 1 or self.horizon < 0:
            raise ValueError("cycle_len must be >= 1 and horizon >= 0")
        if self.initial_instances < 1 or self.initial_idle < 0:
            raise ValueError("need initial_instances >= 1 and initial_idle >= 0")
        if self.initial_instances * len(self.profiles) + self.initial_idle > self.sim.pool_size:
            raise ValueError("initial deployment does not fit in the VM pool")


@dataclass
class CycleOutcome:
    window: CycleWindow
    observations: list[VnfObservation]
    emergency: list[ScaleDecision] = field(default_factory=list)


class ScalingEnv:
    """The environment the threshold policy controls.

    ``decide`` applies one set of thresholds at a cycle boundary; ``advance``
    then runs ticks up to the next boundary, handling boots, drains and
    emergency scale-outs as they happen.
    """

    def __init__(self, settings: EnvSettings, flows: Sequence[FlowSpec]):
        self.settings = settings
        self.flows = list(flows)
        self.reset()

    def reset(self) -> list[VnfObservation]:
        s = self.settings
        self.world = World(s.profiles, self.flows, s.sim)
        for vt in sorted(s.profiles):
            for _ in range(s.initial_instances):
                self.world.deploy(vt)
        for _ in range(s.initial_idle):
            self.world.boot_vm(ready_now=True)
        self.engine = ScalingEngine(self.world, s.energy)
        self.monitor = Monitor(s.sla, s.profiles)
        self.ep = EmergencyProcessor(self.engine, s.cycle_len)
        self.last_actions: dict[int, ScaleAction] = {vt: ScaleAction.NOOP for vt in s.profiles}
        self.thresholds: dict[int, ThresholdPair] = {}
        self.tick_rows: list[tuple[int, InstanceTick]] = []
        self.observations = snapshot_observations(self.world, self.world.close_window(), self.last_actions)
        self.window: CycleWindow | None = None
        return self.observations

    @property
    def tick(self) -> int:
        return self.world.tick

    @property
    def done(self) -> bool:
        return self.world.tick >= self.settings.horizon

    @property
    def type_ids(self) -> list[int]:
        return sorted(self.settings.profiles)

    def decide(self, thresholds: Mapping[int, ThresholdPair]) -> list[ScaleDecision]:
        self.thresholds = dict(thresholds)
        window = self.window if self.window is not None else CycleWindow(self.tick, self.tick, ())
        decisions = self.engine.cycle_decisions(self.observations, self.thresholds, window, self.tick)
        for d in decisions:
            self.last_actions[d.vnf_type] = d.action
        return decisions

    def advance(self) -> CycleOutcome:
        s = self.settings
        stop = min(self.tick + s.cycle_len, s.horizon)
        emergency: list[ScaleDecision] = []
        while self.world.tick < stop:
            report = self.world.step()
            if s.record_ticks:
                self.tick_rows.extend((report.tick, row) for row in report.instances)
            self.engine.after_step(report, self.thresholds)
            if s.ep_enabled:
                for alarm in self.monitor.monitor_tick(report):
                    d = self.ep.emergency_scale(alarm, self.thresholds[alarm.vnf_type])
                    if d is not None:
                        emergency.append(d)
                        self.last_actions[alarm.vnf_type] = ScaleAction.SCALE_OUT
        self.window = self.world.close_window()
        self.observations = snapshot_observations(self.world, self.window, self.last_actions)
        return CycleOutcome(self.window, self.observations, emergency)

    def instance_aggregates(self, window: CycleWindow, vnf_type: int) -> list[tuple[float, float, float]]:
        """``(processed, dropped, mean queue)`` per instance of ``vnf_type`` in ``window``."""
        return [(r.processed, r.dropped, r.mean_queue) for r in window.instances if r.vnf_type == vnf_type]
