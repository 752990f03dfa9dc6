"""Resource monitor and the emergency scale-out path.

The monitor looks at every tick but only raises an alarm when an instance
breaks the SLA for ``consecutive_ticks`` ticks in a row. Alarms bypass the
decision cycle: the emergency processor scales the VNF type out right away
and then ignores further alarms for that type for one cycle.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping

from .domain import ScaleDecision, ThresholdPair, VnfProfile
from .scaling import ScalingEngine
from .sim import TickReport


@dataclass(frozen=True)
class SlaPolicy:
    max_loss_rate: float = 0.1
    max_queue_frac: float = 0.9
    consecutive_ticks: int = 2

    def __post_init__(self):
        for name in ("max_loss_rate", "max_queue_frac"):
            v = getattr(self, name)
            if not 0.0 < v <= 1.0:
                raise ValueError(f"{name} must be in (0, 1], got {v}")
        if self.consecutive_ticks < 1:
            raise ValueError("consecutive_ticks must be >= 1")

    @classmethod
    def disabled(cls) -> "SlaPolicy":
        return cls(1.0, 1.0, 1)


@dataclass(frozen=True)
class Alarm:
    tick: int
    vnf_type: int
    vm_id: int
    cause: str
    breach_tick: int


@dataclass
class Monitor:
    policy: SlaPolicy
    profiles: Mapping[int, VnfProfile]
    _streak: dict[int, int] = field(default_factory=dict)
    _since: dict[int, int] = field(default_factory=dict)

    def _cause(self, row) -> str | None:
        loss = row.l / row.arrivals if row.arrivals else 0.0
        if loss > self.policy.max_loss_rate:
            return f"loss_rate={loss:.3f}"
        cap = self.profiles[row.vnf_type].max_queue_len
        if row.q > self.policy.max_queue_frac * cap:
            return f"queue={row.q}/{cap}"
        return None

    def monitor_tick(self, report: TickReport) -> list[Alarm]:
        """Alarms raised by this tick, at most one per VNF type; empty means normal."""
        alarms: dict[int, Alarm] = {}
        seen = set()
        for row in report.instances:
            seen.add(row.vm_id)
            cause = self._cause(row)
            if cause is None:
                self._streak.pop(row.vm_id, None)
                self._since.pop(row.vm_id, None)
                continue
            n = self._streak.get(row.vm_id, 0) + 1
            self._streak[row.vm_id] = n
            self._since.setdefault(row.vm_id, report.tick)
            if n >= self.policy.consecutive_ticks and row.vnf_type not in alarms:
                alarms[row.vnf_type] = Alarm(report.tick, row.vnf_type, row.vm_id, cause, self._since[row.vm_id])
        for vm in list(self._streak):
            if vm not in seen:
                del self._streak[vm]
                self._since.pop(vm, None)
        return [alarms[k] for k in sorted(alarms)]


def monitor_tick(report: TickReport, policy: SlaPolicy, profiles: Mapping[int, VnfProfile],
                 monitor: Monitor | None = None) -> list[Alarm]:
    """Functional entry point; pass the same ``monitor`` across ticks to debounce."""
    mon = monitor if monitor is not None else Monitor(policy, profiles)
    return mon.monitor_tick(report)


@dataclass
class AlarmRecord:
    tick: int
    breach_tick: int
    vnf_type: int
    vm_id: int
    cause: str
    action: str


class EmergencyProcessor:
    def __init__(self, engine: ScalingEngine, cycle_len: int):
        self.engine = engine
        self.cycle_len = cycle_len
        self.cooldown_until: dict[int, int] = {}
        self.records: list[AlarmRecord] = []

    def emergency_scale(self, alarm: Alarm, tp: ThresholdPair) -> ScaleDecision | None:
        """Scale the alarmed type out now; ``None`` when still cooling down."""
        if alarm.tick < self.cooldown_until.get(alarm.vnf_type, -1):
            self.records.append(AlarmRecord(alarm.tick, alarm.breach_tick, alarm.vnf_type, alarm.vm_id,
                                            alarm.cause, "suppressed"))
            return None
        self.cooldown_until[alarm.vnf_type] = alarm.tick + self.cycle_len
        d = self.engine.scale_out(alarm.vnf_type, alarm.vm_id, tp, alarm.tick, emergency=True)
        taken = "scale_out" + (" (deferred)" if d.deferred else "")
        self.records.append(AlarmRecord(alarm.tick, alarm.breach_tick, alarm.vnf_type, alarm.vm_id,
                                        alarm.cause, taken))
        return d
