"""Value types shared by the simulator, the threshold agent and the scaling engine."""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

DEFAULT_MARGIN = 0.1
# Float slack for the margin rule; H - (H - margin) is not always >= margin in binary.
_MARGIN_SLACK = 1e-12


class ScaleAction(enum.IntEnum):
    SCALE_IN = 0
    SCALE_OUT = 1
    NOOP = 2

    @property
    def label(self) -> str:
        return {0: "scale_in", 1: "scale_out", 2: "noop"}[int(self)]


class Protocol(enum.Enum):
    TCP = "tcp"
    UDP = "udp"


@dataclass(frozen=True)
class VnfProfile:
    """Behavioural parameters of one VNF kind.

    ``base_capacity`` is the number of packets an instance serves per tick.
    ``per_packet_cost`` scales how much CPU a packet costs relative to that
    capacity, so two VNFs with equal throughput can report different
    utilization.
    """

    per_packet_cost: float
    max_queue_len: int
    base_capacity: int
    name: str = ""

    def __post_init__(self):
        if not self.per_packet_cost > 0:
            raise ValueError(f"per_packet_cost must be > 0, got {self.per_packet_cost}")
        if not self.base_capacity > 0:
            raise ValueError(f"base_capacity must be > 0, got {self.base_capacity}")
        if self.max_queue_len < 1:
            raise ValueError(f"max_queue_len must be >= 1, got {self.max_queue_len}")


@dataclass(frozen=True)
class VnfType:
    id: int
    profile: VnfProfile


def check_unique_types(types: Sequence[VnfType]) -> None:
    seen = set()
    for t in types:
        if t.id in seen:
            raise ValueError(f"duplicate VnfType id {t.id}")
        seen.add(t.id)


@dataclass(frozen=True)
class VnfObservation:
    """Per-VNF-type state sampled at a decision-cycle boundary.

    Counters ``s`` and ``l`` cover the elapsed cycle; ``m`` and ``q`` are
    instantaneous at ``tick``; ``u`` is the cycle-mean utilization.
    """

    f: int
    m: int
    s: int
    l: int
    q: int
    u: float
    a: ScaleAction
    tick: int

    def __post_init__(self):
        if not 0.0 <= self.u <= 1.0:
            raise ValueError(f"u must be in [0, 1], got {self.u}")
        for name in ("m", "s", "l", "q"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be >= 0")


@dataclass(frozen=True)
class ThresholdPair:
    upper: float
    lower: float


def validate_thresholds(tp: ThresholdPair, margin: float = DEFAULT_MARGIN) -> str | None:
    """Return ``None`` when ``tp`` is usable, else a message naming the broken rule."""
    if not 0.0 < tp.upper < 1.0:
        return f"upper {tp.upper} outside (0, 1)"
    if not 0.0 < tp.lower < 1.0:
        return f"lower {tp.lower} outside (0, 1)"
    if tp.lower >= tp.upper:
        return f"lower >= upper ({tp.lower} >= {tp.upper})"
    if tp.upper - tp.lower < margin - _MARGIN_SLACK:
        return f"margin: upper - lower = {tp.upper - tp.lower:.6g} < {margin}"
    return None


@dataclass(frozen=True)
class FlowSpec:
    """One traffic flow: fixed VNF type, staggered arrival, per-tick rate trajectory."""

    flow_id: int
    vnf_type: int
    protocol: Protocol
    arrival_tick: int
    duration: int
    rates: tuple[float, ...]

    def __post_init__(self):
        if self.duration < 1:
            raise ValueError("duration must be >= 1")
        if len(self.rates) != self.duration:
            raise ValueError("rates must have one entry per tick of duration")
        if any(r < 0 for r in self.rates):
            raise ValueError("rates must be >= 0")

    @property
    def end_tick(self) -> int:
        """First tick after the flow stops sending."""
        return self.arrival_tick + self.duration

    def active_at(self, t: int) -> bool:
        return self.arrival_tick <= t < self.end_tick

    def rate_at(self, t: int) -> float:
        if not self.active_at(t):
            return 0.0
        return self.rates[t - self.arrival_tick]

    def packets(self) -> np.ndarray:
        """Integer packets per tick; the floor of the cumulative rate, differenced."""
        cum = np.floor(np.cumsum(np.asarray(self.rates, dtype=np.float64)))
        return np.diff(cum, prepend=0.0).astype(np.int64)


@dataclass(frozen=True)
class EnergyRatioInputs:
    v_total: float
    n_run: int
    n_idle: int
    h: float
    t: int

    def __post_init__(self):
        if self.n_run < 0 or self.n_idle < 0:
            raise ValueError("n_run and n_idle must be >= 0")
        if not 0.0 < self.h < 1.0:
            raise ValueError(f"h must be in (0, 1), got {self.h}")
        if self.t < 1:
            raise ValueError("t must be >= 1")
        if self.v_total < 0:
            raise ValueError("v_total must be >= 0")


@dataclass
class ScaleDecision:
    vnf_type: int
    action: ScaleAction
    tick: int
    source: int | None = None
    target: int | None = None
    migration_plan: dict[int, int] = field(default_factory=dict)
    emergency: bool = False
    deferred: bool = False
    note: str = ""


@dataclass(frozen=True)
class NormalizationConstants:
    m: float
    s: float
    l: float
    q: float

    def __post_init__(self):
        for name in ("m", "s", "l", "q"):
            if not getattr(self, name) > 0:
                raise ValueError(f"normalization constant {name} must be > 0")


def feature_length(n_types: int) -> int:
    return n_types + 4 + 1 + len(ScaleAction)


def observation_to_feature_vector(
    obs: VnfObservation,
    norms: NormalizationConstants,
    type_ids: Sequence[int] | Mapping[int, int],
) -> np.ndarray:
    """Encode ``obs`` as [F one-hot | M S L Q scaled | U | A one-hot].

    ``type_ids`` lists the scenario's VNF type ids; its order fixes the
    one-hot layout.
    """
    ids = list(type_ids)
    try:
        slot = ids.index(obs.f)
    except ValueError:
        raise KeyError(f"unknown VnfType id {obs.f}") from None
    n = len(ids)
    vec = np.zeros(feature_length(n), dtype=np.float64)
    vec[slot] = 1.0
    vec[n + 0] = min(obs.m / norms.m, 1.0)
    vec[n + 1] = min(obs.s / norms.s, 1.0)
    vec[n + 2] = min(obs.l / norms.l, 1.0)
    vec[n + 3] = min(obs.q / norms.q, 1.0)
    vec[n + 4] = obs.u
    vec[n + 5 + int(obs.a)] = 1.0
    return vec
