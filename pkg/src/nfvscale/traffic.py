"""Seeded synthetic workloads: flat periodic, spiky periodic and aperiodic.

An aggregate rate curve is computed per VNF type and then realized as a set
of near-equal-rate flows. The number of concurrent flows at tick ``t`` is
``ceil(rate(t) / flow_rate_cap)``; each flow carries ``rate(t) / n(t)``, so the
sum over flows reproduces the curve tick by tick. Flows live in "slots" and
are cut into pieces of at most ``flow_duration`` ticks with a per-slot phase
offset, which staggers their arrivals.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .domain import FlowSpec, Protocol


class Pattern(enum.Enum):
    FLAT_PERIODIC = "flat_periodic"
    SPIKY_PERIODIC = "spiky_periodic"
    APERIODIC = "aperiodic"


PERIODIC_AMPLITUDE = 0.3
APERIODIC_CEILING = 4.0


@dataclass(frozen=True)
class TrafficScenario:
    pattern: Pattern
    horizon: int
    base_rate: float
    period: int
    spike_count: int = 0
    spike_magnitude: float = 1.0
    noise_level: float = 0.0
    seed: int = 0
    spike_width: int = 20
    spike_offsets: tuple[int, ...] | None = None
    walk_step: float = 0.1
    flow_rate_cap: float = 4.0
    flow_duration: int = 30
    vnf_types: tuple[int, ...] = (0,)
    tcp_fraction: float = 0.8

    def __post_init__(self):
        if not self.horizon >= self.period >= 1:
            raise ValueError(f"need horizon >= period >= 1, got {self.horizon}, {self.period}")
        if self.spike_magnitude < 1:
            raise ValueError("spike_magnitude must be >= 1")
        if not 0.0 <= self.noise_level < 1.0:
            raise ValueError("noise_level must be in [0, 1)")
        if self.base_rate < 0:
            raise ValueError("base_rate must be >= 0")
        if self.spike_count < 0 or self.spike_width < 1:
            raise ValueError("spike_count must be >= 0 and spike_width >= 1")
        if self.flow_rate_cap <= 0 or self.flow_duration < 1:
            raise ValueError("flow_rate_cap must be > 0 and flow_duration >= 1")
        if not self.vnf_types:
            raise ValueError("at least one vnf type is required")
        if self.spike_offsets is not None:
            if len(self.spike_offsets) != self.spike_count:
                raise ValueError("spike_offsets must have spike_count entries")
            for off in self.spike_offsets:
                if not 0 <= off <= self.horizon - self.spike_width:
                    raise ValueError(f"spike offset {off} does not fit in horizon")


def _rng(scn: TrafficScenario, vnf_type: int, stream: int) -> np.random.Generator:
    return np.random.default_rng([scn.seed, vnf_type, stream])


def _periodic_curve(scn: TrafficScenario) -> np.ndarray:
    # reduce the phase first so the curve repeats bit for bit
    phase = (np.arange(scn.horizon) % scn.period).astype(np.float64)
    return scn.base_rate * (1.0 + PERIODIC_AMPLITUDE * np.sin(2.0 * np.pi * phase / scn.period))


def spike_offsets(scn: TrafficScenario, vnf_type: int) -> list[int]:
    """Start ticks of the rectangular spikes, sorted and pairwise separated."""
    if scn.spike_offsets is not None:
        return sorted(scn.spike_offsets)
    if scn.spike_count == 0:
        return []
    # One spike per equal segment keeps spikes disjoint and non-adjacent.
    seg = scn.horizon // scn.spike_count
    if seg < scn.spike_width + 1:
        raise ValueError("horizon too short for the requested spikes")
    rng = _rng(scn, vnf_type, 1)
    return [k * seg + int(rng.integers(0, seg - scn.spike_width)) for k in range(scn.spike_count)]


def rate_curve(scn: TrafficScenario, vnf_type: int) -> np.ndarray:
    """Aggregate packets/tick for one VNF type over the horizon."""
    noise_rng = _rng(scn, vnf_type, 0)
    if scn.pattern is Pattern.APERIODIC:
        walk_rng = _rng(scn, vnf_type, 2)
        steps = walk_rng.standard_normal(scn.horizon) * scn.walk_step * scn.base_rate
        ceiling = APERIODIC_CEILING * scn.base_rate
        curve = np.empty(scn.horizon, dtype=np.float64)
        r = scn.base_rate
        for i in range(scn.horizon):
            curve[i] = r
            r = min(max(r + steps[i], 0.0), ceiling)
    else:
        curve = _periodic_curve(scn)

    if scn.noise_level > 0:
        u = noise_rng.uniform(-1.0, 1.0, scn.horizon)
        curve = curve * (1.0 + scn.noise_level * u)
    if scn.pattern is Pattern.APERIODIC:
        curve = np.clip(curve, 0.0, APERIODIC_CEILING * scn.base_rate)

    if scn.pattern is Pattern.SPIKY_PERIODIC:
        top = scn.spike_magnitude * scn.base_rate
        jitter = np.abs(noise_rng.uniform(-1.0, 1.0, scn.horizon)) * scn.noise_level
        for off in spike_offsets(scn, vnf_type):
            sl = slice(off, off + scn.spike_width)
            curve[sl] = np.maximum(curve[sl], top * (1.0 + jitter[sl]))
    return np.maximum(curve, 0.0)


def _flows_for_curve(
    curve: np.ndarray, scn: TrafficScenario, vnf_type: int
) -> list[tuple[int, int, list[float]]]:
    cap = scn.flow_rate_cap
    counts = np.where(curve > 0, np.maximum(1, np.ceil(curve / cap)), 0).astype(np.int64)
    n_slots = int(counts.max()) if len(counts) else 0
    out: list[tuple[int, int, list[float]]] = []
    for k in range(n_slots):
        phase = (k * scn.flow_duration) // max(n_slots, 1)
        start = None
        rates: list[float] = []
        for t in range(scn.horizon):
            active = k < counts[t]
            cut = start is not None and (t + phase) % scn.flow_duration == 0
            if start is not None and (not active or cut):
                out.append((start, k, rates))
                start, rates = None, []
            if active:
                if start is None:
                    start = t
                rates.append(float(curve[t] / counts[t]))
        if start is not None:
            out.append((start, k, rates))
    return out


def generate(scn: TrafficScenario) -> list[FlowSpec]:
    """Flows for every VNF type in ``scn``, ordered by (arrival, type, slot)."""
    raw = []
    for vt in scn.vnf_types:
        curve = rate_curve(scn, vt)
        for start, slot, rates in _flows_for_curve(curve, scn, vt):
            raw.append((start, vt, slot, rates))
    raw.sort(key=lambda r: (r[0], r[1], r[2]))
    proto_rng = np.random.default_rng([scn.seed, 99])
    draws = proto_rng.random(len(raw))
    flows = []
    for fid, ((start, vt, _slot, rates), d) in enumerate(zip(raw, draws)):
        proto = Protocol.TCP if d < scn.tcp_fraction else Protocol.UDP
        flows.append(FlowSpec(fid, vt, proto, start, len(rates), tuple(rates)))
    return flows


def aggregate_rate(flows: Iterable[FlowSpec], t: int) -> float:
    return sum(f.rate_at(t) for f in flows if f.active_at(t))


def aggregate_curve(flows: Sequence[FlowSpec], horizon: int, vnf_type: int | None = None) -> np.ndarray:
    """Aggregate rate at every tick, optionally restricted to one VNF type."""
    out = np.zeros(horizon, dtype=np.float64)
    for f in flows:
        if vnf_type is not None and f.vnf_type != vnf_type:
            continue
        stop = min(f.end_tick, horizon)
        if stop > f.arrival_tick:
            out[f.arrival_tick:stop] += f.rates[: stop - f.arrival_tick]
    return out


@dataclass
class FlowTable:
    """Column layout of a flow list used by the simulator's per-tick gather.

    ``pk_flat[offset[f] + (t - arrival[f])]`` is the number of packets flow
    ``f`` emits at tick ``t``.
    """

    arrival: np.ndarray
    end: np.ndarray
    vnf_type: np.ndarray
    offset: np.ndarray
    pk_flat: np.ndarray
    flows: list[FlowSpec] = field(repr=False, default_factory=list)

    @classmethod
    def build(cls, flows: Sequence[FlowSpec]) -> "FlowTable":
        for i, f in enumerate(flows):
            if f.flow_id != i:
                raise ValueError("flow ids must be dense and ordered 0..n-1")
        n = len(flows)
        arrival = np.fromiter((f.arrival_tick for f in flows), dtype=np.int64, count=n)
        end = np.fromiter((f.end_tick for f in flows), dtype=np.int64, count=n)
        vt = np.fromiter((f.vnf_type for f in flows), dtype=np.int64, count=n)
        lengths = end - arrival
        offset = np.zeros(n, dtype=np.int64)
        if n:
            offset[1:] = np.cumsum(lengths)[:-1]
        pk_flat = np.concatenate([f.packets() for f in flows]) if n else np.zeros(0, dtype=np.int64)
        return cls(arrival, end, vt, offset, pk_flat.astype(np.int64), list(flows))

    def total_packets(self, horizon: int) -> int:
        total = 0
        for f, off in zip(self.flows, self.offset):
            stop = min(f.end_tick, horizon) - f.arrival_tick
            if stop > 0:
                total += int(self.pk_flat[off:off + stop].sum())
        return total
