"""Tick-based plant: VM lifecycle, per-instance packet queues, flow migration.

One tick is one simulated second. Every tick, in order:

1. flows whose arrival tick has come are routed to the least-loaded running
   instance of their type;
2. each active flow emits its packets for the tick; packets of a flow under
   migration are held at the destination, everything else joins the home
   instance's FIFO;
3. each instance serves up to ``base_capacity`` packets from its FIFO head and
   tail-drops whatever exceeds ``max_queue_len`` (held packets share that
   budget);
4. migrations, boots and drains advance; finished flows are retired.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from .domain import FlowSpec, ScaleAction, VnfObservation, VnfProfile
from .kernels import PacketQueue
from .traffic import FlowTable


class SimError(Exception):
    pass


class PoolExhausted(SimError):
    pass


class RoutingError(SimError):
    pass


class MigrationError(SimError):
    pass


class VmState(enum.Enum):
    OFF = "off"
    BOOTING = "booting"
    IDLE = "idle"
    RUNNING = "running"
    DRAINING = "draining"


POWERED_ON = (VmState.BOOTING, VmState.IDLE, VmState.RUNNING, VmState.DRAINING)


@dataclass
class VmSlot:
    vm_id: int
    location: tuple[int, int]
    state: VmState = VmState.OFF
    boot_remaining: int = 0
    vnf_type: int | None = None
    enqueued_at: int = -1


def distance(a: tuple[int, int], b: tuple[int, int]) -> int:
    """Hop count between two (rack, host) coordinates."""
    return abs(a[0] - b[0]) + abs(a[1] - b[1])


@dataclass
class WindowStats:
    processed: int = 0
    dropped: int = 0
    arrivals: int = 0
    util_sum: float = 0.0
    queue_sum: int = 0
    ticks: int = 0


class VnfInstance:
    def __init__(self, vm_id: int, vnf_type: int, profile: VnfProfile):
        self.vm_id = vm_id
        self.vnf_type = vnf_type
        self.profile = profile
        self.queue = PacketQueue(profile.max_queue_len)
        self.active_flows: set[int] = set()
        self.held = 0
        self.cpu_util = 0.0
        self.window = WindowStats()

    @property
    def queue_len(self) -> int:
        return len(self.queue) + self.held


@dataclass
class MigrationJob:
    flow_id: int
    src: int
    dst: int
    remaining: int
    held: list[tuple[int, int]] = field(default_factory=list)


@dataclass(frozen=True)
class SimConfig:
    pool_size: int = 12
    boot_delay: int = 30
    base_migration_ticks: int = 1
    per_hop_ticks: int = 1
    hosts_per_rack: int = 4

    def __post_init__(self):
        if self.pool_size < 1:
            raise ValueError("pool_size must be >= 1")
        if self.boot_delay < 0 or self.base_migration_ticks < 0 or self.per_hop_ticks < 0:
            raise ValueError("delays must be >= 0")
        if self.hosts_per_rack < 1:
            raise ValueError("hosts_per_rack must be >= 1")


@dataclass(frozen=True)
class InstanceTick:
    vm_id: int
    vnf_type: int
    s: int
    l: int
    q: int
    u: float
    arrivals: int


@dataclass
class TickReport:
    tick: int
    instances: list[InstanceTick]
    generated: int = 0
    latency_sum: int = 0
    completed: list[tuple[int, int]] = field(default_factory=list)
    booted: list[int] = field(default_factory=list)
    drained: list[int] = field(default_factory=list)
    migrated: list[int] = field(default_factory=list)


@dataclass(frozen=True)
class InstanceWindow:
    vm_id: int
    vnf_type: int
    processed: int
    dropped: int
    mean_queue: float
    mean_util: float
    ticks: int
    running: bool


@dataclass(frozen=True)
class CycleWindow:
    start: int
    end: int
    instances: tuple[InstanceWindow, ...]

    @property
    def length(self) -> int:
        return self.end - self.start

    @property
    def processed(self) -> int:
        return sum(i.processed for i in self.instances)


class World:
    """The simulated data plane. Mutated only through its methods, one caller at a time."""

    def __init__(self, profiles: Mapping[int, VnfProfile], flows: Sequence[FlowSpec], cfg: SimConfig):
        self.profiles = dict(profiles)
        self.cfg = cfg
        self.table = FlowTable.build(flows)
        for f in flows:
            if f.vnf_type not in self.profiles:
                raise ValueError(f"flow {f.flow_id} has unknown vnf type {f.vnf_type}")
        n = len(flows)
        self.flows = self.table.flows
        self.outstanding = np.zeros(n, dtype=np.int64)
        self.route = np.full(n, -1, dtype=np.int64)
        self.migrations: dict[int, MigrationJob] = {}
        self._active: set[int] = set()
        self._active_arr = np.zeros(0, dtype=np.int64)
        self._active_dirty = False
        self._pending_completion: set[int] = set()
        self._arrival_order = np.argsort(self.table.arrival, kind="stable")
        self._next_arrival = 0
        self._by_end: dict[int, list[int]] = {}
        for f in flows:
            self._by_end.setdefault(f.end_tick, []).append(f.flow_id)
        hpr = cfg.hosts_per_rack
        self.vms = [VmSlot(i, (i // hpr, i % hpr)) for i in range(cfg.pool_size)]
        self.instances: dict[int, VnfInstance] = {}
        self.tick = 0
        self.window_start = 0
        self._retired: list[InstanceWindow] = []
        self.generated = 0
        self.processed = 0
        self.dropped = 0
        self.latency_sum = 0
        self.vm_ticks = 0
        self.peak_vms = 0
        self.completions: list[tuple[int, int]] = []

    # ---- VM lifecycle -------------------------------------------------

    def powered_on(self) -> int:
        return sum(1 for vm in self.vms if vm.state in POWERED_ON)

    def _note_peak(self) -> None:
        self.peak_vms = max(self.peak_vms, self.powered_on())

    def _pick_off_vm(self, location_hint: tuple[int, int] | None) -> VmSlot:
        off = [vm for vm in self.vms if vm.state is VmState.OFF]
        if not off:
            raise PoolExhausted(f"all {len(self.vms)} VMs are powered on")
        if location_hint is None:
            return off[0]
        return min(off, key=lambda vm: (distance(vm.location, location_hint), vm.vm_id))

    def boot_vm(self, location_hint: tuple[int, int] | None = None, ready_now: bool = False) -> int:
        """Power on an off VM; ``ready_now`` skips the boot delay (initial reserve)."""
        vm = self._pick_off_vm(location_hint)
        if self.cfg.boot_delay == 0 or ready_now:
            vm.state = VmState.IDLE
            vm.enqueued_at = self.tick
        else:
            vm.state = VmState.BOOTING
            vm.boot_remaining = self.cfg.boot_delay
        self._note_peak()
        return vm.vm_id

    def deploy(self, vnf_type: int, vm_id: int | None = None) -> int:
        """Bring an instance up at once, bypassing boot delay (initial placement)."""
        vm = self.vms[vm_id] if vm_id is not None else self._pick_off_vm(None)
        if vm.state is not VmState.OFF:
            raise SimError(f"vm {vm.vm_id} is not off")
        vm.state = VmState.IDLE
        self.activate(vm.vm_id, vnf_type)
        return vm.vm_id

    def activate(self, vm_id: int, vnf_type: int) -> VnfInstance:
        vm = self.vms[vm_id]
        if vm.state is not VmState.IDLE:
            raise SimError(f"vm {vm_id} is {vm.state.value}, not idle")
        if vnf_type not in self.profiles:
            raise KeyError(f"unknown vnf type {vnf_type}")
        vm.state = VmState.RUNNING
        vm.vnf_type = vnf_type
        vm.enqueued_at = -1
        inst = VnfInstance(vm_id, vnf_type, self.profiles[vnf_type])
        self.instances[vm_id] = inst
        self._note_peak()
        return inst

    def power_off(self, vm_id: int) -> None:
        vm = self.vms[vm_id]
        if vm.state is not VmState.IDLE:
            raise SimError(f"vm {vm_id} is {vm.state.value}; only idle VMs power off")
        vm.state = VmState.OFF
        vm.enqueued_at = -1

    def start_draining(self, vm_id: int) -> None:
        vm = self.vms[vm_id]
        if vm.state is not VmState.RUNNING:
            raise SimError(f"vm {vm_id} is not running")
        vm.state = VmState.DRAINING

    # ---- queries ----------------------------------------------------------

    def running_instances(self, vnf_type: int | None = None, include_draining: bool = False) -> list[VnfInstance]:
        ok = (VmState.RUNNING, VmState.DRAINING) if include_draining else (VmState.RUNNING,)
        return [
            inst
            for vm_id, inst in sorted(self.instances.items())
            if self.vms[vm_id].state in ok and (vnf_type is None or inst.vnf_type == vnf_type)
        ]

    def flow_rate(self, flow_id: int, t: int | None = None) -> float:
        return self.flows[flow_id].rate_at(self.tick if t is None else t)

    def instance_rate(self, vm_id: int, t: int | None = None) -> float:
        """Packets/tick the instance will be offered: its own flows plus inbound migrations."""
        inst = self.instances[vm_id]
        total = 0.0
        for f in inst.active_flows:
            job = self.migrations.get(f)
            if job is None or job.dst == vm_id:
                total += self.flow_rate(f, t)
        for f, job in self.migrations.items():
            if job.dst == vm_id and f not in inst.active_flows:
                total += self.flow_rate(f, t)
        return total

    def projected_util(self, vm_id: int, extra_rate: float = 0.0, t: int | None = None) -> float:
        inst = self.instances[vm_id]
        p = inst.profile
        return min(1.0, (self.instance_rate(vm_id, t) + extra_rate) * p.per_packet_cost / p.base_capacity)

    def migrating_touching(self, vm_id: int) -> bool:
        return any(job.src == vm_id or job.dst == vm_id for job in self.migrations.values())

    def residual_queue(self) -> int:
        return sum(inst.queue_len for inst in self.instances.values())

    def is_routing_total(self) -> bool:
        for f in self._active:
            home = int(self.route[f])
            if f in self.migrations:
                if self.vms[self.migrations[f].dst].state is not VmState.RUNNING:
                    return False
            elif home not in self.instances or f not in self.instances[home].active_flows:
                return False
        return True

    # ---- migration ----------------------------------------------------------

    def start_migration(self, flow_id: int, src: int, dst: int) -> MigrationJob:
        if flow_id in self.migrations:
            raise MigrationError(f"flow {flow_id} is already migrating")
        if flow_id not in self._active or int(self.route[flow_id]) != src:
            raise MigrationError(f"flow {flow_id} is not active at instance {src}")
        if dst not in self.instances or self.vms[dst].state is not VmState.RUNNING:
            raise MigrationError(f"destination {dst} is not a running instance")
        if src == dst:
            raise MigrationError("source and destination are the same instance")
        if self.instances[src].vnf_type != self.instances[dst].vnf_type:
            raise MigrationError("source and destination run different VNF types")
        remaining = self.cfg.base_migration_ticks + self.cfg.per_hop_ticks * distance(
            self.vms[src].location, self.vms[dst].location
        )
        job = MigrationJob(flow_id, src, dst, remaining)
        self.migrations[flow_id] = job
        if remaining == 0:
            self._finish_migration(job)
        return job

    def _finish_migration(self, job: MigrationJob) -> None:
        f = job.flow_id
        del self.migrations[f]
        src = self.instances[job.src]
        dst = self.instances[job.dst]
        src.active_flows.discard(f)
        if f in self._active:
            dst.active_flows.add(f)
        self.route[f] = job.dst
        for tick, count in job.held:
            dst.queue.push(tick, f, count)
            dst.held -= count
        job.held.clear()

    # ---- stepping -----------------------------------------------------------

    def _route_new_flow(self, f: int) -> None:
        vt = int(self.table.vnf_type[f])
        cands = self.running_instances(vt)
        if not cands:
            raise RoutingError(f"no running instance of type {vt} for flow {f}")
        best = min(cands, key=lambda inst: (self.projected_util(inst.vm_id), inst.vm_id))
        best.active_flows.add(f)
        self.route[f] = best.vm_id
        self._active.add(f)
        self._active_dirty = True

    def step(self) -> TickReport:
        t = self.tick
        table = self.table
        order = self._arrival_order
        while self._next_arrival < len(order) and table.arrival[order[self._next_arrival]] <= t:
            f = int(order[self._next_arrival])
            self._next_arrival += 1
            if table.arrival[f] == t:
                self._route_new_flow(f)

        if self._active_dirty:
            self._active_arr = np.fromiter(sorted(self._active), dtype=np.int64, count=len(self._active))
            self._active_dirty = False
        act = self._active_arr
        pk = table.pk_flat[table.offset[act] + (t - table.arrival[act])]
        gen = int(pk.sum())
        self.generated += gen
        self.outstanding[act] += pk

        held_in: dict[int, list[tuple[int, int]]] = {}
        if self.migrations:
            mask = np.ones(len(act), dtype=bool)
            for i, f in enumerate(act.tolist()):
                job = self.migrations.get(f)
                if job is not None:
                    mask[i] = False
                    if pk[i] > 0:
                        held_in.setdefault(job.dst, []).append((f, int(pk[i])))
            fifo_flows, fifo_pk = act[mask], pk[mask]
        else:
            fifo_flows, fifo_pk = act, pk
        dest = self.route[fifo_flows]
        srt = np.argsort(dest, kind="stable")
        dest_s = dest[srt]
        flows_s = np.ascontiguousarray(fifo_flows[srt])
        pk_s = np.ascontiguousarray(fifo_pk[srt])

        report = TickReport(t, [], generated=gen)
        for vm_id in sorted(self.instances):
            inst = self.instances[vm_id]
            prof = inst.profile
            lo = np.searchsorted(dest_s, vm_id, "left")
            hi = np.searchsorted(dest_s, vm_id, "right")
            arrivals = int(pk_s[lo:hi].sum())
            served, dropped, lat = inst.queue.serve(
                t, flows_s[lo:hi], pk_s[lo:hi], prof.base_capacity,
                prof.max_queue_len - inst.held, self.outstanding,
            )
            for f, c in held_in.get(vm_id, ()):
                arrivals += c
                space = prof.max_queue_len - len(inst.queue) - inst.held
                take = min(max(space, 0), c)
                if take:
                    self.migrations[f].held.append((t, take))
                    inst.held += take
                if c - take:
                    dropped += c - take
                    self.outstanding[f] -= c - take
            u = min(1.0, arrivals * prof.per_packet_cost / prof.base_capacity)
            inst.cpu_util = u
            q = inst.queue_len
            w = inst.window
            w.processed += served
            w.dropped += dropped
            w.arrivals += arrivals
            w.util_sum += u
            w.queue_sum += q
            w.ticks += 1
            self.processed += served
            self.dropped += dropped
            self.latency_sum += lat
            report.latency_sum += lat
            report.instances.append(InstanceTick(vm_id, inst.vnf_type, served, dropped, q, u, arrivals))

        for f in list(self.migrations):
            job = self.migrations[f]
            job.remaining -= 1
            if job.remaining <= 0:
                self._finish_migration(job)
                report.migrated.append(f)

        for f in self._by_end.get(t + 1, ()):
            if f not in self._active:
                continue
            self._active.discard(f)
            self._active_dirty = True
            if f not in self.migrations:
                self.instances[int(self.route[f])].active_flows.discard(f)
            self._pending_completion.add(f)
        if self._pending_completion:
            done = [f for f in self._pending_completion if self.outstanding[f] == 0 and f not in self.migrations]
            for f in sorted(done):
                self._pending_completion.discard(f)
                ct = t - int(table.arrival[f]) + 1
                self.completions.append((f, ct))
                report.completed.append((f, ct))

        for vm in self.vms:
            if vm.state is VmState.BOOTING:
                vm.boot_remaining -= 1
                if vm.boot_remaining <= 0:
                    vm.state = VmState.IDLE
                    vm.enqueued_at = t + 1
                    report.booted.append(vm.vm_id)
            elif vm.state is VmState.DRAINING:
                inst = self.instances[vm.vm_id]
                if not inst.active_flows and inst.queue_len == 0 and not self.migrating_touching(vm.vm_id):
                    self.retire(inst, t + 1)
                    report.drained.append(vm.vm_id)

        self.vm_ticks += self.powered_on()
        self._note_peak()
        self.tick = t + 1
        return report

    def retire(self, inst: VnfInstance, tick: int) -> None:
        vm = self.vms[inst.vm_id]
        self._retired.append(_instance_window(inst, running=False))
        del self.instances[inst.vm_id]
        vm.state = VmState.IDLE
        vm.vnf_type = None
        vm.enqueued_at = tick

    def close_window(self) -> CycleWindow:
        """Per-instance aggregates since the previous call; resets the accumulators."""
        rows = list(self._retired)
        for vm_id in sorted(self.instances):
            inst = self.instances[vm_id]
            rows.append(_instance_window(inst, running=self.vms[vm_id].state is VmState.RUNNING))
            inst.window = WindowStats()
        self._retired = []
        win = CycleWindow(self.window_start, self.tick, tuple(rows))
        self.window_start = self.tick
        return win


def _instance_window(inst: VnfInstance, running: bool) -> InstanceWindow:
    w = inst.window
    n = max(w.ticks, 1)
    return InstanceWindow(
        inst.vm_id, inst.vnf_type, w.processed, w.dropped, w.queue_sum / n, w.util_sum / n, w.ticks, running
    )


def snapshot_observations(
    world: World,
    window: CycleWindow,
    last_actions: Mapping[int, ScaleAction] | None = None,
) -> list[VnfObservation]:
    """One observation per VNF type for an elapsed window.

    S and L sum over every instance of the type that served during the
    window, including ones drained away mid-cycle. U is the mean of the
    window-mean utilization of the type's running instances; M and Q are
    summed over the type's current instances at the boundary.
    """
    last_actions = last_actions or {}
    out = []
    for vt in sorted(world.profiles):
        rows = [r for r in window.instances if r.vnf_type == vt]
        run = [r for r in rows if r.running]
        insts = world.running_instances(vt, include_draining=True)
        u = float(np.mean([r.mean_util for r in run])) if run else 0.0
        out.append(
            VnfObservation(
                f=vt,
                m=sum(len(i.active_flows) for i in insts),
                s=sum(r.processed for r in rows),
                l=sum(r.dropped for r in rows),
                q=sum(i.queue_len for i in insts),
                u=min(max(u, 0.0), 1.0),
                a=last_actions.get(vt, ScaleAction.NOOP),
                tick=window.end,
            )
        )
    return out
