"""Auto-scaling engine: threshold comparison, VM buffer queues and idle-pool sizing.

VMs, not VNF instances, are kept in reserve: an idle VM can be handed to any
VNF type on scale-out, and scaled-in instances go back to the idle queue
rather than being powered off. The idle pool is resized once per decision
cycle from the measured energy-efficiency ratio.
"""

from __future__ import annotations

import logging
import math
from collections import deque
from dataclasses import dataclass, field
from typing import Mapping

from .domain import (
    EnergyRatioInputs,
    ScaleAction,
    ScaleDecision,
    ThresholdPair,
    VnfObservation,
)
from .sim import CycleWindow, PoolExhausted, TickReport, VmState, World, distance

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class EnergyConfig:
    gamma_star: float = 8.0

    def __post_init__(self):
        if not self.gamma_star > 0:
            raise ValueError("gamma_star must be > 0")


@dataclass
class BufferQueues:
    """Running set plus the idle FIFO, oldest VM at the head."""

    running: set[int] = field(default_factory=set)
    idle: deque[tuple[int, int]] = field(default_factory=deque)

    @property
    def n_run(self) -> int:
        return len(self.running)

    @property
    def n_idle(self) -> int:
        return len(self.idle)

    @property
    def n(self) -> int:
        return self.n_run + self.n_idle

    def idle_ids(self) -> list[int]:
        return [vm for vm, _ in self.idle]

    def enqueue_idle(self, vm_id: int, tick: int) -> None:
        if self.idle and tick < self.idle[-1][1]:
            raise ValueError("idle queue must stay ordered by enqueue tick")
        if vm_id in self.running or vm_id in self.idle_ids():
            raise ValueError(f"vm {vm_id} already tracked")
        self.idle.append((vm_id, tick))

    def remove_idle(self, vm_id: int) -> None:
        for i, (vm, _) in enumerate(self.idle):
            if vm == vm_id:
                del self.idle[i]
                return
        raise KeyError(vm_id)


def check_partition(world: World, queues: BufferQueues) -> list[str]:
    """Problems with the running/idle bookkeeping; empty when consistent."""
    problems = []
    on_run = {vm.vm_id for vm in world.vms if vm.state in (VmState.RUNNING, VmState.DRAINING)}
    on_idle = {vm.vm_id for vm in world.vms if vm.state is VmState.IDLE}
    idle = queues.idle_ids()
    if queues.running != on_run:
        problems.append(f"running set {sorted(queues.running)} != running VMs {sorted(on_run)}")
    if set(idle) != on_idle:
        problems.append(f"idle queue {idle} != idle VMs {sorted(on_idle)}")
    if len(set(idle)) != len(idle):
        problems.append("idle queue holds duplicates")
    if queues.running & set(idle):
        problems.append("running and idle overlap")
    ticks = [t for _, t in queues.idle]
    if any(a > b for a, b in zip(ticks, ticks[1:])):
        problems.append(f"idle queue out of order: {ticks}")
    if queues.n != len(on_run) + len(on_idle):
        problems.append("N != N_run + N_idle")
    return problems


def evaluate_thresholds(obs: VnfObservation, tp: ThresholdPair, n_running: int) -> ScaleAction:
    if obs.u > tp.upper:
        return ScaleAction.SCALE_OUT
    if obs.u < tp.lower and n_running >= 2:
        return ScaleAction.SCALE_IN
    return ScaleAction.NOOP


def compute_energy_ratio(inp: EnergyRatioInputs) -> float:
    """Processed volume over the capacity ``H*T`` of every powered-on VM."""
    n = inp.n_run + inp.n_idle
    if n == 0:
        raise ValueError("energy ratio undefined with no running or idle VMs")
    return inp.v_total / (n * inp.h * inp.t)


def tuned_idle_real(gamma_run: float, gamma_star: float, n_run: int, n_idle: int) -> float:
    if not gamma_star > 0:
        raise ValueError("gamma_star must be > 0")
    return (gamma_run * (n_run + n_idle) - gamma_star * n_run) / gamma_star


def round_half_up(x: float) -> int:
    return int(math.floor(x + 0.5))


def compute_tuned_idle(gamma_run: float, gamma_star: float, n_run: int, n_idle: int) -> int:
    return max(0, round_half_up(tuned_idle_real(gamma_run, gamma_star, n_run, n_idle)))


@dataclass
class DecisionRecord:
    tick: int
    vnf_type: int | None
    action: str
    source: int | None = None
    target: int | None = None
    migrated: tuple[int, ...] = ()
    n_run: int = 0
    n_idle: int = 0
    gamma_run: float | None = None
    n_idle_star: int | None = None
    emergency: bool = False
    deferred: bool = False
    note: str = ""


class ScalingEngine:
    """Sole mutator of the buffer queues; turns threshold verdicts into VM moves."""

    def __init__(self, world: World, energy: EnergyConfig | None = None):
        self.world = world
        self.energy = energy or EnergyConfig()
        self.queues = BufferQueues()
        for vm in world.vms:
            if vm.state in (VmState.RUNNING, VmState.DRAINING):
                self.queues.running.add(vm.vm_id)
        for vm in sorted(
            (v for v in world.vms if v.state is VmState.IDLE), key=lambda v: (v.enqueued_at, v.vm_id)
        ):
            self.queues.enqueue_idle(vm.vm_id, vm.enqueued_at)
        # booting vm -> (vnf_type, source vm) for scale-outs waiting on a boot
        self.pending: dict[int, tuple[int, int]] = {}
        self.records: list[DecisionRecord] = []
        self.last_gamma: float | None = None
        self.last_target: int | None = None

    # ---- bookkeeping ------------------------------------------------------

    def _record(self, d: ScaleDecision) -> None:
        self.records.append(
            DecisionRecord(
                tick=d.tick,
                vnf_type=d.vnf_type,
                action=d.action.label,
                source=d.source,
                target=d.target,
                migrated=tuple(sorted(d.migration_plan)),
                n_run=self.queues.n_run,
                n_idle=self.queues.n_idle,
                emergency=d.emergency,
                deferred=d.deferred,
                note=d.note,
            )
        )

    def boot_idle(self, location_hint=None) -> int:
        return self.world.boot_vm(location_hint)

    def _take_idle(self, vm_id: int, vnf_type: int) -> None:
        self.queues.remove_idle(vm_id)
        self.world.activate(vm_id, vnf_type)
        self.queues.running.add(vm_id)

    def after_step(self, report: TickReport, thresholds: Mapping[int, ThresholdPair]) -> list[ScaleDecision]:
        """Fold boots and drains from one tick back into the queues."""
        out = []
        for vm_id in report.drained:
            self.queues.running.discard(vm_id)
            self.queues.enqueue_idle(vm_id, self.world.vms[vm_id].enqueued_at)
        for vm_id in report.booted:
            self.queues.enqueue_idle(vm_id, self.world.vms[vm_id].enqueued_at)
            if vm_id in self.pending:
                vt, src = self.pending.pop(vm_id)
                out.append(self._complete_deferred(vm_id, vt, src, thresholds[vt], report.tick + 1))
        return out

    def _complete_deferred(self, vm_id: int, vt: int, src: int, tp: ThresholdPair, tick: int) -> ScaleDecision:
        self._take_idle(vm_id, vt)
        inst = self.world.instances.get(src)
        if inst is None or self.world.vms[src].state is not VmState.RUNNING:
            cands = [i for i in self.world.running_instances(vt) if i.vm_id != vm_id]
            src = max(cands, key=lambda i: (self.world.projected_util(i.vm_id), -i.vm_id)).vm_id
        plan = self._offload_plan(src, vm_id, tp)
        d = ScaleDecision(vt, ScaleAction.SCALE_OUT, tick, source=src, target=vm_id,
                          migration_plan=plan, note="deferred boot completed")
        self._record(d)
        return d

    # ---- scale out ----------------------------------------------------------

    def _raw_util(self, vm_id: int, rate: float) -> float:
        p = self.world.instances[vm_id].profile
        return rate * p.per_packet_cost / p.base_capacity

    def _movable_flows(self, vm_id: int) -> list[int]:
        w = self.world
        flows = [f for f in w.instances[vm_id].active_flows if f not in w.migrations]
        return sorted(flows, key=lambda f: (-w.flow_rate(f), f))

    def _offload_plan(self, src: int, dst: int, tp: ThresholdPair) -> dict[int, int]:
        """Move the largest flows off ``src`` until it sits at the threshold midpoint."""
        w = self.world
        target = (tp.upper + tp.lower) / 2.0
        util = self._raw_util(src, w.instance_rate(src))
        plan = {}
        for f in self._movable_flows(src):
            if util <= target:
                break
            w.start_migration(f, src, dst)
            plan[f] = dst
            util -= self._raw_util(src, w.flow_rate(f))
        return plan

    def pick_idle(self, near: tuple[int, int]) -> int | None:
        """Closest idle VM; ties go to the most recently enqueued, then lowest id."""
        if not self.queues.idle:
            return None
        locs = self.world.vms
        best = min(self.queues.idle, key=lambda e: (distance(locs[e[0]].location, near), -e[1], e[0]))
        return best[0]

    def scale_out(
        self, vnf_type: int, src: int, tp: ThresholdPair, tick: int, emergency: bool = False
    ) -> ScaleDecision:
        w = self.world
        near = w.vms[src].location
        dst = self.pick_idle(near)
        if dst is None:
            if any(vt == vnf_type for vt, _ in self.pending.values()):
                d = ScaleDecision(vnf_type, ScaleAction.SCALE_OUT, tick, source=src, deferred=True,
                                  emergency=emergency, note="boot already pending")
            else:
                try:
                    vm = self.boot_idle(near)
                except PoolExhausted:
                    d = ScaleDecision(vnf_type, ScaleAction.SCALE_OUT, tick, source=src, deferred=True,
                                      emergency=emergency, note="pool exhausted")
                else:
                    if w.vms[vm].state is VmState.IDLE:
                        # zero boot delay: usable right away
                        self.queues.enqueue_idle(vm, w.vms[vm].enqueued_at)
                        return self.scale_out(vnf_type, src, tp, tick, emergency)
                    self.pending[vm] = (vnf_type, src)
                    d = ScaleDecision(vnf_type, ScaleAction.SCALE_OUT, tick, source=src, target=vm,
                                      deferred=True, emergency=emergency, note="booting")
            self._record(d)
            return d
        self._take_idle(dst, vnf_type)
        plan = self._offload_plan(src, dst, tp)
        d = ScaleDecision(vnf_type, ScaleAction.SCALE_OUT, tick, source=src, target=dst,
                          migration_plan=plan, emergency=emergency)
        self._record(d)
        return d

    # ---- scale in -----------------------------------------------------------

    def scale_in(
        self,
        vnf_type: int,
        tp: ThresholdPair,
        tick: int,
        utilization: Mapping[int, float] | None = None,
    ) -> ScaleDecision:
        """Drain the least-utilized instance onto its lightest peers, or abort."""
        w = self.world
        running = w.running_instances(vnf_type)
        noop = ScaleDecision(vnf_type, ScaleAction.NOOP, tick)
        if len(running) < 2:
            noop.note = "floor: last instance"
            self._record(noop)
            return noop
        util = dict(utilization or {})
        cands = [i for i in running if not w.migrating_touching(i.vm_id)]
        if not cands:
            noop.note = "all instances busy migrating"
            self._record(noop)
            return noop
        victim = min(cands, key=lambda i: (util.get(i.vm_id, i.cpu_util), i.vm_id)).vm_id
        peers = [i.vm_id for i in running if i.vm_id != victim]
        load = {p: self._raw_util(p, w.instance_rate(p)) for p in peers}
        plan: dict[int, int] = {}
        for f in self._movable_flows(victim):
            dst = min(peers, key=lambda p: (load[p], p))
            extra = self._raw_util(dst, w.flow_rate(f))
            if load[dst] + extra > tp.upper:
                noop.note = f"abort: peer {dst} would reach U={load[dst] + extra:.3f} > H={tp.upper:.3f}"
                log.debug("scale-in of type %s aborted: %s", vnf_type, noop.note)
                self._record(noop)
                return noop
            load[dst] += extra
            plan[f] = dst
        w.start_draining(victim)
        for f, dst in plan.items():
            w.start_migration(f, victim, dst)
        inst = w.instances.get(victim)
        if inst is not None and not inst.active_flows and inst.queue_len == 0 and not w.migrating_touching(victim):
            w.retire(inst, w.tick)
            self.queues.running.discard(victim)
            self.queues.enqueue_idle(victim, w.vms[victim].enqueued_at)
        d = ScaleDecision(vnf_type, ScaleAction.SCALE_IN, tick, source=victim, migration_plan=plan)
        self._record(d)
        return d

    # ---- idle pool ----------------------------------------------------------

    def booting_unreserved(self) -> list[int]:
        return [vm.vm_id for vm in self.world.vms if vm.state is VmState.BOOTING and vm.vm_id not in self.pending]

    def resize_idle_pool(self, target: int, tick: int) -> list[tuple[str, int]]:
        """Power off the oldest idle VMs, or boot new ones, to approach ``target``.

        VMs already booting for the pool count toward the target. Returns
        ``("off", vm)`` / ``("boot", vm)`` actions; stops quietly when the pool
        is exhausted.
        """
        if target < 0:
            raise ValueError("target must be >= 0")
        actions: list[tuple[str, int]] = []
        while self.queues.n_idle > target:
            vm_id, _ = self.queues.idle.popleft()
            self.world.power_off(vm_id)
            actions.append(("off", vm_id))
        missing = target - self.queues.n_idle - len(self.booting_unreserved())
        for _ in range(max(missing, 0)):
            try:
                vm_id = self.boot_idle()
            except PoolExhausted:
                log.debug("idle pool resize stopped: pool exhausted")
                break
            if self.world.vms[vm_id].state is VmState.IDLE:
                self.queues.enqueue_idle(vm_id, self.world.vms[vm_id].enqueued_at)
            actions.append(("boot", vm_id))
        return actions

    def energy_step(self, window: CycleWindow, thresholds: Mapping[int, ThresholdPair], tick: int) -> tuple[float, int] | None:
        if window.length == 0 or self.queues.n == 0:
            return None
        h = sum(tp.upper for tp in thresholds.values()) / len(thresholds)
        inp = EnergyRatioInputs(window.processed, self.queues.n_run, self.queues.n_idle, h, window.length)
        gamma = compute_energy_ratio(inp)
        target = compute_tuned_idle(gamma, self.energy.gamma_star, inp.n_run, inp.n_idle)
        self.resize_idle_pool(target, tick)
        self.last_gamma, self.last_target = gamma, target
        return gamma, target

    # ---- one decision cycle -------------------------------------------------

    def cycle_decisions(
        self,
        observations: list[VnfObservation],
        thresholds: Mapping[int, ThresholdPair],
        window: CycleWindow,
        tick: int,
    ) -> list[ScaleDecision]:
        util = {r.vm_id: r.mean_util for r in window.instances}
        first = len(self.records)
        out = []
        for obs in observations:
            vt = obs.f
            tp = thresholds[vt]
            running = self.world.running_instances(vt)
            verdict = evaluate_thresholds(obs, tp, len(running))
            if verdict is ScaleAction.SCALE_OUT:
                src = max(running, key=lambda i: (util.get(i.vm_id, i.cpu_util), -i.vm_id)).vm_id
                out.append(self.scale_out(vt, src, tp, tick))
            elif verdict is ScaleAction.SCALE_IN:
                out.append(self.scale_in(vt, tp, tick, util))
            else:
                d = ScaleDecision(vt, ScaleAction.NOOP, tick)
                self._record(d)
                out.append(d)
        res = self.energy_step(window, thresholds, tick)
        if res is not None:
            for rec in self.records[first:]:
                rec.gamma_run, rec.n_idle_star = res
        return out
