"""Run-level metrics: loss rate, alpha = flow time x hosts, Pun = latency x hosts."""

from __future__ import annotations

from dataclasses import dataclass, fields

from .env import ScalingEnv


def metric_alpha(mean_flow_completion_time: float, n_hosts: int) -> float:
    return mean_flow_completion_time * n_hosts


def metric_pun(mean_latency: float, n_hosts: int) -> float:
    return mean_latency * n_hosts


@dataclass(frozen=True)
class RunMetrics:
    packet_loss_rate: float
    alpha: float
    pun: float
    mean_flow_completion_time: float
    mean_latency: float
    vm_ticks: int
    n_peak: int
    generated: int
    processed: int
    dropped: int
    residual_queue: int
    completed_flows: int
    residual_flows: int
    scale_outs: int
    scale_ins: int
    emergencies: int

    @classmethod
    def columns(cls) -> list[str]:
        return [f.name for f in fields(cls)]

    def row(self) -> list:
        return [getattr(self, c) for c in self.columns()]


def collect_metrics(env: ScalingEnv) -> RunMetrics:
    w = env.world
    comps = w.completions
    fct = sum(ct for _, ct in comps) / len(comps) if comps else 0.0
    lat = w.latency_sum / w.processed if w.processed else 0.0
    n = w.peak_vms
    recs = env.engine.records
    return RunMetrics(
        packet_loss_rate=w.dropped / w.generated if w.generated else 0.0,
        alpha=metric_alpha(fct, n),
        pun=metric_pun(lat, n),
        mean_flow_completion_time=fct,
        mean_latency=lat,
        vm_ticks=w.vm_ticks,
        n_peak=n,
        generated=w.generated,
        processed=w.processed,
        dropped=w.dropped,
        residual_queue=w.residual_queue(),
        completed_flows=len(comps),
        residual_flows=sum(1 for f in w.flows if f.arrival_tick < w.tick) - len(comps),
        scale_outs=sum(1 for r in recs if r.action == "scale_out" and not r.deferred),
        scale_ins=sum(1 for r in recs if r.action == "scale_in"),
        emergencies=sum(1 for r in recs if r.emergency),
    )
