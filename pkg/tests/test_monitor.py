import pytest

from nfvscale import traffic
from nfvscale.domain import ScaleAction, ThresholdPair, VnfProfile
from nfvscale.env import EnvSettings, ScalingEnv
from nfvscale.monitor import Alarm, EmergencyProcessor, Monitor, SlaPolicy, monitor_tick
from nfvscale.scaling import ScalingEngine
from nfvscale.sim import InstanceTick, SimConfig, TickReport, World
from nfvscale.traffic import Pattern, TrafficScenario

from conftest import const_flow

PROF = {0: VnfProfile(1.0, 20, 10)}
POLICY = SlaPolicy(max_loss_rate=0.1, max_queue_frac=0.9, consecutive_ticks=2)
TP = ThresholdPair(0.8, 0.2)


def report(tick, arrivals, dropped, q=0, vm=0):
    return TickReport(tick, [InstanceTick(vm, 0, arrivals - dropped, dropped, q, 1.0, arrivals)])


def test_zero_traffic_is_normal():
    assert monitor_tick(report(0, 0, 0), POLICY, PROF) == []


def test_sustained_loss_raises_alarm_on_second_tick():
    mon = Monitor(POLICY, PROF)
    assert mon.monitor_tick(report(10, 20, 10)) == []
    (alarm,) = mon.monitor_tick(report(11, 20, 10))
    assert (alarm.tick, alarm.breach_tick, alarm.vnf_type) == (11, 10, 0)
    assert alarm.cause.startswith("loss_rate")


def test_single_tick_spike_is_debounced():
    mon = Monitor(POLICY, PROF)
    assert mon.monitor_tick(report(3, 20, 10)) == []
    assert mon.monitor_tick(report(4, 5, 0)) == []
    assert mon.monitor_tick(report(5, 20, 10)) == []


def test_queue_rule():
    mon = Monitor(SlaPolicy(consecutive_ticks=1), PROF)
    assert mon.monitor_tick(report(0, 5, 0, q=18)) == []
    assert mon.monitor_tick(report(1, 5, 0, q=19))[0].cause.startswith("queue")


def _engine():
    w = World(PROF, [const_flow(0, 0, 0, 100, 6), const_flow(1, 0, 0, 100, 5)], SimConfig(boot_delay=0))
    w.deploy(0)
    w.boot_vm()
    for _ in range(37):
        w.step()
    return w, ScalingEngine(w)


def test_emergency_decision_is_immediate_and_migrates():
    w, eng = _engine()
    ep = EmergencyProcessor(eng, cycle_len=60)
    d = ep.emergency_scale(Alarm(37, 0, 0, "loss_rate=0.5", 36), TP)
    assert d.tick == 37 and d.emergency and d.action is ScaleAction.SCALE_OUT
    assert d.migration_plan and set(d.migration_plan) <= set(w.migrations)


def test_duplicate_alarm_in_cooldown_is_suppressed():
    w, eng = _engine()
    ep = EmergencyProcessor(eng, cycle_len=60)
    assert ep.emergency_scale(Alarm(37, 0, 0, "x", 36), TP) is not None
    assert ep.emergency_scale(Alarm(40, 0, 0, "x", 36), TP) is None
    assert ep.records[-1].action == "suppressed"
    assert ep.emergency_scale(Alarm(97, 0, 0, "x", 96), TP) is not None


BURST_TP = ThresholdPair(0.6, 0.2)


def burst_env(ep_enabled=True, sla=POLICY, initial_idle=1, record=True):
    # period == cycle_len, so only the burst moves a cycle's mean utilization
    scn = TrafficScenario(Pattern.SPIKY_PERIODIC, horizon=240, base_rate=10.0, period=60, spike_count=1,
                          spike_magnitude=10.0, spike_offsets=(95,), spike_width=20, seed=1)
    s = EnvSettings({0: VnfProfile(1.0, 60, 20)}, SimConfig(pool_size=8, boot_delay=5), cycle_len=60,
                    horizon=240, sla=sla, ep_enabled=ep_enabled, initial_idle=initial_idle, record_ticks=record)
    env = ScalingEnv(s, traffic.generate(scn))
    env.reset()
    while not env.done:
        env.decide({0: BURST_TP})
        env.advance()
    return env


def test_burst_triggers_emergency_within_one_tick():
    env = burst_env()
    em = [r for r in env.engine.records if r.emergency]
    first = env.ep.records[0]
    assert em and em[0].tick == first.tick
    assert first.tick - first.breach_tick <= 1
    assert 95 <= first.breach_tick <= 97
    assert all(r.action == "scale_out" for r in em)


def test_disabled_sla_matches_no_ep():
    a = burst_env(ep_enabled=True, sla=SlaPolicy.disabled())
    b = burst_env(ep_enabled=False)
    assert a.ep.records == []
    assert a.engine.records == b.engine.records
    assert a.tick_rows == b.tick_rows


def test_without_ep_first_reaction_waits_for_boundary():
    env = burst_env(ep_enabled=False)
    outs = [r for r in env.engine.records if r.action == "scale_out"]
    assert outs[0].tick == 120
