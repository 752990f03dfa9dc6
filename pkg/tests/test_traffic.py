import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from nfvscale import traffic
from nfvscale.domain import FlowSpec, Protocol
from nfvscale.traffic import FlowTable, Pattern, TrafficScenario

from conftest import const_flow


def scn(pattern=Pattern.FLAT_PERIODIC, **kw):
    base = dict(horizon=600, base_rate=20.0, period=120, seed=3)
    base.update(kw)
    return TrafficScenario(pattern, **base)


def test_flat_periodic_repeats_after_one_period():
    s = scn(noise_level=0.0)
    flows = traffic.generate(s)
    for t in (0, 17, 95):
        assert traffic.aggregate_rate(flows, t) == pytest.approx(traffic.aggregate_rate(flows, t + s.period), abs=1e-9)


def test_flat_periodic_zero_noise_curve_is_exactly_periodic():
    s = scn(noise_level=0.0)
    c = traffic.rate_curve(s, 0)
    assert np.array_equal(c[: s.horizon - s.period], c[s.period:])


def _intervals(mask):
    edges = np.diff(np.concatenate([[0], mask.astype(int), [0]]))
    return int((edges == 1).sum())


@pytest.mark.parametrize("seed", [0, 1, 2, 3])
def test_spiky_has_exactly_spike_count_high_intervals(seed):
    s = scn(Pattern.SPIKY_PERIODIC, spike_count=2, spike_magnitude=5.0, noise_level=0.2, seed=seed)
    curve = traffic.aggregate_curve(traffic.generate(s), s.horizon)
    assert _intervals(curve >= s.spike_magnitude * s.base_rate - 1e-9) == 2


def test_explicit_spike_offsets_are_rectangular():
    s = scn(Pattern.SPIKY_PERIODIC, spike_count=1, spike_magnitude=10.0, spike_offsets=(100,), spike_width=20)
    curve = traffic.aggregate_curve(traffic.generate(s), s.horizon)
    high = np.flatnonzero(curve >= 200.0 - 1e-9)
    assert high.tolist() == list(range(100, 120))


def test_aperiodic_stays_within_its_ceiling():
    s = scn(Pattern.APERIODIC, noise_level=0.3, walk_step=0.4)
    c = traffic.rate_curve(s, 0)
    assert c.min() >= 0 and c.max() <= 4 * s.base_rate


def test_same_seed_same_flows_different_seed_differs():
    s = scn(Pattern.APERIODIC, noise_level=0.2, vnf_types=(0, 1))
    assert traffic.generate(s) == traffic.generate(s)
    assert traffic.generate(s) != traffic.generate(scn(Pattern.APERIODIC, noise_level=0.2, vnf_types=(0, 1), seed=4))


def test_aggregate_rate_examples():
    assert traffic.aggregate_rate([], 5) == 0
    a = const_flow(0, 0, 0, 10, 10.0)
    b = const_flow(1, 0, 3, 10, 5.0)
    assert traffic.aggregate_rate([a], 4) == 10
    assert traffic.aggregate_rate([a, b], 4) == 15


def test_flow_table_rejects_sparse_ids():
    with pytest.raises(ValueError):
        FlowTable.build([const_flow(1, 0, 0, 3, 1.0)])


def test_scenario_validation():
    with pytest.raises(ValueError):
        scn(noise_level=1.0)
    with pytest.raises(ValueError):
        scn(spike_count=2, spike_offsets=(10,))
    with pytest.raises(ValueError):
        scn(period=1000)


@settings(max_examples=40)
@given(
    pattern=st.sampled_from(list(Pattern)),
    base=st.floats(0.0, 40.0),
    noise=st.floats(0.0, 0.9),
    seed=st.integers(0, 2**31),
    cap=st.floats(0.5, 10.0),
)
def test_generated_flows_reproduce_the_curve(pattern, base, noise, seed, cap):
    s = TrafficScenario(pattern, horizon=300, base_rate=base, period=60, spike_count=2 if pattern is Pattern.SPIKY_PERIODIC else 0,
                        spike_magnitude=3.0, noise_level=noise, seed=seed, flow_rate_cap=cap, flow_duration=25)
    flows = traffic.generate(s)
    assert [f.flow_id for f in flows] == list(range(len(flows)))
    assert all(r >= 0 for f in flows for r in f.rates)
    assert all(f.duration <= s.flow_duration and f.end_tick <= s.horizon for f in flows)
    assert all(max(f.rates) <= cap + 1e-9 for f in flows)
    assert np.allclose(traffic.aggregate_curve(flows, s.horizon), traffic.rate_curve(s, 0), atol=1e-9)


def test_flows_are_ordered_by_arrival():
    flows = traffic.generate(scn(noise_level=0.1, vnf_types=(0, 1)))
    keys = [(f.arrival_tick, f.vnf_type) for f in flows]
    assert keys == sorted(keys)
    assert {f.protocol for f in flows} <= {Protocol.TCP, Protocol.UDP}
