import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from nfvscale.domain import (
    FlowSpec,
    NormalizationConstants,
    Protocol,
    ScaleAction,
    ThresholdPair,
    VnfObservation,
    VnfProfile,
    VnfType,
    check_unique_types,
    feature_length,
    observation_to_feature_vector,
    validate_thresholds,
)

NORMS = NormalizationConstants(m=100, s=1000, l=100, q=50)


def obs(**kw):
    base = dict(f=0, m=0, s=0, l=0, q=0, u=0.0, a=ScaleAction.NOOP, tick=0)
    base.update(kw)
    return VnfObservation(**base)


def test_zero_observation_has_only_one_hot_slots():
    v = observation_to_feature_vector(obs(f=1), NORMS, [0, 1, 2])
    expected = np.zeros(feature_length(3))
    expected[1] = 1.0
    expected[3 + 5 + int(ScaleAction.NOOP)] = 1.0
    assert np.array_equal(v, expected)


def test_utilization_passes_through_exactly():
    v = observation_to_feature_vector(obs(u=0.75), NORMS, [0])
    assert v[1 + 4] == 0.75


def test_count_slots_are_scaled_then_clipped():
    assert observation_to_feature_vector(obs(m=50), NORMS, [0])[1] == 0.5
    assert observation_to_feature_vector(obs(m=300), NORMS, [0])[1] == 1.0


def test_unknown_type_is_rejected():
    with pytest.raises(KeyError):
        observation_to_feature_vector(obs(f=7), NORMS, [0, 1])


def test_observation_rejects_out_of_range_u():
    with pytest.raises(ValueError):
        obs(u=1.5)


def test_duplicate_type_ids_rejected():
    p = VnfProfile(1.0, 10, 10)
    with pytest.raises(ValueError):
        check_unique_types([VnfType(0, p), VnfType(0, p)])


@pytest.mark.parametrize(
    "tp, ok",
    [((0.8, 0.2), True), ((0.2, 0.8), False), ((0.55, 0.50), False), ((0.6, 0.5), True)],
)
def test_validate_thresholds_examples(tp, ok):
    assert (validate_thresholds(ThresholdPair(*tp), margin=0.1) is None) == ok


def test_validate_names_the_rule():
    assert "lower >= upper" in validate_thresholds(ThresholdPair(0.2, 0.8))
    assert "margin" in validate_thresholds(ThresholdPair(0.55, 0.50))


unit = st.floats(-0.5, 1.5, allow_nan=False)


@given(unit, unit, st.floats(0.0, 0.5))
def test_validate_accepts_exactly_the_admissible_set(h, d, margin):
    admissible = 0 < d < h < 1 and h - d >= margin - 1e-12
    assert (validate_thresholds(ThresholdPair(h, d), margin) is None) == admissible


observations = st.builds(
    VnfObservation,
    f=st.sampled_from([3, 5, 9]),
    m=st.integers(0, 500),
    s=st.integers(0, 10**6),
    l=st.integers(0, 10**5),
    q=st.integers(0, 1000),
    u=st.floats(0.0, 1.0),
    a=st.sampled_from(list(ScaleAction)),
    tick=st.integers(0, 10**4),
)


@given(observations)
def test_encoding_is_fixed_length_bounded_and_deterministic(o):
    a = observation_to_feature_vector(o, NORMS, [3, 5, 9])
    b = observation_to_feature_vector(o, NORMS, [3, 5, 9])
    assert a.shape == (feature_length(3),)
    assert a.tobytes() == b.tobytes()
    assert np.all((a >= 0) & (a <= 1))
    assert a[:3].sum() == 1.0 and a[-3:].sum() == 1.0


def test_flow_packets_floor_cumsum():
    f = FlowSpec(0, 0, Protocol.UDP, 5, 4, (0.5, 0.5, 0.5, 2.25))
    assert f.packets().tolist() == [0, 1, 0, 2]
    assert f.end_tick == 9
    assert f.rate_at(4) == 0.0 and f.rate_at(8) == 2.25


@given(st.lists(st.floats(0, 50), min_size=1, max_size=40))
def test_flow_packets_total_is_floor_of_volume(rates):
    f = FlowSpec(0, 0, Protocol.TCP, 0, len(rates), tuple(rates))
    pk = f.packets()
    assert np.all(pk >= 0)
    assert pk.sum() == np.floor(np.sum(np.cumsum(rates)[-1]))
