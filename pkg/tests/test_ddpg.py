import dataclasses
import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from nfvscale import neuralnet as nn
from nfvscale import traffic
from nfvscale.ddpg import (
    AgentConfig,
    DdpgAgent,
    OUNoise,
    ReplayBuffer,
    Transition,
    compute_reward,
    map_action,
    run_episode,
)
from nfvscale.domain import NormalizationConstants, VnfProfile, validate_thresholds
from nfvscale.env import EnvSettings, ScalingEnv
from nfvscale.sim import SimConfig
from nfvscale.traffic import Pattern, TrafficScenario

from gradcheck import max_rel_error, numeric_param_grad

NORMS = NormalizationConstants(10, 1000, 100, 50)
SMALL = AgentConfig(hidden=(8, 8), batch_size=4, buffer_size=64)


def test_map_action_corners():
    tp = map_action([1.0, -1.0])
    assert tp.upper == pytest.approx(0.95) and tp.lower == pytest.approx(0.05)
    tp = map_action([-1.0, -1.0])
    assert tp.upper == pytest.approx(0.5) and tp.lower == pytest.approx(0.05)


def test_map_action_clamps_lower_under_margin():
    tp = map_action([-1.0, 1.0], margin=0.1)
    assert tp.lower == pytest.approx(tp.upper - 0.1)
    assert validate_thresholds(tp, 0.1) is None


@given(st.lists(st.floats(-5, 5), min_size=2, max_size=2), st.floats(1e-6, 0.45))
def test_every_mapped_action_is_valid(raw, margin):
    assert validate_thresholds(map_action(raw, margin), margin) is None


@pytest.mark.parametrize("margin", [0.0, -0.1, 0.5])
def test_map_action_rejects_impossible_margin(margin):
    with pytest.raises(ValueError):
        map_action([0.0, 0.0], margin)


def test_reward_examples():
    assert compute_reward([(100, 0, 0)]) == 100
    assert compute_reward([(100, 5, 10), (50, 0, 0)]) == 67.5
    assert compute_reward([(0, 0, 0), (0, 0, 0)]) == 0
    with pytest.raises(ValueError):
        compute_reward([])


rows = st.lists(st.tuples(st.floats(0, 1e4), st.floats(0, 1e3), st.floats(0, 1e3)), min_size=1, max_size=8)


@given(rows, st.randoms())
def test_reward_is_permutation_invariant(rs, rnd):
    shuffled = list(rs)
    rnd.shuffle(shuffled)
    a, b = compute_reward(rs), compute_reward(shuffled)
    assert abs(a - b) <= 1e-12 * max(1.0, abs(a))


@given(rows, st.integers(0, 7), st.integers(0, 2), st.floats(1e-3, 100))
def test_reward_monotone(rs, i, k, bump):
    i %= len(rs)
    up = [list(r) for r in rs]
    up[i][k] += bump
    delta = compute_reward([tuple(r) for r in up]) - compute_reward(rs)
    assert delta > 0 if k == 0 else delta < 0


def test_replay_buffer_ring_eviction():
    buf = ReplayBuffer(3, 2, 2, seed=0)
    for r in range(5):
        buf.add(Transition(np.zeros(2), np.zeros(2), float(r), np.zeros(2), False))
        assert len(buf) <= 3
    assert sorted(buf.r.tolist()) == [2.0, 3.0, 4.0]
    assert buf.r[buf.oldest_index()] == 2.0
    s, a, r, s2, d = buf.sample(3)
    assert sorted(r.tolist()) == [2.0, 3.0, 4.0]
    with pytest.raises(ValueError):
        buf.sample(4)


def test_ou_noise_with_zero_sigma_stays_at_mu():
    n = OUNoise(2, sigma=0.0, mu=0.0, seed=1)
    assert all(np.array_equal(n.sample(), np.zeros(2)) for _ in range(10))


def agent(**kw):
    return DdpgAgent([0, 1], NORMS, dataclasses.replace(SMALL, **kw), seed=3)


def test_act_is_deterministic_without_exploration():
    ag = agent()
    x = np.random.default_rng(0).random(ag.state_dim)
    assert ag.act(x) == ag.act(x)
    ag0 = agent(ou_sigma=0.0)
    assert ag0.act(x, explore=True, vnf_type=0) == ag0.act(x)


def transitions(ag, n, seed=0):
    rng = np.random.default_rng(seed)
    return [Transition(rng.random(ag.state_dim), rng.uniform(-1, 1, 2), float(rng.normal()),
                       rng.random(ag.state_dim), bool(i == n - 1)) for i in range(n)]


def as_batch(ts):
    return (np.array([t.state for t in ts]), np.array([t.action for t in ts]),
            np.array([t.reward for t in ts]), np.array([t.next_state for t in ts]),
            np.array([float(t.terminal) for t in ts]))


def test_critic_gradient_matches_finite_differences():
    ag = agent()
    batch = as_batch(transitions(ag, 3))
    loss, g = ag.critic_loss_and_grad(batch)
    num = numeric_param_grad(lambda: ag.critic_loss_and_grad(batch)[0], ag.critic.params())
    assert max_rel_error([a for p in zip(g.dW, g.db) for a in p], num) < 1e-4


def test_actor_gradient_matches_finite_differences():
    ag = agent()
    s = as_batch(transitions(ag, 3))[0]
    _, g = ag.actor_grad(s)

    def neg_q():
        a = nn.forward(ag.actor, s)
        return -float(np.mean(nn.forward(ag.critic, np.hstack([s, a]))))

    num = numeric_param_grad(neg_q, ag.actor.params())
    assert max_rel_error([a for p in zip(g.dW, g.db) for a in p], num) < 1e-4


def test_zero_discount_critic_fits_constant_reward():
    ag = agent(gamma=0.0, batch_size=1)
    ag.buffer.add(Transition(np.full(ag.state_dim, 0.5), np.array([0.2, -0.3]), 1.5, np.zeros(ag.state_dim), False))
    losses = [ag.train_step()[0] for _ in range(3000)]
    assert losses[-1] < 1e-8 < losses[0]


def test_zero_learning_rate_leaves_parameters():
    ag = agent(actor_lr=0.0, critic_lr=0.0, optimizer="sgd")
    before = [p.copy() for p in ag.actor.params() + ag.critic.params()]
    ag.train_step(as_batch(transitions(ag, 4)))
    after = ag.actor.params() + ag.critic.params()
    assert all(np.array_equal(a, b) for a, b in zip(before, after))


def test_checkpoint_round_trip(tmp_path):
    ag = agent()
    for t in transitions(ag, 8):
        ag.buffer.add(t)
    ag.train_step()
    path = tmp_path / "ckpt.txt"
    ag.save(path)
    back = DdpgAgent.load(path)
    x = np.random.default_rng(9).random(ag.state_dim)
    assert back.act_raw(x).tobytes() == ag.act_raw(x).tobytes()
    assert back.cfg == ag.cfg and back.type_ids == ag.type_ids


def small_env(horizon=240):
    scn = TrafficScenario(Pattern.FLAT_PERIODIC, horizon=horizon, base_rate=15.0, period=120, noise_level=0.2,
                          seed=5, vnf_types=(0, 1))
    profiles = {0: VnfProfile(1.0, 30, 10), 1: VnfProfile(1.5, 30, 10)}
    return ScalingEnv(EnvSettings(profiles, SimConfig(pool_size=8, boot_delay=5), cycle_len=30, horizon=horizon),
                      traffic.generate(scn))


def test_zero_cycle_episode_is_empty():
    ag = agent()
    assert run_episode(small_env(), ag, max_cycles=0).cycles == []
    assert len(ag.buffer) == 0


def test_buffer_grows_by_cycles_times_types():
    ag = agent()
    log = run_episode(small_env(), ag, explore=True, train=False)
    assert len(log.cycles) == 240 // 30
    assert len(ag.buffer) == len(log.cycles) * 2
    assert all(validate_thresholds(tp, ag.cfg.margin) is None for c in log.cycles for tp in c.thresholds.values())


def test_greedy_episode_is_deterministic():
    a = run_episode(small_env(), agent(), explore=False, train=False)
    b = run_episode(small_env(), agent(), explore=False, train=False)
    assert [(c.thresholds, c.rewards) for c in a.cycles] == [(c.thresholds, c.rewards) for c in b.cycles]


def test_training_episode_is_deterministic():
    runs = []
    for _ in range(2):
        ag = agent()
        log = run_episode(small_env(), ag, explore=True, train=True)
        runs.append((log.total_reward, ag.actor.W[0].tobytes()))
    assert runs[0] == runs[1]
