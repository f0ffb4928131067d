import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy import stats

from hitlearn import rl
from hitlearn.errors import ConfigurationError, DecodeError, ValidationError

from oracles import q_update_by_hand, value_iteration

HP = rl.Hyperparams()


def test_one_step_updates_match_hand_arithmetic():
    q = rl.QTable()
    q1 = rl.update_q(q, 3, rl.Action.A2, 10.0, 3, HP)
    assert q1.row(3)[1] == pytest.approx(0.5, abs=1e-15)
    q2 = rl.update_q(q1, 3, rl.Action.A2, 10.0, 3, HP)
    assert q2.row(3)[1] == pytest.approx(0.975025, abs=1e-12)
    assert q2.row(3)[1] == pytest.approx(q_update_by_hand(0.5, 10.0, 0.5, 0.05, 0.001), abs=1e-15)
    assert q2.visit_counts[2, 1] == 2
    assert q.n_updates == 0  # updates do not mutate their input


@given(st.floats(-100, 100), st.floats(-50, 50), st.integers(1, 8), st.integers(1, 5), st.integers(1, 8))
def test_update_matches_formula(q0, r, s, a, s2):
    q = rl.QTable()
    q.q[s - 1, a - 1] = q0
    out = rl.update_q(q, s, a, r, s2, HP)
    expected = q_update_by_hand(q0, r, q.q[s2 - 1].max(), HP.alpha, HP.gamma)
    assert out.q[s - 1, a - 1] == pytest.approx(expected, rel=1e-12, abs=1e-12)


def two_state_mdp(gamma):
    # states 1 and 2; every action is available in both
    rng = np.random.default_rng(42)
    P = rng.dirichlet([1, 1], size=(2, 5))
    R = rng.uniform(-1, 1, size=(2, 5))
    return P, R, value_iteration(P, R, gamma)


@pytest.mark.parametrize("gamma", [0.001, 0.5])
def test_converges_to_value_iteration(gamma):
    hp = rl.Hyperparams(gamma=gamma)
    P, R, q_star = two_state_mdp(gamma)
    rng = np.random.default_rng(1)
    q = rl.QTable()
    s = 1
    for _ in range(10_000):
        a = rl.select_action(q, s, 1.0, rng)  # uniform behaviour; Q-learning is off-policy
        s2 = 1 + int(rng.random() < P[s - 1, a - 1, 1])
        q = rl.update_q(q, s, a, R[s - 1, a - 1], s2, hp)
        s = s2
    err = np.max(np.abs(q.q[:2] - q_star))
    if gamma < 0.01:
        assert err < 1e-3
    else:
        assert err < 0.05  # stronger bootstrapping carries transition noise
    assert np.argmax(q.q[0]) == np.argmax(q_star[0])


def run_scaled(c, seed=3, steps=2000):
    agent = rl.Agent(rl.Hyperparams(epsilon_decay=0.005), np.random.default_rng(seed))
    env = np.random.default_rng(seed + 1)
    R = np.random.default_rng(7).uniform(-10, 10, size=(8, 5))
    s = 1
    for _ in range(steps):
        a = agent.act(s)
        s2 = int(env.integers(1, 9))
        agent.learn(s, a, c * R[s - 1, a - 1], s2)
        s = s2
    return agent.snapshot()


@pytest.mark.parametrize("c", [0.1, 10.0])
def test_greedy_policy_is_invariant_to_reward_scale(c):
    base = run_scaled(1.0)
    scaled = run_scaled(c)
    assert base.policy() == scaled.policy()
    np.testing.assert_allclose(scaled.q, c * base.q, rtol=1e-9, atol=1e-12)


def test_ties_are_broken_uniformly():
    rng = np.random.default_rng(0)
    q = rl.QTable()
    counts = np.bincount([rl.select_action(q, 4, 0.0, rng) for _ in range(5000)], minlength=6)[1:]
    assert stats.chisquare(counts).pvalue > 0.001
    q.q[3, 2] = 1.0
    assert {rl.select_action(q, 4, 0.0, rng) for _ in range(100)} == {rl.Action.A3}


def test_epsilon_decays_with_updates():
    hp = rl.Hyperparams(epsilon0=0.8, epsilon_decay=0.01)
    assert rl.decay_epsilon(0.8, 0, hp) == 0.8
    assert rl.decay_epsilon(0.8, 100, hp) == pytest.approx(0.8 * np.exp(-1))
    agent = rl.Agent(hp, np.random.default_rng(0))
    agent.learn(1, 1, 1.0, 2)
    assert agent.epsilon == pytest.approx(0.8 * np.exp(-0.01))


def test_select_action_validates():
    with pytest.raises(ValidationError):
        rl.select_action(rl.QTable(), 0, 0.1, np.random.default_rng())
    with pytest.raises(ValidationError):
        rl.select_action(rl.QTable(), 1, 1.5, np.random.default_rng())
    with pytest.raises(ValidationError):
        rl.update_q(rl.QTable(), 1, 1, float("nan"), 1, HP)


@pytest.mark.parametrize("kw", [dict(alpha=0), dict(alpha=1.5), dict(gamma=1), dict(epsilon0=0),
                                dict(epsilon_decay=-1), dict(reward_scheme="bogus")])
def test_bad_hyperparams(kw):
    with pytest.raises(ConfigurationError):
        rl.Hyperparams(**kw)


@pytest.mark.parametrize("inp,expected", [
    (rl.RewardInput(5, 7, 3, 6), 10 + 12.5),
    (rl.RewardInput(5, 3, 6, 3), -10 - 12.5),
    (rl.RewardInput(5, 5, 4, 4), 0.0),
    (rl.RewardInput(5, 6, 4, 2), 10 - 12.5),
])
def test_incremental_reward(inp, expected):
    assert rl.compute_reward(inp) == expected


def test_other_reward_schemes():
    inp = rl.RewardInput(5, 7, 3, 8)
    assert rl.compute_reward(inp, rl.Hyperparams(reward_scheme="absolute")) == pytest.approx(70 + 100)
    assert rl.compute_reward(inp, rl.Hyperparams(reward_scheme="proportional")) == pytest.approx(20 + 5 * 12.5)
    with pytest.raises(ValidationError):
        rl.RewardInput(11, 0, 1, 1)


def test_action_parse():
    assert rl.Action.parse("A4") is rl.Action.A4
    assert rl.Action.A4.label == "a4"
    with pytest.raises(ValidationError):
        rl.Action.parse("a6")


@given(st.lists(st.floats(-1e6, 1e6), min_size=40, max_size=40),
       st.lists(st.integers(0, 2 ** 40), min_size=40, max_size=40))
def test_qtable_round_trip(values, counts):
    q = rl.QTable(np.reshape(values, (8, 5)), np.reshape(counts, (8, 5)))
    assert rl.load_qtable(rl.save_qtable(q)) == q


def test_qtable_decode_errors():
    good = rl.save_qtable(rl.QTable())
    with pytest.raises(DecodeError):
        rl.load_qtable(good[:5])
    with pytest.raises(DecodeError):
        rl.load_qtable(b"XXXX" + good[4:])
    with pytest.raises(DecodeError):
        rl.load_qtable(good[:-1])
    bad_version = bytearray(good)
    bad_version[4] = 9
    with pytest.raises(DecodeError):
        rl.load_qtable(bytes(bad_version))
    nan = bytearray(good)
    nan[10:18] = np.array([np.nan]).astype("<f8").tobytes()
    with pytest.raises(DecodeError):
        rl.load_qtable(bytes(nan))


def test_agent_snapshot_is_a_copy():
    agent = rl.Agent(HP, np.random.default_rng(0))
    snap = agent.snapshot()
    agent.learn(1, 1, 5.0, 1)
    assert snap.n_updates == 0 and agent.n_updates == 1
