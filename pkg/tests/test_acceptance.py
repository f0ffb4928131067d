"""End-to-end acceptance checks, one test per criterion.

Each test prints a single ``PASS``/``FAIL`` line with its runtime and the
runtime limit. Run with ``pytest tests/test_acceptance.py -v -s`` to see them.
"""
import time
from contextlib import contextmanager

import numpy as np
import pytest

from hitlearn import dsp, inference as inf, rl
from hitlearn.netlink import cloud, edge, wire
from hitlearn.sim import eeg, session, wcst
from hitlearn.sim.session import SimulatedParticipant

from oracles import (SSQ_TABLE, STATE_TABLE, count_windows_by_enumeration, q_update_by_hand,
                     value_iteration, weierstrass, weierstrass_dimension)


@contextmanager
def criterion(capsys, number, title, limit_s=None):
    start = time.perf_counter()
    status = "FAIL"
    try:
        yield
        status = "PASS"
    finally:
        elapsed = time.perf_counter() - start
        if status == "PASS" and limit_s is not None and elapsed >= limit_s:
            status = "FAIL"
        limit = f", limit {limit_s:g} s" if limit_s is not None else ""
        with capsys.disabled():
            print(f"\ncriterion {number} {title}: {status} ({elapsed:.2f} s{limit})")
    if limit_s is not None:
        assert elapsed < limit_s, f"took {elapsed:.1f} s, limit {limit_s} s"


def test_1_questionnaire_scoring(capsys):
    with criterion(capsys, 1, "questionnaire scoring", 1.0):
        assert inf.ssq_score(inf.SsqResponse((3,) * 16)).ts == pytest.approx(235.62, abs=1e-9)
        for name, membership in SSQ_TABLE.items():
            form = {n: 0 for n in SSQ_TABLE}
            form[name] = 1
            sc = inf.ssq_score(inf.SsqResponse.from_mapping(form))
            assert (sc.n_t, sc.o_t, sc.d_t) == membership, name
        rng = np.random.default_rng(2024)
        forms = rng.integers(0, 4, size=(10_000, 16))
        items = rng.integers(0, 16, size=10_000)
        for sev, i in zip(forms, items):
            if sev[i] == 3:
                continue
            up = sev.copy()
            up[i] += 1
            assert inf.ssq_score(inf.SsqResponse(tuple(up))).ts > inf.ssq_score(inf.SsqResponse(tuple(sev))).ts


def test_2_state_mapping(capsys):
    with criterion(capsys, 2, "state mapping"):
        for bits, state in STATE_TABLE.items():
            assert inf.compose_state(inf.MentalState(*bits)) == state
        assert sorted(STATE_TABLE.values()) == list(range(1, 9))


def test_3_signal_processing_oracles(capsys):
    with criterion(capsys, 3, "signal processing oracles", 30.0):
        fs = 8.0
        for seconds in np.arange(0.0, 1000.0 + 1e-9, 0.5):
            buf = dsp.SampleBuffer(np.zeros(int(round(seconds * fs))), fs)
            assert len(dsp.segment_windows(buf)) == count_windows_by_enumeration(seconds), seconds
        assert len(dsp.segment_windows(dsp.SampleBuffer(np.zeros(600 * 128), 128.0))) == 199

        rng = np.random.default_rng(0)
        for n in (1, 7, 64, 1000, 4097):
            x = rng.standard_normal(n)
            details, approx = dsp.haar_dwt(x)
            energy = sum(np.sum(d ** 2) for d in details) + np.sum(approx ** 2)
            assert abs(energy - np.sum(x ** 2)) <= 1e-9 * max(1.0, np.sum(x ** 2))

        t = np.arange(1024) / 256.0
        w = dsp.Window.from_array(2.0 * np.sin(2 * np.pi * 15 * t), 256.0)
        assert dsp.band_power(w, 10, 25).total == pytest.approx(2.0, rel=0.02)

        img = dsp.smoothed_wvd(dsp.Window.from_array(np.sin(2 * np.pi * 15 * t), 256.0))
        ridge = img.ridge()[128:-128]
        assert np.max(np.abs(ridge - 15.0)) <= img.df

        assert dsp.box_counting_fd(np.linspace(-3, 5, 4096)) == pytest.approx(1.0, abs=0.05)
        assert dsp.box_counting_fd(weierstrass(2 ** 16)) == pytest.approx(weierstrass_dimension(), abs=0.10)


def test_4_q_learning(capsys):
    with criterion(capsys, 4, "Q-learning", 10.0):
        hp = rl.Hyperparams(alpha=0.05, gamma=0.001)
        q = rl.update_q(rl.QTable(), 1, 1, 10.0, 1, hp)
        assert q.q[0, 0] == pytest.approx(0.5, abs=1e-12)
        q = rl.update_q(q, 1, 1, 10.0, 1, hp)
        assert q.q[0, 0] == pytest.approx(0.975025, abs=1e-12)
        assert q.q[0, 0] == pytest.approx(q_update_by_hand(0.5, 10.0, 0.5, 0.05, 0.001), abs=1e-15)

        mdp_rng = np.random.default_rng(42)
        P = mdp_rng.dirichlet([1, 1], size=(2, 5))
        R = mdp_rng.uniform(-1, 1, size=(2, 5))
        q_star = value_iteration(P, R, hp.gamma)
        rng = np.random.default_rng(1)
        q, s = rl.QTable(), 1
        for _ in range(10_000):
            a = rl.select_action(q, s, 1.0, rng)
            s2 = 1 + int(rng.random() < P[s - 1, a - 1, 1])
            q = rl.update_q(q, s, a, R[s - 1, a - 1], s2, hp)
            s = s2
        assert np.max(np.abs(q.q[:2] - q_star)) < 1e-3

        def trained(c):
            agent = rl.Agent(rl.Hyperparams(epsilon_decay=0.005), np.random.default_rng(3))
            env = np.random.default_rng(4)
            rewards = np.random.default_rng(7).uniform(-10, 10, size=(8, 5))
            s = 1
            for _ in range(3000):
                a = agent.act(s)
                s2 = int(env.integers(1, 9))
                agent.learn(s, a, c * rewards[s - 1, a - 1], s2)
                s = s2
            return agent.snapshot().policy()
        base = trained(1.0)
        for c in (0.1, 10.0):
            assert trained(c) == base


TRAIN_HP = rl.Hyperparams(epsilon_decay=0.003)
TRAIN_SESSIONS = 300
SEEDS = range(5)


def test_5_closed_loop_policies(capsys):
    with criterion(capsys, 5, "closed-loop policies", 120.0):
        cohort = {p.name: p for p in session.reference_cohort(0)}
        p2, p3 = cohort["P2"], cohort["P3"]
        last_p3 = None
        for seed in SEEDS:
            agent = session.train_agent(p3, TRAIN_HP, TRAIN_SESSIONS, seed=seed)
            assert agent.snapshot().greedy_actions(2) == [rl.Action.A2], f"P3 seed {seed}"
            last_p3 = agent
        for seed in SEEDS:
            agent = session.train_agent(p2, TRAIN_HP, TRAIN_SESSIONS, seed=seed)
            best = agent.snapshot().greedy_actions(6)
            assert set(best) <= {rl.Action.A2, rl.Action.A4}, f"P2 seed {seed}: {best}"
        cmp = session.compare_to_static(p3, last_p3, n_sessions=30)
        assert cmp.mean_difference > 0
        assert cmp.wins > cmp.losses
        assert cmp.p_value < 0.05


def test_6_calibrated_generator(capsys):
    with criterion(capsys, 6, "calibrated generator"):
        def level(ls, seed):
            buf = eeg.generate_eeg(inf.MentalState(ls, 1, 1), 300, 128.0, rng=np.random.default_rng(seed))
            return np.mean([dsp.band_power(w).value for w in dsp.segment_windows(dsp.band_limit(buf))])
        assert level(1, 11) / level(0, 12) == pytest.approx(1.7652, rel=0.10)


def test_7_card_sorting(capsys):
    with criterion(capsys, 7, "card sorting"):
        g = wcst.WcstGame(np.random.default_rng(0), switch_prob=0.0)
        wcst.play(g, wcst.perfect_player)
        assert g.correct_rounds == 128

        import itertools
        for n in range(13):
            for letters in itertools.product("CW", repeat=n):
                h = "".join(letters)
                expected = [i for i in range(4, n) if h[i - 4:i + 1] == "CCCCC" and (i == 4 or h[i - 5] == "W")]
                assert [e.index for e in wcst.wcst_label(h) if e.label == 1] == expected, h


def test_8_edge_cloud(capsys, tmp_path):
    with criterion(capsys, 8, "edge-cloud link"):
        rng = np.random.default_rng(8)
        for _ in range(10_000):
            kind = rng.integers(3)
            pid = "P" + str(rng.integers(0, 1000))
            if kind == 0:
                msg = wire.StateMessage(pid, int(rng.integers(1, 100)), *map(int, rng.integers(0, 2, 3)),
                                        int(rng.integers(0, 2 ** 40)))
            elif kind == 1:
                msg = wire.ActionMessage(pid, int(rng.integers(1, 100)), rl.Action(int(rng.integers(1, 6))),
                                         int(rng.integers(0, 10 ** 6)))
            else:
                msg = wire.RewardMessage(pid, int(rng.integers(0, 100)), int(rng.integers(0, 11)),
                                         int(rng.integers(1, 9)))
            assert wire.decode(wire.encode(msg)) == msg

        profile = session.reference_cohort(0)[0]

        def source():
            return SimulatedParticipant(profile, 12.0, 128.0, np.random.default_rng(1), np.random.default_rng(2))

        clock = edge.VirtualClock()
        link = edge.LoopbackTransport(cloud.CloudService(), clock, transfer_s=0.016, policy_s=0.12)
        out = edge.edge_run(source(), link, profile.name, budget=edge.LatencyBudget(1.15, 0.016, 0.12), clock=clock)
        assert out.fallbacks == 0 and all(t < 4.0 for t in out.turnarounds)

        class Crash(edge.LoopbackTransport):
            n = 0

            def request(self, line, timeout):
                self.n += 1
                if self.n == 3:
                    before = self.service.table(profile.name)
                    self.service = cloud.CloudService(rl.Hyperparams(), tmp_path, seed=7)
                    assert self.service.table(profile.name) == before
                return super().request(line, timeout)

        clock = edge.VirtualClock()
        link = Crash(cloud.CloudService(rl.Hyperparams(), tmp_path), clock)
        out = edge.edge_run(source(), link, profile.name, clock=clock)
        assert len(out.records) == 6 and out.fallbacks == 0
        assert link.service.policy_version(profile.name) == 5
