import itertools
from collections import Counter

import numpy as np
import pytest
from hypothesis import given, strategies as st

from hitlearn.errors import ValidationError
from hitlearn.sim import wcst


def brute_force_events(history: str):
    """Learning at i iff moves i-4..i are correct and the run began exactly at i-4."""
    out = []
    for i, m in enumerate(history):
        if m == "W":
            out.append((i, 0))
        elif i >= 4 and history[i - 4:i + 1] == "CCCCC" and (i == 4 or history[i - 5] == "W"):
            out.append((i, 1))
    return out


def test_deck_has_128_distinct_pairs():
    deck = wcst.full_deck()
    assert len(deck) == 128
    assert all(n == 2 for n in Counter(deck).values())
    assert len(wcst.STIMULI) == 4


def test_deck_is_a_permutation_per_session():
    g = wcst.WcstGame(np.random.default_rng(3))
    assert Counter(g.deck) == Counter(wcst.full_deck())
    wcst.play(g, wcst.random_player, np.random.default_rng(4))
    dealt = [g.deck[r] for r in sorted({m.round_idx for m in g.history})]
    assert Counter(dealt) == Counter(wcst.full_deck())


@pytest.mark.parametrize("seed", range(5))
def test_perfect_player_scores_every_round_without_switches(seed):
    g = wcst.WcstGame(np.random.default_rng(seed), switch_prob=0.0)
    history = wcst.play(g, wcst.perfect_player)
    assert g.correct_rounds == 128
    assert len(history) == 128 and all(m.correct for m in history)


def test_color_match_is_correct():
    red = wcst.Card("red", "circle", 3)
    g = wcst.WcstGame(np.random.default_rng(0), rule="color", deck=[red])
    assert wcst.wcst_step(g, 0) is wcst.Feedback.CORRECT  # stimulus 0 is the red card


def test_five_wrong_tries_exhaust_the_round():
    card = wcst.Card("red", "circle", 3)
    g = wcst.WcstGame(np.random.default_rng(0), switch_prob=0.0, rule="color", deck=[card, card])
    feedback = [wcst.wcst_step(g, 1) for _ in range(5)]
    assert feedback == [wcst.Feedback.WRONG] * 4 + [wcst.Feedback.ROUND_EXHAUSTED]
    assert g.correct_rounds == 0
    assert g.round_idx == 1 and g.tries_this_round == 0


def test_step_validates():
    g = wcst.WcstGame(np.random.default_rng(0))
    for bad in (-1, 4, True, "0"):
        with pytest.raises(ValidationError):
            wcst.wcst_step(g, bad)
    g.round_idx = 128
    with pytest.raises(ValidationError):
        wcst.wcst_step(g, 0)
    with pytest.raises(ValidationError):
        wcst.WcstGame(switch_prob=2.0)


def test_rule_switches_happen_with_positive_probability():
    g = wcst.WcstGame(np.random.default_rng(1), switch_prob=0.5)
    wcst.play(g, wcst.perfect_player)
    assert len({m.rule for m in g.history}) > 1


def test_wsls_beats_random():
    def score(player, seed):
        g = wcst.WcstGame(np.random.default_rng(seed))
        wcst.play(g, player, np.random.default_rng(seed + 100))
        return g.correct_rounds
    assert np.mean([score(wcst.WinStayLoseShift(), s) for s in range(5)]) > \
        np.mean([score(wcst.random_player, s) for s in range(5)])


@pytest.mark.parametrize("history,events", [
    ("CCCCC", [(4, 1)]),
    ("CCCCW", [(4, 0)]),
    ("", []),
    ("CCCCCCCCCC", [(4, 1)]),
    ("CCCCCWCCCCC", [(4, 1), (5, 0), (10, 1)]),
])
def test_label_examples(history, events):
    assert [tuple(e) for e in wcst.wcst_label(history)] == events


def test_label_matches_brute_force_on_all_short_histories():
    for n in range(13):
        for letters in itertools.product("CW", repeat=n):
            h = "".join(letters)
            assert [tuple(e) for e in wcst.wcst_label(h)] == brute_force_events(h), h


def test_label_accepts_moves_from_a_game():
    g = wcst.WcstGame(np.random.default_rng(2))
    history = wcst.play(g, wcst.WinStayLoseShift(), np.random.default_rng(2))
    letters = "".join("C" if m.correct else "W" for m in history)
    assert wcst.wcst_label(history) == wcst.wcst_label(letters)


@given(st.lists(st.booleans(), max_size=200))
def test_learning_events_bounded_by_correct_moves(h):
    events = wcst.wcst_label(h)
    assert sum(e.label for e in events) <= sum(h) // 5
    assert sum(1 for e in events if e.label == 0) == h.count(False)
    assert events == wcst.wcst_label(list(h))
