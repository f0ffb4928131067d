"""Wisconsin Card Sorting Test environment and learning-event labeler."""
from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from enum import Enum
from typing import NamedTuple, Sequence

import numpy as np

from ..errors import ValidationError

COLORS = ("red", "green", "yellow", "blue")
SHAPES = ("triangle", "star", "cross", "circle")
RULES = ("color", "shape", "count")
MAX_TRIES = 5
LEARNING_STREAK = 5


@dataclass(frozen=True)
class Card:
    color: str
    shape: str
    count: int

    def __post_init__(self):
        if self.color not in COLORS or self.shape not in SHAPES or self.count not in (1, 2, 3, 4):
            raise ValidationError(f"invalid card {self!r}")

    def attribute(self, rule: str):
        return getattr(self, rule)


# One red triangle, two green stars, three yellow crosses, four blue circles:
# each response card matches exactly one of these under any rule.
STIMULI = tuple(Card(c, s, n) for c, s, n in zip(COLORS, SHAPES, (1, 2, 3, 4)))


def full_deck() -> list[Card]:
    """Two packs of the 64 colour/shape/count combinations."""
    pack = [Card(c, s, n) for c, s, n in itertools.product(COLORS, SHAPES, (1, 2, 3, 4))]
    return pack + pack


class Feedback(Enum):
    CORRECT = "correct"
    WRONG = "wrong"
    ROUND_EXHAUSTED = "round_exhausted"


class Move(NamedTuple):
    round_idx: int
    try_idx: int
    choice: int
    rule: str
    feedback: Feedback

    @property
    def correct(self) -> bool:
        return self.feedback is Feedback.CORRECT


@dataclass
class WcstGame:
    """128 rounds; up to five tries per round; the hidden rule may switch after any round."""

    rng: np.random.Generator = field(default_factory=np.random.default_rng)
    switch_prob: float = 0.1
    rule: str | None = None
    deck: list[Card] = field(default_factory=list)
    stimuli: tuple[Card, ...] = STIMULI
    round_idx: int = 0
    tries_this_round: int = 0
    correct_rounds: int = 0
    consecutive_correct: int = 0
    history: list[Move] = field(default_factory=list)

    def __post_init__(self):
        if not 0 <= self.switch_prob <= 1:
            raise ValidationError("switch_prob must be in [0, 1]")
        if not self.deck:
            deck = full_deck()
            order = self.rng.permutation(len(deck))
            self.deck = [deck[i] for i in order]
        if self.rule is None:
            self.rule = RULES[int(self.rng.integers(len(RULES)))]
        elif self.rule not in RULES:
            raise ValidationError(f"unknown rule {self.rule!r}")

    @property
    def finished(self) -> bool:
        return self.round_idx >= len(self.deck)

    @property
    def current_card(self) -> Card:
        return self.deck[self.round_idx]

    def matching_stimulus(self) -> int:
        card = self.current_card
        return next(i for i, s in enumerate(self.stimuli) if s.attribute(self.rule) == card.attribute(self.rule))

    def _end_round(self):
        self.round_idx += 1
        self.tries_this_round = 0
        if self.switch_prob > 0 and self.rng.random() < self.switch_prob:
            others = [r for r in RULES if r != self.rule]
            self.rule = others[int(self.rng.integers(len(others)))]


def wcst_step(g: WcstGame, choice: int) -> Feedback:
    if g.finished:
        raise ValidationError("game is finished")
    if isinstance(choice, bool) or choice not in range(len(g.stimuli)):
        raise ValidationError(f"stimulus index must be 0..{len(g.stimuli) - 1}, got {choice!r}")
    rule = g.rule
    try_idx = g.tries_this_round
    if g.stimuli[choice].attribute(rule) == g.current_card.attribute(rule):
        fb = Feedback.CORRECT
        g.correct_rounds += 1
        g.consecutive_correct += 1
    else:
        g.tries_this_round += 1
        g.consecutive_correct = 0
        fb = Feedback.ROUND_EXHAUSTED if g.tries_this_round >= MAX_TRIES else Feedback.WRONG
    g.history.append(Move(g.round_idx, try_idx, choice, rule, fb))
    if fb is not Feedback.WRONG:
        g._end_round()
    return fb


class LabelEvent(NamedTuple):
    index: int  # position in the move history
    label: int  # 1 learning, 0 not learning


def _is_correct(move) -> bool:
    if isinstance(move, Move):
        return move.correct
    if isinstance(move, Feedback):
        return move is Feedback.CORRECT
    if isinstance(move, str):
        return move.upper() == "C"
    return bool(move)


def wcst_label(history: Sequence) -> list[LabelEvent]:
    """Learning events where a run of correct moves reaches five; not-learning at each wrong move.

    ``history`` may hold :class:`Move` records, :class:`Feedback` values, bools
    or the letters ``"C"``/``"W"``. A run emits at most one learning event.
    """
    events = []
    streak = 0
    for i, move in enumerate(history):
        if _is_correct(move):
            streak += 1
            if streak == LEARNING_STREAK:
                events.append(LabelEvent(i, 1))
        else:
            streak = 0
            events.append(LabelEvent(i, 0))
    return events


# -- scripted players --------------------------------------------------------------


def perfect_player(g: WcstGame, _rng) -> int:
    return g.matching_stimulus()


def random_player(g: WcstGame, rng: np.random.Generator) -> int:
    return int(rng.integers(len(g.stimuli)))


class WinStayLoseShift:
    """Keeps its guessed rule while it is rewarded; otherwise tries another."""

    def __init__(self):
        self.guess = None

    def __call__(self, g: WcstGame, rng: np.random.Generator) -> int:
        last = g.history[-1] if g.history else None
        if self.guess is None or (last is not None and not last.correct):
            options = [r for r in RULES if r != self.guess]
            self.guess = options[int(rng.integers(len(options)))]
        card = g.current_card
        return next(i for i, s in enumerate(g.stimuli) if s.attribute(self.guess) == card.attribute(self.guess))


PLAYERS = {"perfect": perfect_player, "random": random_player, "wsls": WinStayLoseShift}


def play(g: WcstGame, player, rng: np.random.Generator | None = None) -> list[Move]:
    rng = rng if rng is not None else np.random.default_rng()
    while not g.finished:
        wcst_step(g, player(g, rng))
    return g.history
