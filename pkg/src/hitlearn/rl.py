"""Tabular Q-learning adaptation engine: 8 states x 5 actions."""
from __future__ import annotations

import math
import struct
import threading
from dataclasses import dataclass, field
from enum import IntEnum

import numpy as np

from .errors import ConfigurationError, DecodeError, ValidationError

N_STATES = 8
N_ACTIONS = 5

QUIZ_UNIT = 10.0
STATE_UNIT = 100.0 / 8  # one rank step in the incremental scheme
REWARD_SCHEMES = ("incremental", "absolute", "proportional")


class Action(IntEnum):
    A1 = 1  # give a break
    A2 = 2  # enable VR (2D -> 3D)
    A3 = 3  # disable VR (3D -> 2D)
    A4 = 4  # change content
    A5 = 5  # no change

    @property
    def label(self) -> str:
        return f"a{self.value}"

    @classmethod
    def parse(cls, text: str) -> "Action":
        t = str(text).strip().lower()
        if len(t) == 2 and t[0] == "a" and t[1] in "12345":
            return cls(int(t[1]))
        raise ValidationError(f"unknown action {text!r}")


ACTION_DESCRIPTIONS = {
    Action.A1: "give break",
    Action.A2: "enable VR",
    Action.A3: "disable VR",
    Action.A4: "change content",
    Action.A5: "no change",
}


@dataclass(frozen=True)
class Hyperparams:
    alpha: float = 0.05
    gamma: float = 0.001
    epsilon0: float = 1.0
    epsilon_decay: float = 0.01
    reward_scheme: str = "incremental"

    def __post_init__(self):
        errors = self.problems()
        if errors:
            raise ConfigurationError("; ".join(errors))

    def problems(self) -> list[str]:
        out = []
        if not 0 < self.alpha <= 1:
            out.append(f"alpha must be in (0, 1], got {self.alpha}")
        if not 0 <= self.gamma < 1:
            out.append(f"gamma must be in [0, 1), got {self.gamma}")
        if not 0 < self.epsilon0 <= 1:
            out.append(f"epsilon0 must be in (0, 1], got {self.epsilon0}")
        if not self.epsilon_decay >= 0:
            out.append(f"epsilon_decay must be >= 0, got {self.epsilon_decay}")
        if self.reward_scheme not in REWARD_SCHEMES:
            out.append(f"reward_scheme must be one of {REWARD_SCHEMES}, got {self.reward_scheme!r}")
        return out


@dataclass
class QTable:
    q: np.ndarray = field(default_factory=lambda: np.zeros((N_STATES, N_ACTIONS)))
    visit_counts: np.ndarray = field(default_factory=lambda: np.zeros((N_STATES, N_ACTIONS), dtype=np.int64))

    def __post_init__(self):
        self.q = np.array(self.q, dtype=float)
        self.visit_counts = np.array(self.visit_counts, dtype=np.int64)
        if self.q.shape != (N_STATES, N_ACTIONS) or self.visit_counts.shape != (N_STATES, N_ACTIONS):
            raise ValidationError("Q-table must be 8 x 5")
        if not np.all(np.isfinite(self.q)):
            raise ValidationError("Q-table entries must be finite")
        if np.any(self.visit_counts < 0):
            raise ValidationError("visit counts must be nonnegative")

    def copy(self) -> "QTable":
        return QTable(self.q.copy(), self.visit_counts.copy())

    def row(self, s: int) -> np.ndarray:
        return self.q[_state_index(s)]

    @property
    def n_updates(self) -> int:
        return int(self.visit_counts.sum())

    def greedy_actions(self, s: int) -> list[Action]:
        row = self.row(s)
        return [Action(i + 1) for i in np.flatnonzero(row == row.max())]

    def policy(self) -> dict[int, list[Action]]:
        return {s: self.greedy_actions(s) for s in range(1, N_STATES + 1)}

    def __eq__(self, other):
        if not isinstance(other, QTable):
            return NotImplemented
        return np.array_equal(self.q, other.q) and np.array_equal(self.visit_counts, other.visit_counts)


def _state_index(s: int) -> int:
    if s not in range(1, N_STATES + 1):
        raise ValidationError(f"state id must be in 1..{N_STATES}, got {s!r}")
    return int(s) - 1


def select_action(q: QTable, s: int, epsilon: float, rng: np.random.Generator) -> Action:
    """Epsilon-greedy choice; ties among maximal actions are broken uniformly."""
    if not 0 <= epsilon <= 1:
        raise ValidationError(f"epsilon must be in [0, 1], got {epsilon}")
    if rng.random() < epsilon:
        return Action(int(rng.integers(N_ACTIONS)) + 1)
    best = q.greedy_actions(s)
    return best[int(rng.integers(len(best)))] if len(best) > 1 else best[0]


def update_q(q: QTable, s: int, a: Action | int, r: float, s_next: int, hp: Hyperparams) -> QTable:
    if not math.isfinite(r):
        raise ValidationError(f"reward must be finite, got {r}")
    i, j, k = _state_index(s), int(Action(a)) - 1, _state_index(s_next)
    out = q.copy()
    target = r + hp.gamma * out.q[k].max()
    out.q[i, j] += hp.alpha * (target - out.q[i, j])
    out.visit_counts[i, j] += 1
    return out


def decay_epsilon(epsilon: float, step: int, hp: Hyperparams) -> float:
    """``epsilon * exp(-decay * step)``, with ``step`` counting Q-updates so far."""
    if step < 0:
        raise ValidationError("step must be >= 0")
    return epsilon * math.exp(-hp.epsilon_decay * step)


@dataclass(frozen=True)
class RewardInput:
    quiz_prev: int
    quiz_now: int
    s: int
    s_next: int

    def __post_init__(self):
        for name in ("quiz_prev", "quiz_now"):
            v = getattr(self, name)
            if not 0 <= v <= 10:
                raise ValidationError(f"{name} must be in 0..10, got {v}")
        _state_index(self.s)
        _state_index(self.s_next)


def _sign(x: float) -> int:
    return (x > 0) - (x < 0)


def compute_reward(inp: RewardInput, hp: Hyperparams = Hyperparams()) -> float:
    """Quiz term plus state term.

    * incremental: one unit per direction of change, +-10 for the quiz and
      +-12.5 for the state rank.
    * absolute: quiz grade (10 per correct answer) plus the next state's level
      on a 0..100 scale (s1 -> 0, s8 -> 100).
    * proportional: like incremental but scaled by the size of the change.
    """
    dq = inp.quiz_now - inp.quiz_prev
    ds = inp.s_next - inp.s  # state ids are ordered worst (1) to best (8)
    if hp.reward_scheme == "incremental":
        return QUIZ_UNIT * _sign(dq) + STATE_UNIT * _sign(ds)
    if hp.reward_scheme == "absolute":
        return QUIZ_UNIT * inp.quiz_now + (inp.s_next - 1) * 100.0 / 7
    return QUIZ_UNIT * dq + STATE_UNIT * ds


# -- persistence ------------------------------------------------------------------

_MAGIC = b"HQTB"
_VERSION = 1
_HEADER = struct.Struct("<4sHHH")
_BODY_LEN = N_STATES * N_ACTIONS * 8 * 2


def save_qtable(q: QTable) -> bytes:
    """Header (magic, version, n_states, n_actions), then little-endian float64
    values row-major, then little-endian uint64 visit counts row-major."""
    return (_HEADER.pack(_MAGIC, _VERSION, N_STATES, N_ACTIONS)
            + q.q.astype("<f8").tobytes(order="C")
            + q.visit_counts.astype("<u8").tobytes(order="C"))


def load_qtable(data: bytes) -> QTable:
    if len(data) < _HEADER.size:
        raise DecodeError("truncated Q-table header")
    magic, version, n_s, n_a = _HEADER.unpack_from(data)
    if magic != _MAGIC:
        raise DecodeError("not a Q-table file")
    if version != _VERSION:
        raise DecodeError(f"unsupported Q-table version {version}")
    if (n_s, n_a) != (N_STATES, N_ACTIONS):
        raise DecodeError(f"unexpected Q-table shape {n_s}x{n_a}")
    body = data[_HEADER.size:]
    if len(body) != _BODY_LEN:
        raise DecodeError(f"Q-table body has {len(body)} bytes, expected {_BODY_LEN}")
    half = _BODY_LEN // 2
    q = np.frombuffer(body[:half], dtype="<f8").reshape(N_STATES, N_ACTIONS)
    counts = np.frombuffer(body[half:], dtype="<u8").reshape(N_STATES, N_ACTIONS)
    if not np.all(np.isfinite(q)):
        raise DecodeError("non-finite Q value")
    return QTable(q.astype(float), counts.astype(np.int64))


# -- engine -----------------------------------------------------------------------


class Agent:
    """Single-writer owner of one participant's Q-table.

    Epsilon decays with the number of Q-updates applied to this table, so a
    restored table resumes its exploration schedule where it stopped.
    Readers get copies via :meth:`snapshot`.
    """

    def __init__(self, hp: Hyperparams = Hyperparams(), rng: np.random.Generator | None = None,
                 table: QTable | None = None):
        self.hp = hp
        self.rng = rng if rng is not None else np.random.default_rng()
        self._table = table.copy() if table is not None else QTable()
        self._lock = threading.Lock()

    @property
    def epsilon(self) -> float:
        return decay_epsilon(self.hp.epsilon0, self._table.n_updates, self.hp)

    @property
    def n_updates(self) -> int:
        return self._table.n_updates

    def snapshot(self) -> QTable:
        with self._lock:
            return self._table.copy()

    def act(self, s: int, greedy: bool = False) -> Action:
        with self._lock:
            eps = 0.0 if greedy else decay_epsilon(self.hp.epsilon0, self._table.n_updates, self.hp)
            return select_action(self._table, s, eps, self.rng)

    def learn(self, s: int, a: Action | int, r: float, s_next: int) -> None:
        with self._lock:
            self._table = update_q(self._table, s, a, r, s_next, self.hp)
