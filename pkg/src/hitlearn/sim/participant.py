"""Stochastic simulated learner: state transitions under the five actions, quiz and SSQ answers.

The model is deliberately simple and stationary. Each action moves the
three state bits with per-profile probabilities:

* a2 (VR on) and staying in VR raise the chance of learning, wake the
  learner up, and risk cybersickness;
* a3 (VR off) lets cybersickness subside;
* a1 (break) clears drowsiness and cybersickness but leaves the learning bit;
* a4 (new content) re-engages a drowsy learner and gives learning a lift;
* a3 and a5 let drowsiness creep in.
"""
from __future__ import annotations

from dataclasses import dataclass, fields, replace
from typing import Sequence

import numpy as np

from ..errors import ValidationError
from ..inference import SSQ_SYMPTOMS, SSQ_THRESHOLD, MentalState, SsqResponse, ssq_binary, ssq_score
from ..rl import Action

_PROBABILITIES = (
    "base_learning", "vr_learning_gain", "vr_ssq_susceptibility", "vr_alerting",
    "drowsiness_drift", "break_recovery", "content_refresh", "content_learning_gain", "ssq_recovery",
    "drowsy_learning_factor", "dizzy_learning_factor", "quiz_skill", "quiz_bonus",
)


@dataclass(frozen=True)
class ParticipantProfile:
    name: str = "P"
    base_learning: float = 0.25
    vr_learning_gain: float = 0.5
    vr_ssq_susceptibility: float = 0.2
    vr_alerting: float = 0.5
    drowsiness_drift: float = 0.4
    break_recovery: float = 0.8
    content_refresh: float = 0.6
    content_learning_gain: float = 0.1  # added to P(learning) right after new content
    ssq_recovery: float = 0.9
    drowsy_learning_factor: float = 0.3  # multiplies P(learning) while drowsy
    dizzy_learning_factor: float = 0.5  # multiplies P(learning) while cybersick
    quiz_skill: float = 0.5
    quiz_bonus: float = 0.3
    eeg_scale: float = 1.0
    initial_state: tuple[int, int, int] = (0, 1, 1)
    rng_seed: int = 0

    def __post_init__(self):
        errors = self.problems()
        if errors:
            raise ValidationError("; ".join(errors))
        object.__setattr__(self, "initial_state", tuple(int(v) for v in self.initial_state))

    def problems(self) -> list[str]:
        out = []
        for name in _PROBABILITIES:
            v = getattr(self, name)
            if not 0 <= v <= 1:
                out.append(f"{self.name}.{name} must be in [0, 1], got {v}")
        if not self.eeg_scale > 0:
            out.append(f"{self.name}.eeg_scale must be positive")
        if len(self.initial_state) != 3 or any(v not in (0, 1) for v in self.initial_state):
            out.append(f"{self.name}.initial_state must be three bits")
        return out

    @classmethod
    def field_names(cls) -> list[str]:
        return [f.name for f in fields(cls)]

    def with_seed(self, seed: int) -> "ParticipantProfile":
        return replace(self, rng_seed=int(seed))


def _clamp(p: float) -> float:
    return min(1.0, max(0.0, p))


def in_vr_after(action: Action, in_vr: bool) -> bool:
    """Presentation mode after ``action``: a2 enters VR, a3 leaves, others keep it."""
    if action == Action.A2:
        return True
    if action == Action.A3:
        return False
    return in_vr


def learning_probability(profile: ParticipantProfile, ds: int, ssq: int, in_vr: bool,
                         new_content: bool = False) -> float:
    p = profile.base_learning + (profile.vr_learning_gain if in_vr else 0.0)
    if new_content:
        p += profile.content_learning_gain
    if ds == 0:
        p *= profile.drowsy_learning_factor
    if ssq == 0:
        p *= profile.dizzy_learning_factor
    return _clamp(p)


def participant_transition(profile: ParticipantProfile, current: MentalState, action: Action | int,
                           rng: np.random.Generator, in_vr: bool = False) -> MentalState:
    """Sample the state reached after ``action``; ``in_vr`` is the mode before acting."""
    action = Action(action)
    vr = in_vr_after(action, in_vr)
    ls, ds, ssq = current.as_tuple()

    if action == Action.A1:
        if rng.random() < profile.break_recovery:
            ds = 1
        if rng.random() < profile.break_recovery:
            ssq = 1
        return MentalState(ls, ds, ssq)

    if action == Action.A2:
        if rng.random() < profile.vr_alerting:
            ds = 1
    elif action == Action.A4:
        if ds == 0 and rng.random() < profile.content_refresh:
            ds = 1
    elif ds == 1 and rng.random() < profile.drowsiness_drift:  # a3, a5
        ds = 0

    if action == Action.A3:
        if rng.random() < profile.ssq_recovery:
            ssq = 1
    elif vr and ssq == 1 and rng.random() < profile.vr_ssq_susceptibility:
        ssq = 0

    ls = int(rng.random() < learning_probability(profile, ds, ssq, vr, action == Action.A4))
    return MentalState(ls, ds, ssq)


def quiz(profile: ParticipantProfile, ls_history: Sequence[int], rng: np.random.Generator) -> int:
    """Correct answers out of ten; chance rises linearly with the share of the stage spent learning."""
    frac = float(np.mean(ls_history)) if len(ls_history) else 0.0
    p = _clamp(profile.quiz_skill + profile.quiz_bonus * frac)
    return int(rng.binomial(10, p))


def fill_ssq(ssq_bit: int, rng: np.random.Generator, max_tries: int = 1000) -> SsqResponse:
    """A questionnaire whose total severity lands on the side of the threshold given by ``ssq_bit``."""
    n = len(SSQ_SYMPTOMS)
    weights = [0.05, 0.25, 0.35, 0.35] if ssq_bit == 0 else [0.7, 0.25, 0.05, 0.0]
    for _ in range(max_tries):
        r = SsqResponse(tuple(int(v) for v in rng.choice(4, size=n, p=weights)))
        if ssq_binary(ssq_score(r), SSQ_THRESHOLD) == ssq_bit:
            return r
    return SsqResponse((3,) * n if ssq_bit == 0 else (0,) * n)
