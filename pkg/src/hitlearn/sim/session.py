"""Closed-loop sessions: baseline stage then adaptive stages, with training and evaluation helpers."""
from __future__ import annotations

import csv
import io
from dataclasses import dataclass, replace
from typing import Callable, Sequence

import numpy as np
from scipy import stats

from .. import dsp
from ..errors import ValidationError
from ..inference import InferenceConfig, MentalState, SsqResponse, calibrate, compose_state, infer_stage
from ..rl import Action, Agent, Hyperparams, RewardInput, compute_reward
from .eeg import generate_eeg
from .participant import ParticipantProfile, fill_ssq, in_vr_after, participant_transition, quiz

MIN_STAGE_S = 12.0  # three windows
TRANSCRIPT_COLUMNS = ("stage", "presentation", "ls", "ds", "ssq", "state_id", "action", "quiz", "reward")

Policy = Callable[[int], Action]


@dataclass(frozen=True)
class StageRecord:
    stage_idx: int
    presentation: str  # "2D", "VR" or "break"
    state: int  # inferred state id
    ls: int
    ds: int
    ssq: int
    quiz_correct: int
    action_taken: Action | None
    reward: float | None
    true_state: int

    def row(self) -> dict:
        return {
            "stage": self.stage_idx,
            "presentation": self.presentation,
            "ls": self.ls,
            "ds": self.ds,
            "ssq": self.ssq,
            "state_id": self.state,
            "action": self.action_taken.label if self.action_taken is not None else "",
            "quiz": self.quiz_correct,
            "reward": "" if self.reward is None else repr(float(self.reward)),
        }


def static_policy(action: Action = Action.A5) -> Policy:
    return lambda _s: action


def session_streams(seed) -> tuple[np.random.Generator, np.random.Generator, np.random.Generator]:
    """Independent generators for the participant, the EEG and the agent."""
    return tuple(np.random.default_rng(s) for s in np.random.SeedSequence(seed).spawn(3))


# Prior used to break voting ties in the baseline stage.
BASELINE_PRIOR = MentalState(0, 1, 1)


@dataclass(frozen=True)
class Observation:
    """What the edge sees at the end of a stage, plus the hidden truth for diagnostics."""

    eeg: dsp.SampleBuffer
    ssq_form: SsqResponse
    quiz_correct: int
    presentation: str
    true_state: MentalState


class SimulatedParticipant:
    """A participant profile driven stage by stage: EEG, questionnaire and quiz per stage."""

    def __init__(self, profile: ParticipantProfile, stage_len: float = 60.0, fs: float = 128.0,
                 rng_part: np.random.Generator | None = None, rng_eeg: np.random.Generator | None = None):
        if stage_len < MIN_STAGE_S:
            raise ValidationError(f"stage_len must be >= {MIN_STAGE_S} s, got {stage_len}")
        self.profile = profile
        self.stage_len = stage_len
        self.fs = fs
        self.rng_part = rng_part if rng_part is not None else np.random.default_rng(profile.rng_seed)
        self.rng_eeg = rng_eeg if rng_eeg is not None else np.random.default_rng([profile.rng_seed, 1])
        self.state = MentalState(*profile.initial_state)
        self.in_vr = False
        n = int(round(stage_len * fs))
        self.n_windows = len(dsp.segment_windows(dsp.SampleBuffer(np.zeros(n), fs)))

    def _observe(self, presentation: str) -> Observation:
        buf = generate_eeg(self.state, self.stage_len, self.fs, self.profile, self.rng_eeg)
        form = fill_ssq(self.state.ssq, self.rng_part)
        q = quiz(self.profile, [self.state.ls] * self.n_windows, self.rng_part)
        return Observation(buf, form, q, presentation, self.state)

    def baseline(self) -> Observation:
        return self._observe("2D")

    def respond(self, action: Action) -> Observation:
        action = Action(action)
        self.state = participant_transition(self.profile, self.state, action, self.rng_part, self.in_vr)
        self.in_vr = in_vr_after(action, self.in_vr)
        return self._observe("break" if action == Action.A1 else ("VR" if self.in_vr else "2D"))


def run_session(profile: ParticipantProfile, hp: Hyperparams = Hyperparams(), stage_len: float = 60.0,
                n_stages: int = 5, *, agent: Agent | None = None, policy: Policy | None = None,
                learn: bool = True, greedy: bool = False, seed=None, fs: float = 128.0,
                cfg: InferenceConfig = InferenceConfig()) -> list[StageRecord]:
    """Simulate one session and return ``n_stages + 1`` records.

    Stage 0 is the 2D baseline: it calibrates the band-power classifiers and
    sets the reference quiz score. Each later stage acts on the previous
    inferred state, lets the participant respond, re-infers the state from
    fresh EEG and questionnaire, and feeds the reward back to ``agent``
    (unless ``policy`` overrides action choice or ``learn`` is False).
    """
    if n_stages < 0:
        raise ValidationError("n_stages must be >= 0")
    rng_part, rng_eeg, rng_agent = session_streams(profile.rng_seed if seed is None else seed)
    person = SimulatedParticipant(profile, stage_len, fs, rng_part, rng_eeg)
    if agent is None and policy is None:
        agent = Agent(hp, rng_agent)

    obs = person.baseline()
    cal = calibrate(obs.eeg, cfg)
    state = infer_stage(obs.eeg, cal, obs.ssq_form, BASELINE_PRIOR, cfg).state
    s, q = compose_state(state), obs.quiz_correct
    records = [StageRecord(0, "2D", s, *state.as_tuple(), q, None, None, compose_state(obs.true_state))]
    for k in range(1, n_stages + 1):
        a = policy(s) if policy is not None else agent.act(s, greedy=greedy)
        obs = person.respond(a)
        state = infer_stage(obs.eeg, cal, obs.ssq_form, state, cfg).state
        s_new, q_new = compose_state(state), obs.quiz_correct
        r = compute_reward(RewardInput(q, q_new, s, s_new), hp)
        if learn and policy is None:
            agent.learn(s, a, r, s_new)
        records.append(StageRecord(k, obs.presentation, s_new, *state.as_tuple(), q_new, Action(a), r,
                                   compose_state(obs.true_state)))
        s, q = s_new, q_new
    return records


# -- evaluation -------------------------------------------------------------------


def composite(quiz_correct: int, state_id: int) -> float:
    """Quiz percentage averaged with state rank on 0..100 (s1 -> 0, s8 -> 100)."""
    return (10.0 * quiz_correct + (state_id - 1) * 100.0 / 7) / 2


def improvement(records: Sequence[StageRecord]) -> float | None:
    """Percent change of the composite from the baseline stage to the final stage.

    None when the baseline composite is zero.
    """
    if not records:
        raise ValidationError("no records")
    base = composite(records[0].quiz_correct, records[0].state)
    final = composite(records[-1].quiz_correct, records[-1].state)
    if base == 0:
        return None
    return (final - base) / base * 100.0


def mean_composite_reward(records: Sequence[StageRecord]) -> float:
    """Mean over adaptive stages of the absolute-scheme reward (quiz grade plus state level)."""
    hp = Hyperparams(reward_scheme="absolute")
    rs = [compute_reward(RewardInput(a.quiz_correct, b.quiz_correct, a.state, b.state), hp)
          for a, b in zip(records, records[1:])]
    return float(np.mean(rs)) if rs else 0.0


def train_agent(profile: ParticipantProfile, hp: Hyperparams = Hyperparams(), n_sessions: int = 200,
                stage_len: float = 24.0, n_stages: int = 5, seed: int = 0, agent: Agent | None = None,
                fs: float = 128.0, cfg: InferenceConfig = InferenceConfig()) -> Agent:
    """Run ``n_sessions`` sessions against one persistent Q-table."""
    agent = agent if agent is not None else Agent(hp, np.random.default_rng([seed, profile.rng_seed, 1]))
    for i in range(n_sessions):
        run_session(profile, hp, stage_len, n_stages, agent=agent, seed=[seed, profile.rng_seed, 2, i],
                    fs=fs, cfg=cfg)
    return agent


@dataclass(frozen=True)
class PairedComparison:
    adaptive: np.ndarray
    static: np.ndarray
    wins: int
    losses: int
    p_value: float

    @property
    def mean_difference(self) -> float:
        return float(np.mean(self.adaptive - self.static))


def compare_to_static(profile: ParticipantProfile, agent: Agent, n_sessions: int = 30,
                      stage_len: float = 24.0, n_stages: int = 5, seed: int = 1,
                      static: Action = Action.A5, fs: float = 128.0) -> PairedComparison:
    """Greedy learned policy vs a fixed action on identically seeded sessions.

    Significance is a one-sided sign test over the non-tied pairs.
    """
    hp = agent.hp
    frozen = Agent(hp, np.random.default_rng(0), agent.snapshot())
    ad, st = [], []
    for i in range(n_sessions):
        sd = [seed, profile.rng_seed, 3, i]
        ad.append(mean_composite_reward(run_session(profile, hp, stage_len, n_stages, agent=frozen,
                                                    learn=False, greedy=True, seed=sd, fs=fs)))
        st.append(mean_composite_reward(run_session(profile, hp, stage_len, n_stages,
                                                    policy=static_policy(static), seed=sd, fs=fs)))
    ad, st = np.array(ad), np.array(st)
    wins, losses = int(np.sum(ad > st)), int(np.sum(ad < st))
    p = stats.binomtest(wins, wins + losses, 0.5, alternative="greater").pvalue if wins + losses else 1.0
    return PairedComparison(ad, st, wins, losses, float(p))


# -- transcripts ------------------------------------------------------------------


def transcript_csv(records: Sequence[StageRecord]) -> str:
    out = io.StringIO()
    w = csv.DictWriter(out, fieldnames=TRANSCRIPT_COLUMNS, lineterminator="\n")
    w.writeheader()
    for r in records:
        w.writerow(r.row())
    return out.getvalue()


def read_transcript(text: str) -> list[dict]:
    return list(csv.DictReader(io.StringIO(text)))


def improvement_from_transcript(rows: Sequence[dict]) -> float | None:
    """Same metric as :func:`improvement`, recomputed from CSV rows."""
    if not rows:
        raise ValidationError("empty transcript")
    first, last = rows[0], rows[-1]
    base = composite(int(first["quiz"]), int(first["state_id"]))
    final = composite(int(last["quiz"]), int(last["state_id"]))
    return None if base == 0 else (final - base) / base * 100.0


# -- synthetic cohort -------------------------------------------------------------


def reference_cohort(seed: int = 0) -> list[ParticipantProfile]:
    """Fifteen profiles; P2 and P3 have clear best remedies in two states.

    P3 wakes up and engages in VR but recovers little from breaks or new
    content, so VR is the remedy when unengaged and drowsy (s2). P2 responds
    strongly to new content and weakly to VR alerting, so changing content is
    the remedy when engaged but drowsy in VR (s6). The rest vary mildly
    around the defaults; P4, P9 and P12 favour breaks.
    """
    base = ParticipantProfile()
    special = {
        2: dict(content_refresh=0.95, vr_alerting=0.3, break_recovery=0.2, drowsiness_drift=0.8,
                vr_ssq_susceptibility=0.1, base_learning=0.3, vr_learning_gain=0.6,
                drowsy_learning_factor=0.9, content_learning_gain=0.5),
        3: dict(vr_alerting=0.9, vr_learning_gain=0.6, break_recovery=0.2, content_refresh=0.2,
                drowsiness_drift=0.7, vr_ssq_susceptibility=0.05),
        4: dict(break_recovery=0.95, vr_alerting=0.2),
        9: dict(break_recovery=0.95, vr_alerting=0.2),
        12: dict(break_recovery=0.95, vr_alerting=0.2),
    }
    rng = np.random.default_rng(seed)
    out = []
    for i in range(1, 16):
        jitter = dict(
            quiz_skill=round(float(rng.uniform(0.35, 0.6)), 3),
            base_learning=round(float(rng.uniform(0.15, 0.35)), 3),
            eeg_scale=round(float(rng.uniform(0.7, 1.4)), 3),
        )
        jitter.update(special.get(i, {}))
        out.append(replace(base, name=f"P{i}", rng_seed=seed * 100 + i, **jitter))
    return out
