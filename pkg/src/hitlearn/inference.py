"""From per-window measurements and questionnaires to the binary mental state."""
from __future__ import annotations

import re
from collections import Counter
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from . import dsp
from .errors import ConfigurationError, ValidationError

# Symptom rows in questionnaire order, with subfactor membership (N, O, D).
SSQ_SYMPTOMS = (
    ("general_discomfort", "General discomfort", (1, 1, 0)),
    ("fatigue", "Fatigue", (0, 1, 0)),
    ("headache", "Headache", (0, 1, 0)),
    ("eye_strain", "Eye strain", (0, 1, 0)),
    ("difficulty_focusing", "Difficulty focusing", (0, 1, 1)),
    ("increased_salivation", "Increased salivation", (1, 0, 0)),
    ("sweating", "Sweating", (1, 0, 0)),
    ("nausea", "Nausea", (1, 0, 1)),
    ("concentrating", "Concentrating", (1, 1, 0)),
    ("fullness_of_head", "Fullness of head", (0, 0, 1)),
    ("blurred_vision", "Blurred vision", (0, 1, 1)),
    ("dizzy_eyes_open", "Dizzy (eyes open)", (0, 0, 1)),
    ("dizzy_eyes_closed", "Dizzy (eyes closed)", (0, 0, 1)),
    ("vertigo", "Vertigo", (0, 0, 1)),
    ("stomach_awareness", "Stomach awareness", (1, 0, 0)),
    ("burping", "Burping", (1, 0, 0)),
)
SSQ_KEYS = tuple(key for key, _, _ in SSQ_SYMPTOMS)
SSQ_MEMBERSHIP = np.array([m for _, _, m in SSQ_SYMPTOMS], dtype=int)  # [16, 3]

N_WEIGHT = 9.54
O_WEIGHT = 7.58
D_WEIGHT = 13.92
TS_WEIGHT = 3.74
TS_MAX = 3 * int(SSQ_MEMBERSHIP.sum()) * TS_WEIGHT  # 235.62
SSQ_THRESHOLD = TS_MAX / 4

LS_MULTIPLIER = 1.35
DS_MULTIPLIER = 1.5


def symptom_key(name: str) -> str:
    """Normalise a symptom label, e.g. ``"Dizzy (eyes open)"`` -> ``"dizzy_eyes_open"``."""
    return re.sub(r"[^a-z0-9]+", "_", name.strip().lower()).strip("_")


@dataclass(frozen=True)
class MentalState:
    ls: int  # 1 = learning
    ds: int  # 1 = alert
    ssq: int  # 1 = not dizzy

    def __post_init__(self):
        for name in ("ls", "ds", "ssq"):
            if getattr(self, name) not in (0, 1):
                raise ValidationError(f"{name} must be 0 or 1, got {getattr(self, name)!r}")

    def as_tuple(self) -> tuple[int, int, int]:
        return (self.ls, self.ds, self.ssq)


def compose_state(ms: MentalState) -> int:
    """State id 1..8; s8 is (learning, alert, not dizzy), s1 the opposite."""
    return 1 + 4 * ms.ls + 2 * ms.ds + ms.ssq


def decompose_state(state_id: int) -> MentalState:
    if state_id not in range(1, 9):
        raise ValidationError(f"state id must be in 1..8, got {state_id!r}")
    k = state_id - 1
    return MentalState(k >> 2 & 1, k >> 1 & 1, k & 1)


# -- questionnaire ------------------------------------------------------------


@dataclass(frozen=True)
class SsqResponse:
    severities: tuple[int, ...]

    def __post_init__(self):
        sev = tuple(self.severities)
        if len(sev) != len(SSQ_SYMPTOMS):
            raise ValidationError(f"expected {len(SSQ_SYMPTOMS)} severities, got {len(sev)}")
        for key, v in zip(SSQ_KEYS, sev):
            if isinstance(v, bool) or not isinstance(v, (int, np.integer)) or not 0 <= v <= 3:
                raise ValidationError(f"severity for {key} must be an integer 0..3, got {v!r}")
        object.__setattr__(self, "severities", tuple(int(v) for v in sev))

    @classmethod
    def from_mapping(cls, items: dict[str, int]) -> "SsqResponse":
        by_key = {symptom_key(k): v for k, v in items.items()}
        missing = [k for k in SSQ_KEYS if k not in by_key]
        if missing:
            raise ValidationError(f"missing symptoms: {', '.join(missing)}")
        return cls(tuple(by_key[k] for k in SSQ_KEYS))


@dataclass(frozen=True)
class SsqScore:
    n_t: int
    o_t: int
    d_t: int
    n: float
    o: float
    d: float
    ts: float


def ssq_score(r: SsqResponse) -> SsqScore:
    n_t, o_t, d_t = (int(v) for v in np.asarray(r.severities) @ SSQ_MEMBERSHIP)
    return SsqScore(
        n_t, o_t, d_t,
        n=n_t * N_WEIGHT,
        o=o_t * O_WEIGHT,
        d=d_t * D_WEIGHT,
        ts=(n_t + o_t + d_t) * TS_WEIGHT,
    )


def ssq_binary(score: SsqScore | float, threshold: float = SSQ_THRESHOLD) -> int:
    """0 (dizzy) only when total severity strictly exceeds the threshold."""
    ts = score.ts if isinstance(score, SsqScore) else float(score)
    return 0 if ts > threshold else 1


def kss_to_binary(kss: int) -> int:
    if isinstance(kss, bool) or int(kss) != kss or not 1 <= kss <= 9:
        raise ValidationError(f"KSS must be an integer 1..9, got {kss!r}")
    return 1 if kss <= 6 else 0


# -- reference classifiers ------------------------------------------------------


@dataclass(frozen=True)
class ClassifierRef:
    """Threshold classifier on a band power relative to a per-participant baseline.

    ``kind="external"`` delegates to ``predict`` (any callable taking the
    window's :class:`~hitlearn.dsp.BandPower` and returning a bit), which is
    the slot a trained model would occupy.
    """

    baseline: float
    multiplier: float
    kind: str = "reference-threshold"
    predict: Callable[[dsp.BandPower], int] | None = field(default=None, compare=False)

    def __post_init__(self):
        if self.kind not in ("reference-threshold", "external"):
            raise ConfigurationError(f"unknown classifier kind {self.kind!r}")
        if self.kind == "external" and self.predict is None:
            raise ConfigurationError("external classifier needs a predict callable")
        if self.kind == "reference-threshold" and not self.baseline > 0:
            raise ConfigurationError(f"baseline band power must be positive, got {self.baseline}")

    def exceeds(self, power: float) -> bool:
        # inclusive boundary; the relative slack absorbs rounding in multiplier * baseline
        return power >= self.multiplier * self.baseline * (1 - 1e-12)


def classify_ls(window_power: dsp.BandPower, clf: ClassifierRef) -> int:
    if clf.kind == "external":
        return int(clf.predict(window_power))
    if not clf.multiplier > 1:
        raise ConfigurationError("learning-state multiplier must exceed 1")
    return 1 if clf.exceeds(window_power.value) else 0


def classify_ds(window_power_low: dsp.BandPower, clf: ClassifierRef) -> int:
    if clf.kind == "external":
        return int(clf.predict(window_power_low))
    return 0 if clf.exceeds(window_power_low.value) else 1


def majority_vote(labels: Sequence[int], previous: int) -> int:
    """Strict majority of ``labels``; ties and empty input keep ``previous``."""
    counts = Counter(int(v) for v in labels)
    ones, zeros = counts.get(1, 0), counts.get(0, 0)
    if ones > zeros:
        return 1
    if zeros > ones:
        return 0
    return previous


# -- stage-level pipeline -------------------------------------------------------


@dataclass(frozen=True)
class InferenceConfig:
    ls_multiplier: float = LS_MULTIPLIER
    ds_multiplier: float = DS_MULTIPLIER
    ssq_threshold: float = SSQ_THRESHOLD
    filter_lo: float = 0.5
    filter_hi: float = 40.0


@dataclass(frozen=True)
class Calibration:
    ls: ClassifierRef
    ds: ClassifierRef


@dataclass(frozen=True)
class StageResult:
    state: MentalState
    ls_labels: tuple[int, ...]
    ds_labels: tuple[int, ...]
    ssq: SsqScore | None


def window_powers(buf: dsp.SampleBuffer, cfg: InferenceConfig = InferenceConfig()):
    """Band-limit a stage buffer and return ``[(ls_power, ds_power), ...]`` per window."""
    filtered = dsp.band_limit(buf, cfg.filter_lo, cfg.filter_hi)
    return [tuple(dsp.band_powers(w, [dsp.LS_BAND, dsp.DS_BAND])) for w in dsp.segment_windows(filtered)]


def calibrate(baseline: dsp.SampleBuffer, cfg: InferenceConfig = InferenceConfig()) -> Calibration:
    """Per-participant reference levels from a baseline recording."""
    powers = window_powers(baseline, cfg)
    if not powers:
        raise ValidationError("baseline recording shorter than one window")
    ls_base = float(np.mean([p[0].value for p in powers]))
    ds_base = float(np.mean([p[1].value for p in powers]))
    return Calibration(ClassifierRef(ls_base, cfg.ls_multiplier), ClassifierRef(ds_base, cfg.ds_multiplier))


def label_windows(powers, cal: Calibration) -> tuple[list[int], list[int]]:
    ls = [classify_ls(p_ls, cal.ls) for p_ls, _ in powers]
    ds = [classify_ds(p_ds, cal.ds) for _, p_ds in powers]
    return ls, ds


def infer_stage(buf: dsp.SampleBuffer, cal: Calibration, ssq_response: SsqResponse | None,
                previous: MentalState, cfg: InferenceConfig = InferenceConfig()) -> StageResult:
    """Vote the stage's window labels into one state.

    The final window is labelled but left out of the vote: its time slot is
    spent shipping the state upstream.
    """
    ls_labels, ds_labels = label_windows(window_powers(buf, cfg), cal)
    ls = majority_vote(ls_labels[:-1], previous.ls)
    ds = majority_vote(ds_labels[:-1], previous.ds)
    if ssq_response is None:
        score, ssq = None, previous.ssq
    else:
        score = ssq_score(ssq_response)
        ssq = ssq_binary(score, cfg.ssq_threshold)
    return StageResult(MentalState(ls, ds, ssq), tuple(ls_labels), tuple(ds_labels), score)
