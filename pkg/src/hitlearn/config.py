"""INI configuration for simulations and the edge/cloud processes.

Every problem found while loading is collected and reported together.

Example::

    [rl]
    alpha = 0.05
    gamma = 0.001

    [session]
    stage_len_s = 60
    n_stages = 5
    seed = 7

    [participant.P1]
    vr_learning_gain = 0.6
"""
from __future__ import annotations

import configparser
import hashlib
import json
import re
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

from .errors import ConfigurationError, ValidationError
from .inference import InferenceConfig
from .rl import Hyperparams
from .sim.participant import ParticipantProfile
from .sim.session import MIN_STAGE_S


@dataclass(frozen=True)
class SessionSettings:
    stage_len_s: float = 60.0
    n_stages: int = 5
    fs: float = 128.0
    seed: int = 0
    n_train_sessions: int = 200  # sessions run on each participant's table before the reported one


@dataclass(frozen=True)
class Paths:
    output_dir: str = "runs"
    qtable_dir: str = "qtables"


@dataclass(frozen=True)
class Config:
    rl: Hyperparams = field(default_factory=Hyperparams)
    session: SessionSettings = field(default_factory=SessionSettings)
    inference: InferenceConfig = field(default_factory=InferenceConfig)
    wcst_switch_prob: float = 0.1
    paths: Paths = field(default_factory=Paths)
    participants: tuple[ParticipantProfile, ...] = ()

    def as_dict(self) -> dict:
        d = asdict(self)
        d["participants"] = [asdict(p) for p in self.participants]
        return d

    def digest(self) -> str:
        """sha256 of the canonical JSON form; identical settings give identical digests."""
        text = json.dumps(self.as_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(text.encode()).hexdigest()


_KNOWN_SECTIONS = ("rl", "session", "inference", "wcst", "paths")


def _convert(raw: str, like, where: str, errors: list[str]):
    try:
        if isinstance(like, bool):
            return raw.strip().lower() in ("1", "true", "yes", "on")
        if isinstance(like, int):
            return int(raw)
        if isinstance(like, float):
            return float(raw)
        if isinstance(like, tuple):
            return tuple(int(v) for v in raw.replace(",", " ").split())
        return raw.strip()
    except ValueError:
        errors.append(f"{where}: cannot parse {raw!r} as {type(like).__name__}")
        return like


def _section(parser, name: str, cls, errors: list[str], defaults=None) -> dict:
    base = defaults if defaults is not None else cls()
    known = {f.name: getattr(base, f.name) for f in fields(cls)}
    out = dict(known)
    if parser.has_section(name):
        for key, raw in parser.items(name):
            if key not in known:
                errors.append(f"[{name}] unknown key {key!r}")
                continue
            out[key] = _convert(raw, known[key], f"[{name}] {key}", errors)
    return out


def _build(cls, kwargs: dict, where: str, errors: list[str]):
    try:
        return cls(**kwargs)
    except (ValidationError, ConfigurationError) as e:
        errors.extend(f"[{where}] {msg}" for msg in str(e).split("; "))
        return None


def parse_config(text: str) -> Config:
    parser = configparser.ConfigParser(interpolation=None)
    try:
        parser.read_string(text)
    except configparser.Error as e:
        raise ConfigurationError(f"config syntax: {e}") from e
    errors: list[str] = []

    for name in parser.sections():
        if name not in _KNOWN_SECTIONS and not name.startswith("participant."):
            errors.append(f"unknown section [{name}]")

    rl_kw = _section(parser, "rl", Hyperparams, errors)
    rl_problems = Hyperparams.problems(_Loose(rl_kw))
    errors.extend(f"[rl] {msg}" for msg in rl_problems)
    rl = None if rl_problems else Hyperparams(**rl_kw)

    sess = SessionSettings(**_section(parser, "session", SessionSettings, errors))
    if sess.stage_len_s < MIN_STAGE_S:
        errors.append(f"[session] stage_len_s must be >= {MIN_STAGE_S}, got {sess.stage_len_s}")
    if sess.n_stages < 0:
        errors.append(f"[session] n_stages must be >= 0, got {sess.n_stages}")
    if not sess.fs > 2 * InferenceConfig().filter_hi:
        errors.append(f"[session] fs must exceed {2 * InferenceConfig().filter_hi} Hz, got {sess.fs}")
    if sess.n_train_sessions < 0:
        errors.append(f"[session] n_train_sessions must be >= 0, got {sess.n_train_sessions}")

    inf = InferenceConfig(**_section(parser, "inference", InferenceConfig, errors))
    if not inf.ls_multiplier > 1:
        errors.append(f"[inference] ls_multiplier must exceed 1, got {inf.ls_multiplier}")
    if not inf.ds_multiplier > 1:
        errors.append(f"[inference] ds_multiplier must exceed 1, got {inf.ds_multiplier}")
    if not 0 <= inf.ssq_threshold <= 235.62:
        errors.append(f"[inference] ssq_threshold must be in [0, 235.62], got {inf.ssq_threshold}")
    if not 0 < inf.filter_lo < inf.filter_hi:
        errors.append("[inference] need 0 < filter_lo < filter_hi")

    switch = 0.1
    if parser.has_section("wcst"):
        for key, raw in parser.items("wcst"):
            if key != "switch_prob":
                errors.append(f"[wcst] unknown key {key!r}")
                continue
            switch = _convert(raw, 0.1, "[wcst] switch_prob", errors)
    if not 0 <= switch <= 1:
        errors.append(f"[wcst] switch_prob must be in [0, 1], got {switch}")

    paths = Paths(**_section(parser, "paths", Paths, errors))

    participants = []
    for i, name in enumerate(n for n in parser.sections() if n.startswith("participant.")):
        pid = name.split(".", 1)[1]
        if not re.fullmatch(r"[A-Za-z0-9_.-]+", pid):
            errors.append(f"[{name}] participant id may use only letters, digits, '_', '.' and '-'")
        kw = _section(parser, name, ParticipantProfile, errors, ParticipantProfile(name=pid))
        kw["name"] = pid
        if not parser.has_option(name, "rng_seed"):
            kw["rng_seed"] = sess.seed * 1000 + i + 1
        p = _build(ParticipantProfile, kw, name, errors)
        if p is not None:
            participants.append(p)

    if errors:
        raise ConfigurationError("\n".join(errors))
    return Config(rl, sess, inf, switch, paths, tuple(participants))


class _Loose:
    """Attribute bag so validation can run before construction."""

    def __init__(self, d: dict):
        self.__dict__.update(d)


def load_config(path: str | Path | None) -> Config:
    if path is None:
        return Config()
    try:
        text = Path(path).read_text()
    except OSError as e:
        raise ConfigurationError(f"cannot read config {path}: {e}") from e
    return parse_config(text)
