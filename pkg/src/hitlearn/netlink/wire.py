"""Newline-delimited ``key=value;key=value`` messages between edge and cloud."""
from __future__ import annotations

import re
from dataclasses import dataclass, fields
from typing import Union

from ..errors import DecodeError, ValidationError
from ..rl import Action

_PID = re.compile(r"[A-Za-z0-9_.-]+")
_INT = re.compile(r"-?[0-9]+")


def _check_pid(pid) -> None:
    if not isinstance(pid, str) or not _PID.fullmatch(pid):
        raise ValidationError(f"participant_id must match {_PID.pattern}, got {pid!r}")


def _check_int(name: str, v, lo: int, hi: int | None = None) -> None:
    if isinstance(v, bool) or not isinstance(v, int):
        raise ValidationError(f"{name} must be an integer, got {v!r}")
    if v < lo or (hi is not None and v > hi):
        span = f"{lo}..{hi}" if hi is not None else f">= {lo}"
        raise ValidationError(f"{name} must be {span}, got {v}")


@dataclass(frozen=True)
class StateMessage:
    participant_id: str
    stage: int  # the stage this state asks an action for
    ls: int
    ds: int
    ssq: int
    sent_at_ms: int
    type = "STATE"

    def __post_init__(self):
        _check_pid(self.participant_id)
        _check_int("stage", self.stage, 1)
        for name in ("ls", "ds", "ssq"):
            _check_int(name, getattr(self, name), 0, 1)
        _check_int("sent_at_ms", self.sent_at_ms, 0)

    @property
    def state_id(self) -> int:
        return 1 + 4 * self.ls + 2 * self.ds + self.ssq


@dataclass(frozen=True)
class ActionMessage:
    participant_id: str
    stage: int
    action: Action
    policy_version: int
    type = "ACTION"

    def __post_init__(self):
        _check_pid(self.participant_id)
        _check_int("stage", self.stage, 1)
        if not isinstance(self.action, Action):
            object.__setattr__(self, "action", Action.parse(self.action) if isinstance(self.action, str)
                               else Action(self.action))
        _check_int("policy_version", self.policy_version, 0)


@dataclass(frozen=True)
class RewardMessage:
    participant_id: str
    stage: int  # 0 reports the baseline
    quiz_correct: int
    state_id: int
    type = "REWARD"

    def __post_init__(self):
        _check_pid(self.participant_id)
        _check_int("stage", self.stage, 0)
        _check_int("quiz_correct", self.quiz_correct, 0, 10)
        _check_int("state_id", self.state_id, 1, 8)


@dataclass(frozen=True)
class ErrorMessage:
    reason: str
    type = "ERROR"

    def __post_init__(self):
        # the reason travels as free text up to the end of the line
        clean = re.sub(r"[;\r\n]+", " ", str(self.reason)).strip() or "unspecified"
        object.__setattr__(self, "reason", clean)


Message = Union[StateMessage, ActionMessage, RewardMessage, ErrorMessage]
MESSAGE_TYPES = {cls.type: cls for cls in (StateMessage, ActionMessage, RewardMessage, ErrorMessage)}


def _format(v) -> str:
    if isinstance(v, Action):
        return v.label
    return str(v)


def encode(msg: Message) -> str:
    parts = [f"type={msg.type}"] + [f"{f.name}={_format(getattr(msg, f.name))}" for f in fields(msg)]
    return ";".join(parts) + "\n"


def decode(line: str | bytes) -> Message:
    if isinstance(line, bytes):
        try:
            line = line.decode("utf-8")
        except UnicodeDecodeError as e:
            raise DecodeError("line is not valid UTF-8") from e
    text = line.rstrip("\r\n")
    if not text:
        raise DecodeError("empty line")
    if text.startswith("type=ERROR;reason="):
        return ErrorMessage(text[len("type=ERROR;reason="):])

    items: dict[str, str] = {}
    for part in text.split(";"):
        key, sep, value = part.partition("=")
        if not sep:
            raise DecodeError(f"malformed field {part!r}", field=key or None)
        if key in items:
            raise DecodeError(f"duplicate field {key}", field=key)
        items[key] = value

    kind = items.pop("type", None)
    if kind is None:
        raise DecodeError("missing field type", field="type")
    cls = MESSAGE_TYPES.get(kind)
    if cls is None:
        raise DecodeError(f"unknown message type {kind!r}", field="type")

    kwargs = {}
    for f in fields(cls):
        if f.name not in items:
            raise DecodeError(f"missing field {f.name}", field=f.name)
        raw = items.pop(f.name)
        if f.name == "action":
            try:
                kwargs[f.name] = Action.parse(raw)
            except ValidationError as e:
                raise DecodeError(f"action out of range: {raw!r}", field="action") from e
        elif f.name in ("participant_id", "reason"):
            kwargs[f.name] = raw
        else:
            if not _INT.fullmatch(raw):
                raise DecodeError(f"{f.name} must be an integer, got {raw!r}", field=f.name)
            kwargs[f.name] = int(raw)
    if items:
        extra = sorted(items)[0]
        raise DecodeError(f"unexpected field {extra}", field=extra)
    try:
        return cls(**kwargs)
    except ValidationError as e:
        bad = next((name for name in kwargs if str(e).startswith(name)), None)
        raise DecodeError(str(e), field=bad) from e
