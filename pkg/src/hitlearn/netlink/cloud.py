"""Cloud side: one Q-learning agent per participant behind a line protocol.

:class:`CloudService` holds the protocol logic and is transport-free, so the
same object serves the asyncio TCP server and the in-process loopback.

Bookkeeping per participant:

* ``REWARD`` for stage 0 records the baseline (state, quiz) and starts a session.
* ``STATE`` for stage k picks an action for the carried state and remembers it.
  A repeated ``STATE`` for the same stage gets the same answer.
* ``REWARD`` for stage k scores the transition from the previous (state, quiz)
  and updates the Q-table. Repeats are ignored.
* If a ``STATE`` arrives while the previous stage's action was never
  rewarded, the edge did not apply it (deadline miss). That action is dropped
  unscored and the next reward only re-anchors the previous (state, quiz).
"""
from __future__ import annotations

import asyncio
import json
import logging
import os
import tempfile
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ..errors import DecodeError, HitlError
from ..rl import Action, Agent, Hyperparams, QTable, RewardInput, compute_reward, load_qtable, save_qtable
from .wire import ActionMessage, ErrorMessage, Message, RewardMessage, StateMessage, decode, encode

log = logging.getLogger(__name__)


@dataclass
class ParticipantSlot:
    agent: Agent
    prev_state: int | None = None
    prev_quiz: int | None = None
    # stage -> (state the action was chosen for, action)
    pending: dict[int, tuple[int, Action]] = field(default_factory=dict)
    last_rewarded: int = -1

    def sidecar(self) -> dict:
        return {
            "prev_state": self.prev_state,
            "prev_quiz": self.prev_quiz,
            "pending": {str(k): [s, int(a)] for k, (s, a) in sorted(self.pending.items())},
            "last_rewarded": self.last_rewarded,
        }


def _atomic_write(path: Path, data: bytes) -> None:
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=path.name, suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as f:
            f.write(data)
        os.replace(tmp, path)
    except BaseException:
        Path(tmp).unlink(missing_ok=True)
        raise


class CloudService:
    """Per-participant Q-learning behind STATE/ACTION/REWARD messages.

    With ``qtable_dir`` set, every participant's table and bookkeeping are
    checkpointed after each change and reloaded on first contact, so a
    restarted service resumes where the previous one stopped.
    """

    def __init__(self, hp: Hyperparams = Hyperparams(), qtable_dir: str | os.PathLike | None = None,
                 seed: int = 0):
        self.hp = hp
        self.qtable_dir = Path(qtable_dir) if qtable_dir is not None else None
        if self.qtable_dir is not None:
            self.qtable_dir.mkdir(parents=True, exist_ok=True)
        self.seed = seed
        self.slots: dict[str, ParticipantSlot] = {}

    # -- persistence --

    def _paths(self, pid: str) -> tuple[Path, Path]:
        return self.qtable_dir / f"{pid}.qtab", self.qtable_dir / f"{pid}.json"

    def _rng(self, pid: str, n_updates: int) -> np.random.Generator:
        # derived from the participant and table age so a restart does not replay old draws
        return np.random.default_rng([self.seed, n_updates, *pid.encode()])

    def slot(self, pid: str) -> ParticipantSlot:
        if pid in self.slots:
            return self.slots[pid]
        table = None
        meta = {}
        if self.qtable_dir is not None:
            qpath, jpath = self._paths(pid)
            if qpath.exists():
                table = load_qtable(qpath.read_bytes())
                if jpath.exists():
                    meta = json.loads(jpath.read_text())
        n = table.n_updates if table is not None else 0
        slot = ParticipantSlot(Agent(self.hp, self._rng(pid, n), table))
        if meta:
            slot.prev_state = meta.get("prev_state")
            slot.prev_quiz = meta.get("prev_quiz")
            slot.pending = {int(k): (s, Action(a)) for k, (s, a) in meta.get("pending", {}).items()}
            slot.last_rewarded = meta.get("last_rewarded", -1)
        self.slots[pid] = slot
        return slot

    def checkpoint(self, pid: str) -> None:
        if self.qtable_dir is None:
            return
        slot = self.slots[pid]
        qpath, jpath = self._paths(pid)
        _atomic_write(qpath, save_qtable(slot.agent.snapshot()))
        _atomic_write(jpath, (json.dumps(slot.sidecar(), sort_keys=True) + "\n").encode())

    def table(self, pid: str) -> QTable:
        return self.slot(pid).agent.snapshot()

    def policy_version(self, pid: str) -> int:
        return self.slot(pid).agent.n_updates

    # -- protocol --

    def on_state(self, msg: StateMessage) -> ActionMessage:
        slot = self.slot(msg.participant_id)
        if msg.stage in slot.pending:
            _, a = slot.pending[msg.stage]
        else:
            missed = [k for k in slot.pending if k < msg.stage and k > slot.last_rewarded]
            if missed:
                log.info("%s: actions for stages %s were not applied; dropping them",
                         msg.participant_id, missed)
                for k in missed:
                    del slot.pending[k]
                slot.prev_state = slot.prev_quiz = None
            a = slot.agent.act(msg.state_id)
            slot.pending[msg.stage] = (msg.state_id, a)
            self.checkpoint(msg.participant_id)
        return ActionMessage(msg.participant_id, msg.stage, a, slot.agent.n_updates)

    def on_reward(self, msg: RewardMessage) -> ErrorMessage | None:
        slot = self.slot(msg.participant_id)
        if msg.stage == 0:
            slot.prev_state, slot.prev_quiz = msg.state_id, msg.quiz_correct
            slot.pending.clear()
            slot.last_rewarded = 0
            self.checkpoint(msg.participant_id)
            return None
        if msg.stage <= slot.last_rewarded:
            return None  # duplicate
        if msg.stage not in slot.pending:
            return ErrorMessage(f"no action issued for stage {msg.stage}")
        s, a = slot.pending.pop(msg.stage)
        if slot.prev_quiz is not None and slot.prev_state == s:
            r = compute_reward(RewardInput(slot.prev_quiz, msg.quiz_correct, s, msg.state_id), self.hp)
            slot.agent.learn(s, a, r, msg.state_id)
        slot.prev_state, slot.prev_quiz = msg.state_id, msg.quiz_correct
        slot.last_rewarded = msg.stage
        self.checkpoint(msg.participant_id)
        return None

    def handle(self, msg: Message) -> Message | None:
        if isinstance(msg, StateMessage):
            return self.on_state(msg)
        if isinstance(msg, RewardMessage):
            return self.on_reward(msg)
        return ErrorMessage(f"unexpected message type {msg.type}")

    def handle_line(self, line: str | bytes) -> str | None:
        """Decode, dispatch and encode; malformed input yields an ERROR line."""
        try:
            reply = self.handle(decode(line))
        except DecodeError as e:
            reply = ErrorMessage(f"{e.field or 'line'}: {e}")
        except HitlError as e:
            reply = ErrorMessage(str(e))
        return encode(reply) if reply is not None else None


def participant_of(line: bytes) -> str | None:
    for part in line.decode("utf-8", "replace").split(";"):
        key, _, value = part.partition("=")
        if key == "participant_id":
            return value.strip()
    return None


async def serve(service: CloudService, host: str = "127.0.0.1", port: int = 0,
                policy_s: float = 0.0, latency_s: float = 0.0) -> asyncio.base_events.Server:
    """Start the line server; ``policy_s`` and ``latency_s`` delay each ACTION reply."""
    locks: dict[str, asyncio.Lock] = {}

    async def handle_conn(reader: asyncio.StreamReader, writer: asyncio.StreamWriter):
        try:
            while True:
                line = await reader.readline()
                if not line:
                    break
                pid = participant_of(line) or ""
                lock = locks.setdefault(pid, asyncio.Lock())
                async with lock:
                    reply = service.handle_line(line)
                    if reply is not None and reply.startswith("type=ACTION"):
                        await asyncio.sleep(policy_s + latency_s)
                if reply is not None:
                    writer.write(reply.encode())
                    await writer.drain()
        except (ConnectionError, asyncio.IncompleteReadError):
            pass
        finally:
            writer.close()

    return await asyncio.start_server(handle_conn, host, port)


async def cloud_run(service: CloudService, host: str, port: int, policy_s: float = 0.0,
                    latency_s: float = 0.0, ready: "asyncio.Future | None" = None) -> None:
    server = await serve(service, host, port, policy_s, latency_s)
    addr = server.sockets[0].getsockname()
    log.info("cloud listening on %s:%s", addr[0], addr[1])
    if ready is not None:
        ready.set_result(addr)
    async with server:
        await server.serve_forever()
