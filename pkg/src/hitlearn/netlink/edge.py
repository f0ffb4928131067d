"""Edge side: infer the state from each stage's EEG and ask the cloud what to do next.

Timing follows the last window of every stage. When that window starts the
edge spends ``inference_s`` voting the stage's labels, sends the state, and
waits for the action until the window ends. A late or missing reply means
the stage falls back to a5 (no change) and the miss is logged.
"""
from __future__ import annotations

import logging
import socket
import time
from dataclasses import dataclass, field
from typing import Protocol

from ..errors import DecodeError, ValidationError
from ..inference import InferenceConfig, calibrate, compose_state, infer_stage
from ..rl import Action, Hyperparams, RewardInput, compute_reward
from ..sim.session import BASELINE_PRIOR, StageRecord
from .cloud import CloudService
from .wire import ActionMessage, ErrorMessage, RewardMessage, StateMessage, decode, encode

log = logging.getLogger(__name__)

FALLBACK_ACTION = Action.A5


@dataclass(frozen=True)
class LatencyBudget:
    inference_s: float = 1.15
    transfer_s: float = 0.016
    policy_s: float = 0.12
    window_s: float = 4.0

    def __post_init__(self):
        if min(self.inference_s, self.transfer_s, self.policy_s) < 0 or not self.window_s > 0:
            raise ValidationError("latencies must be nonnegative and the window positive")
        if not self.inference_s + self.transfer_s + self.policy_s < self.window_s:
            raise ValidationError("inference + transfer + policy must fit inside one window")

    def nominal_turnaround(self) -> float:
        """Window start to action in hand: inference, uplink, policy, downlink."""
        return self.inference_s + 2 * self.transfer_s + self.policy_s


class Clock(Protocol):
    def now(self) -> float: ...
    def sleep(self, dt: float) -> None: ...


class RealClock:
    def now(self) -> float:
        return time.monotonic()

    def sleep(self, dt: float) -> None:
        if dt > 0:
            time.sleep(dt)


@dataclass
class VirtualClock:
    t: float = 0.0

    def now(self) -> float:
        return self.t

    def sleep(self, dt: float) -> None:
        self.t += max(0.0, dt)


class Transport(Protocol):
    def send(self, line: str) -> None: ...
    def request(self, line: str, timeout: float) -> str | None: ...
    def close(self) -> None: ...


class LoopbackTransport:
    """In-process link to a :class:`CloudService` with simulated latencies.

    A reply that would arrive after ``timeout`` is dropped and the clock
    advances by exactly ``timeout``.
    """

    def __init__(self, service: CloudService, clock: VirtualClock, transfer_s: float = 0.016,
                 policy_s: float = 0.12, extra_delay_s: float = 0.0):
        self.service = service
        self.clock = clock
        self.transfer_s = transfer_s
        self.policy_s = policy_s
        self.extra_delay_s = extra_delay_s
        self.sent: list[str] = []

    def send(self, line: str) -> None:
        self.sent.append(line)
        self.service.handle_line(line)

    def request(self, line: str, timeout: float) -> str | None:
        self.sent.append(line)
        reply = self.service.handle_line(line)
        delay = 2 * self.transfer_s + self.policy_s + self.extra_delay_s
        if delay > timeout:
            self.clock.sleep(timeout)
            return None
        self.clock.sleep(delay)
        return reply

    def close(self) -> None:
        pass


class TcpTransport:
    """Line client with bounded reconnects; stale replies are skipped by the caller."""

    def __init__(self, host: str, port: int, retries: int = 3, backoff_s: float = 0.2,
                 connect_timeout: float = 2.0, link_delay_s: float = 0.0):
        self.host, self.port = host, port
        self.link_delay_s = link_delay_s  # injected before every send
        self.retries = retries
        self.backoff_s = backoff_s
        self.connect_timeout = connect_timeout
        self._sock: socket.socket | None = None
        self._buf = b""

    def _connect(self) -> None:
        last = None
        for attempt in range(self.retries + 1):
            try:
                self._sock = socket.create_connection((self.host, self.port), timeout=self.connect_timeout)
                self._buf = b""
                return
            except OSError as e:
                last = e
                log.warning("connect to %s:%s failed (attempt %d): %s", self.host, self.port, attempt + 1, e)
                time.sleep(self.backoff_s * (attempt + 1))
        raise ConnectionError(f"cannot reach {self.host}:{self.port}: {last}")

    def _send_raw(self, line: str) -> None:
        if self.link_delay_s > 0:
            time.sleep(self.link_delay_s)
        for attempt in range(self.retries + 1):
            if self._sock is None:
                self._connect()
            try:
                self._sock.sendall(line.encode())
                return
            except OSError:
                self.close()
                if attempt == self.retries:
                    raise

    def send(self, line: str) -> None:
        self._send_raw(line)

    def read_line(self, timeout: float) -> str | None:
        deadline = time.monotonic() + timeout
        while b"\n" not in self._buf:
            left = deadline - time.monotonic()
            if left <= 0 or self._sock is None:
                return None
            self._sock.settimeout(left)
            try:
                chunk = self._sock.recv(4096)
            except socket.timeout:
                return None
            except OSError:
                self.close()
                return None
            if not chunk:
                self.close()
                return None
            self._buf += chunk
        line, _, self._buf = self._buf.partition(b"\n")
        return line.decode("utf-8", "replace") + "\n"

    def request(self, line: str, timeout: float) -> str | None:
        start = time.monotonic()
        self._send_raw(line)
        return self.read_line(timeout - (time.monotonic() - start))

    def close(self) -> None:
        if self._sock is not None:
            try:
                self._sock.close()
            finally:
                self._sock = None


@dataclass
class EdgeTranscript:
    records: list[StageRecord] = field(default_factory=list)
    turnarounds: list[float] = field(default_factory=list)  # seconds, one per adaptive stage
    missed_deadlines: list[int] = field(default_factory=list)  # stages that fell back

    @property
    def fallbacks(self) -> int:
        return len(self.missed_deadlines)


def _await_action(transport: Transport, request: str, stage: int, timeout: float,
                  clock: Clock) -> ActionMessage | None:
    """Send the state and return the matching ACTION, skipping stale or foreign lines."""
    start = clock.now()
    reply = transport.request(request, timeout)
    while reply is not None:
        try:
            msg = decode(reply)
        except DecodeError as e:
            log.warning("undecodable reply: %s", e)
            msg = None
        if isinstance(msg, ActionMessage) and msg.stage == stage:
            return msg
        if isinstance(msg, ErrorMessage):
            log.warning("cloud error: %s", msg.reason)
        left = timeout - (clock.now() - start)
        read_line = getattr(transport, "read_line", None)
        if left <= 0 or read_line is None:
            return None
        reply = read_line(left)
    return None


def edge_run(source, transport: Transport, participant_id: str, n_stages: int = 5,
             cfg: InferenceConfig = InferenceConfig(), budget: LatencyBudget = LatencyBudget(),
             clock: Clock | None = None, hp: Hyperparams = Hyperparams()) -> EdgeTranscript:
    """Drive one session.

    ``source`` provides ``baseline()`` and ``respond(action)``, each returning
    an observation with ``eeg``, ``ssq_form``, ``quiz_correct`` and
    ``presentation`` (see :class:`hitlearn.sim.session.SimulatedParticipant`).
    Rewards in the transcript are recomputed locally for reference.
    """
    clock = clock if clock is not None else RealClock()
    out = EdgeTranscript()

    obs = source.baseline()
    cal = calibrate(obs.eeg, cfg)
    state = infer_stage(obs.eeg, cal, obs.ssq_form, BASELINE_PRIOR, cfg).state
    s, q = compose_state(state), obs.quiz_correct
    out.records.append(StageRecord(0, obs.presentation, s, *state.as_tuple(), q, None, None,
                                   compose_state(getattr(obs, "true_state", state))))
    transport.send(encode(RewardMessage(participant_id, 0, q, s)))

    for k in range(1, n_stages + 1):
        t0 = clock.now()  # start of the previous stage's final window
        clock.sleep(budget.inference_s)
        req = encode(StateMessage(participant_id, k, *state.as_tuple(), int(time.time() * 1000)))
        left = budget.window_s - (clock.now() - t0)
        reply = _await_action(transport, req, k, left, clock)
        if reply is not None and clock.now() - t0 > budget.window_s:
            reply = None  # arrived after the window closed
        if reply is None:
            a = FALLBACK_ACTION
            out.missed_deadlines.append(k)
            out.turnarounds.append(budget.window_s)
            log.warning("%s stage %d: no action within the window, applying %s", participant_id, k, a.label)
        else:
            a = reply.action
            out.turnarounds.append(clock.now() - t0)
        clock.sleep(budget.window_s - (clock.now() - t0))

        obs = source.respond(a)
        new_state = infer_stage(obs.eeg, cal, obs.ssq_form, state, cfg).state
        s_new, q_new = compose_state(new_state), obs.quiz_correct
        r = compute_reward(RewardInput(q, q_new, s, s_new), hp)
        if reply is not None:
            # a fallback stage is not reported, so the cloud never credits an action it did not see applied
            transport.send(encode(RewardMessage(participant_id, k, q_new, s_new)))
        out.records.append(StageRecord(k, obs.presentation, s_new, *new_state.as_tuple(), q_new, a, r,
                                       compose_state(getattr(obs, "true_state", new_state))))
        state, s, q = new_state, s_new, q_new
    transport.close()
    return out

