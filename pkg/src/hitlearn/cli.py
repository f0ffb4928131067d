"""Command-line entry points.

Exit codes: 0 success, 1 invalid input or configuration, 2 runtime failure,
3 missed deadline or I/O failure.
"""
from __future__ import annotations

import argparse
import asyncio
import csv
import hashlib
import io
import json
import logging
import sys
from contextlib import contextmanager
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import dsp
from .config import Config, load_config
from .errors import HitlError, ValidationError
from .inference import SSQ_KEYS, SSQ_THRESHOLD, SsqResponse, ssq_binary, ssq_score, symptom_key
from .netlink.cloud import CloudService, cloud_run
from .netlink.edge import LatencyBudget, LoopbackTransport, RealClock, TcpTransport, VirtualClock, edge_run
from .rl import N_STATES, Action, save_qtable
from .sim import wcst
from .sim.participant import ParticipantProfile
from .sim.session import (SimulatedParticipant, improvement, mean_composite_reward, run_session,
                          session_streams, static_policy, reference_cohort, train_agent, transcript_csv)

log = logging.getLogger("hitlearn")

EXIT_OK, EXIT_INVALID, EXIT_RUNTIME, EXIT_IO = 0, 1, 2, 3


@contextmanager
def _open_out(path: str | None):
    if path is None or path == "-":
        yield sys.stdout
    else:
        Path(path).parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w", newline="") as f:
            yield f


def _read_text(path: str) -> str:
    if path == "-":
        return sys.stdin.read()
    return Path(path).read_text()


def _host_port(text: str) -> tuple[str, int]:
    host, sep, port = text.rpartition(":")
    if not sep or not port.isdigit():
        raise ValidationError(f"expected host:port, got {text!r}")
    return host or "127.0.0.1", int(port)


def _cohort(cfg: Config) -> list[ParticipantProfile]:
    return list(cfg.participants) or reference_cohort(cfg.session.seed)


def _find_participant(cfg: Config, name: str) -> ParticipantProfile:
    for p in _cohort(cfg):
        if p.name == name:
            return p
    raise ValidationError(f"unknown participant {name!r}")


# -- run-sim ----------------------------------------------------------------------


def _policy_table(agent) -> dict:
    table = agent.snapshot()
    return {f"s{s}": [a.label for a in table.greedy_actions(s)] for s in range(1, N_STATES + 1)}


def cmd_run_sim(args) -> int:
    cfg = load_config(args.config)
    if args.sessions is not None:
        cfg = replace(cfg, session=replace(cfg.session, n_train_sessions=args.sessions))
    if args.stages is not None:
        cfg = replace(cfg, session=replace(cfg.session, n_stages=args.stages))
    out = Path(args.out or cfg.paths.output_dir)
    (out / "transcripts").mkdir(parents=True, exist_ok=True)
    (out / "qtables").mkdir(parents=True, exist_ok=True)
    ss = cfg.session

    people = []
    for p in _cohort(cfg):
        agent = train_agent(p, cfg.rl, ss.n_train_sessions, ss.stage_len_s, ss.n_stages, seed=ss.seed,
                            fs=ss.fs, cfg=cfg.inference)
        seed = [ss.seed, p.rng_seed, 9]
        recs = run_session(p, cfg.rl, ss.stage_len_s, ss.n_stages, agent=agent, seed=seed, fs=ss.fs,
                           cfg=cfg.inference)
        static = run_session(p, cfg.rl, ss.stage_len_s, ss.n_stages, policy=static_policy(Action.A5),
                             seed=seed, fs=ss.fs, cfg=cfg.inference)
        text = transcript_csv(recs)
        (out / "transcripts" / f"{p.name}.csv").write_text(text)
        qbytes = save_qtable(agent.snapshot())
        (out / "qtables" / f"{p.name}.qtab").write_bytes(qbytes)
        people.append({
            "name": p.name,
            "improvement_pct": improvement(recs),
            "static_a5_improvement_pct": improvement(static),
            "mean_composite_reward": mean_composite_reward(recs),
            "static_a5_mean_composite_reward": mean_composite_reward(static),
            "policy": _policy_table(agent),
            "records": [r.row() for r in recs],
            "transcript": f"transcripts/{p.name}.csv",
            "qtable": f"qtables/{p.name}.qtab",
            "qtable_sha256": hashlib.sha256(qbytes).hexdigest(),
        })
        log.info("%s: improvement %s", p.name, people[-1]["improvement_pct"])

    def mean(key):
        vals = [x[key] for x in people if x[key] is not None]
        return float(np.mean(vals)) if vals else None

    report = {
        "config_sha256": cfg.digest(),
        "config": cfg.as_dict(),
        "improvement_metric": "composite = (quiz% + (state_id - 1) / 7 * 100) / 2; "
                              "improvement = (final - baseline) / baseline * 100",
        "mean_improvement_pct": mean("improvement_pct"),
        "mean_static_a5_improvement_pct": mean("static_a5_improvement_pct"),
        "participants": people,
    }
    (out / "report.json").write_text(json.dumps(report, sort_keys=True, indent=2) + "\n")
    print(f"wrote {out / 'report.json'}: mean improvement {report['mean_improvement_pct']}")
    return EXIT_OK


# -- score-ssq --------------------------------------------------------------------


def parse_ssq_csv(text: str) -> list[SsqResponse]:
    """Either ``symptom,severity`` rows (one form) or one column per symptom (one form per row)."""
    rows = list(csv.reader(io.StringIO(text)))
    rows = [r for r in rows if any(c.strip() for c in r)]
    if not rows:
        raise ValidationError("no questionnaire data")
    header = [symptom_key(c) for c in rows[0]]

    def severity(raw: str, where: str) -> int:
        try:
            return int(raw.strip())
        except ValueError:
            raise ValidationError(f"{where}: severity {raw!r} is not an integer") from None

    if header[:2] == ["symptom", "severity"]:
        items = {}
        for i, r in enumerate(rows[1:], start=2):
            if len(r) < 2:
                raise ValidationError(f"line {i}: expected symptom,severity")
            items[r[0]] = severity(r[1], f"line {i}")
        return [SsqResponse.from_mapping(items)]
    unknown = [h for h in header if h not in SSQ_KEYS]
    if unknown:
        raise ValidationError(f"unknown symptom columns: {', '.join(unknown)}")
    forms = []
    for i, r in enumerate(rows[1:], start=2):
        if len(r) != len(header):
            raise ValidationError(f"line {i}: expected {len(header)} values, got {len(r)}")
        forms.append(SsqResponse.from_mapping({h: severity(v, f"line {i}") for h, v in zip(header, r)}))
    return forms


def cmd_score_ssq(args) -> int:
    forms = parse_ssq_csv(_read_text(args.input))
    with _open_out(args.out) as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(["form", "nausea", "oculomotor", "disorientation", "total_severity", "ssq_bit", "dizzy"])
        for i, form in enumerate(forms, start=1):
            sc = ssq_score(form)
            bit = ssq_binary(sc, args.threshold)
            w.writerow([i, f"{sc.n:.2f}", f"{sc.o:.2f}", f"{sc.d:.2f}", f"{sc.ts:.2f}", bit,
                        "yes" if bit == 0 else "no"])
    return EXIT_OK


# -- analyze ----------------------------------------------------------------------


EEG_COLUMNS = ("t_s", "channel", "uv")


def read_eeg_csv(text: str, channel: str | None = None, fs: float | None = None) -> dsp.SampleBuffer | None:
    """Parse ``t_s,channel,uv`` rows for one channel (default: the first one seen).

    Returns None when there are no samples. Errors name the offending line.
    """
    reader = csv.reader(io.StringIO(text))
    header = next(reader, None)
    if header is None or not any(h.strip() for h in header):
        return None
    if tuple(h.strip() for h in header) != EEG_COLUMNS:
        raise ValidationError(f"line 1: expected header {','.join(EEG_COLUMNS)}")
    times, values, lines = [], [], []
    last_t: dict[str, float] = {}
    for line_no, row in enumerate(reader, start=2):
        if not row or not any(c.strip() for c in row):
            continue
        if len(row) != 3:
            raise ValidationError(f"line {line_no}: expected 3 fields, got {len(row)}")
        label = row[1].strip()
        try:
            t, v = float(row[0]), float(row[2])
        except ValueError:
            raise ValidationError(f"line {line_no}: non-numeric value") from None
        if not (np.isfinite(t) and np.isfinite(v)):
            raise ValidationError(f"line {line_no}: non-finite value")
        if not label:
            raise ValidationError(f"line {line_no}: empty channel label")
        if label in last_t and t <= last_t[label]:
            raise ValidationError(f"line {line_no}: time must increase within channel {label}")
        last_t[label] = t
        if channel is None:
            channel = label
        if label == channel:
            times.append(t)
            values.append(v)
            lines.append(line_no)
    if not values:
        return None
    if fs is None:
        if len(times) < 2:
            raise ValidationError("cannot infer the sampling rate from one sample")
        dt = np.diff(times)
        step = float(np.median(dt))
        bad = np.flatnonzero(np.abs(dt - step) > 0.01 * step)
        if bad.size:
            raise ValidationError(f"line {lines[int(bad[0]) + 1]}: irregular sampling interval")
        fs = 1.0 / step
    return dsp.SampleBuffer(np.array(values), fs, channel)


def analyze_buffer(buf: dsp.SampleBuffer) -> list[list]:
    if len(buf) < max(dsp.settling_length(buf.fs), dsp.window_length(buf.fs)):
        return []
    rows = []
    for w in dsp.segment_windows(dsp.band_limit(buf)):
        fv = dsp.feature_vector(w)
        rows.append([w.start_time, dsp.band_power(w).value, dsp.box_counting_fd(w.samples), *fv.values])
    return rows


def cmd_analyze(args) -> int:
    buf = read_eeg_csv(_read_text(args.input), args.channel, args.fs)
    rows = analyze_buffer(buf) if buf is not None else []
    with _open_out(args.out) as f:
        if not rows:
            return EXIT_OK
        w = csv.writer(f, lineterminator="\n")
        w.writerow(["start_s", "band_power", "fd", *(f"f{i}" for i in range(1, dsp.N_FEATURES + 1))])
        for r in rows:
            w.writerow([repr(float(v)) for v in r])
    return EXIT_OK


# -- edge / cloud -----------------------------------------------------------------


def _budget(args) -> LatencyBudget:
    k = args.time_scale
    return LatencyBudget(1.15 * k, 0.016 * k, 0.12 * k, 4.0 * k)


def cmd_edge(args) -> int:
    cfg = load_config(args.config)
    profile = _find_participant(cfg, args.participant)
    ss = cfg.session
    rng_part, rng_eeg, _ = session_streams([ss.seed if args.seed is None else args.seed, profile.rng_seed])
    source = SimulatedParticipant(profile, ss.stage_len_s, ss.fs, rng_part, rng_eeg)
    budget = _budget(args)
    if args.loopback:
        clock = VirtualClock()
        link = args.latency_ms / 1000 * args.time_scale
        transport = LoopbackTransport(CloudService(cfg.rl, args.qtable_path), clock, link, budget.policy_s)
    else:
        clock = RealClock()
        host, port = _host_port(args.connect)
        transport = TcpTransport(host, port, retries=args.retries,
                                 link_delay_s=args.latency_ms / 1000 * args.time_scale)
    tr = edge_run(source, transport, profile.name, ss.n_stages, cfg.inference, budget, clock, cfg.rl)
    with _open_out(args.out) as f:
        f.write(transcript_csv(tr.records))
    for k, t in zip(range(1, len(tr.turnarounds) + 1), tr.turnarounds):
        log.info("stage %d turnaround %.3f s", k, t)
    if tr.missed_deadlines:
        log.warning("missed deadlines at stages %s; applied a5", tr.missed_deadlines)
        return EXIT_IO
    return EXIT_OK


def cmd_cloud(args) -> int:
    cfg = load_config(args.config)
    host, port = _host_port(args.listen)
    service = CloudService(cfg.rl, args.qtable_path, seed=cfg.session.seed if args.seed is None else args.seed)
    k = args.time_scale
    try:
        asyncio.run(cloud_run(service, host, port, policy_s=0.12 * k, latency_s=args.latency_ms / 1000 * k))
    except KeyboardInterrupt:
        pass
    return EXIT_OK


# -- wcst -------------------------------------------------------------------------


def _interactive_player(stdin, stdout):
    def play(g: wcst.WcstGame, _rng) -> int:
        c = g.current_card
        stdout.write(f"round {g.round_idx + 1}: {c.count} {c.color} {c.shape}(s); "
                     "stimuli 0=1 red triangle 1=2 green stars 2=3 yellow crosses 3=4 blue circles > ")
        stdout.flush()
        while True:
            line = stdin.readline()
            if not line:
                raise EOFError("input ended")
            if line.strip() in ("0", "1", "2", "3"):
                return int(line)
            stdout.write("choose 0-3 > ")
            stdout.flush()
    return play


def cmd_wcst(args) -> int:
    cfg = load_config(args.config)
    switch = cfg.wcst_switch_prob if args.switch_prob is None else args.switch_prob
    rng = np.random.default_rng(args.seed)
    g = wcst.WcstGame(rng=rng, switch_prob=switch)
    if args.strategy == "interactive":
        player = _interactive_player(sys.stdin, sys.stderr)
    elif args.strategy == "wsls":
        player = wcst.WinStayLoseShift()
    else:
        player = wcst.PLAYERS[args.strategy]
    try:
        history = wcst.play(g, player, rng)
    except EOFError:
        history = g.history
    labels = {e.index: e.label for e in wcst.wcst_label(history)}
    with _open_out(args.out) as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(["move", "round", "try", "choice", "rule", "feedback", "label"])
        for i, m in enumerate(history):
            w.writerow([i, m.round_idx, m.try_idx, m.choice, m.rule, m.feedback.value, labels.get(i, "")])
    print(f"correct rounds {g.correct_rounds}/{len(g.deck)}", file=sys.stderr)
    return EXIT_OK


# -- entry ------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="hitlearn", description=__doc__.splitlines()[0])
    ap.add_argument("-v", "--verbose", action="count", default=0)
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run-sim", help="train and evaluate simulated participants")
    p.add_argument("--config")
    p.add_argument("--out", help="output directory (default from config)")
    p.add_argument("--sessions", type=int, help="training sessions per participant")
    p.add_argument("--stages", type=int, help="adaptive stages per session")
    p.set_defaults(func=cmd_run_sim)

    p = sub.add_parser("score-ssq", help="score questionnaire CSV")
    p.add_argument("input", help="CSV file or - for stdin")
    p.add_argument("--out", default="-")
    p.add_argument("--threshold", type=float, default=SSQ_THRESHOLD)
    p.set_defaults(func=cmd_score_ssq)

    p = sub.add_parser("analyze", help="per-window metrics for an EEG CSV")
    p.add_argument("input", help="t_s,channel,uv CSV, or -")
    p.add_argument("--channel", help="channel label (default: first in file)")
    p.add_argument("--fs", type=float, help="sampling rate (default: inferred from timestamps)")
    p.add_argument("--out", default="-")
    p.set_defaults(func=cmd_analyze)

    p = sub.add_parser("edge", help="run one participant's session against a cloud")
    p.add_argument("--connect", help="cloud host:port")
    p.add_argument("--loopback", action="store_true", help="use an in-process cloud")
    p.add_argument("--participant", default="P1")
    p.add_argument("--config")
    p.add_argument("--seed", type=int)
    p.add_argument("--latency-ms", type=float, default=16.0, help="injected one-way link latency")
    p.add_argument("--time-scale", type=float, default=1.0, help="multiply all durations")
    p.add_argument("--retries", type=int, default=3)
    p.add_argument("--qtable-path", help="checkpoint directory for --loopback")
    p.add_argument("--out", default="-")
    p.set_defaults(func=cmd_edge)

    p = sub.add_parser("cloud", help="serve the adaptation policy")
    p.add_argument("--listen", default="127.0.0.1:7878")
    p.add_argument("--qtable-path", help="checkpoint directory")
    p.add_argument("--config")
    p.add_argument("--seed", type=int)
    p.add_argument("--latency-ms", type=float, default=0.0, help="extra delay on each reply")
    p.add_argument("--time-scale", type=float, default=1.0)
    p.set_defaults(func=cmd_cloud)

    p = sub.add_parser("wcst", help="play the card sorting test")
    p.add_argument("--strategy", choices=["perfect", "random", "wsls", "interactive"], default="perfect")
    p.add_argument("--switch-prob", type=float)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--config")
    p.add_argument("--out", default="-")
    p.set_defaults(func=cmd_wcst)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.WARNING - 10 * args.verbose, stream=sys.stderr,
                        format="%(levelname)s %(name)s: %(message)s")
    if args.command == "edge" and not args.loopback and not args.connect:
        print("error: edge needs --connect or --loopback", file=sys.stderr)
        return EXIT_INVALID
    try:
        return args.func(args)
    except ValueError as e:  # validation, configuration and decode errors
        print(f"error: {e}", file=sys.stderr)
        return EXIT_INVALID
    except OSError as e:
        print(f"I/O error: {e}", file=sys.stderr)
        return EXIT_IO
    except HitlError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_RUNTIME
    except Exception as e:  # noqa: BLE001 - report and exit nonzero
        log.exception("unexpected failure")
        print(f"error: {e}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
