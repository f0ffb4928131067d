"""Train the 15-profile synthetic cohort and compare against the no-change policy.

Prints per-participant greedy actions at s2 and s6, improvement against the
baseline stage, and the paired sign test of adaptive vs static a5.

    python3 scripts/run_cohort.py --sessions 300 --seed 0
"""
import argparse
import time

import numpy as np

from hitlearn.rl import Action, Hyperparams
from hitlearn.sim import session


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--sessions", type=int, default=300, help="training sessions per participant")
    ap.add_argument("--eval", type=int, default=30, help="paired evaluation sessions per participant")
    ap.add_argument("--decay", type=float, default=0.003, help="epsilon decay per Q-update")
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()

    hp = Hyperparams(epsilon_decay=args.decay)
    print(f"{'name':<5} {'s2':<8} {'s6':<8} {'improve%':>9} {'static%':>9} {'wins':>5} {'p':>9}")
    gains, static_gains = [], []
    t0 = time.perf_counter()
    for p in session.reference_cohort(args.seed):
        agent = session.train_agent(p, hp, args.sessions, seed=args.seed)
        table = agent.snapshot()
        cmp = session.compare_to_static(p, agent, n_sessions=args.eval, seed=args.seed + 1)
        seed = [args.seed, p.rng_seed, 9]
        adaptive = session.improvement(session.run_session(p, hp, 24, agent=agent, learn=False,
                                                           greedy=True, seed=seed))
        static = session.improvement(session.run_session(p, hp, 24, policy=session.static_policy(Action.A5),
                                                         seed=seed))
        if adaptive is not None and static is not None:
            gains.append(adaptive)
            static_gains.append(static)
        fmt = lambda s: "/".join(a.label for a in table.greedy_actions(s))
        show = lambda v: f"{v:9.1f}" if v is not None else f"{'-':>9}"
        print(f"{p.name:<5} {fmt(2):<8} {fmt(6):<8} {show(adaptive)} {show(static)} "
              f"{cmp.wins:>2}/{cmp.wins + cmp.losses:<2} {cmp.p_value:9.2g}")
    print(f"mean improvement {np.mean(gains):.1f}% adaptive vs {np.mean(static_gains):.1f}% static "
          f"({time.perf_counter() - t0:.0f} s)")


if __name__ == "__main__":
    main()
