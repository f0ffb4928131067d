"""Stage turnaround under injected link latencies.

Runs loopback sessions on a virtual clock for a sweep of one-way link
delays and reports the turnaround (start of the final window to action in
hand) and how many stages fell back to a5.

    python3 scripts/timing_budget.py --delays-ms 16 500 1000 1400 2000
"""
import argparse
import logging

import numpy as np

from hitlearn.netlink import cloud, edge
from hitlearn.sim import session


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--delays-ms", type=float, nargs="+", default=[16, 250, 500, 1000, 1300, 1400, 2000])
    ap.add_argument("--policy-ms", type=float, default=120.0)
    ap.add_argument("--inference-ms", type=float, default=1150.0)
    ap.add_argument("--stages", type=int, default=5)
    args = ap.parse_args()
    logging.getLogger("hitlearn").setLevel(logging.ERROR)  # fallbacks are expected past the budget

    profile = session.reference_cohort(0)[0]
    budget = edge.LatencyBudget(args.inference_ms / 1000, 0.016, args.policy_ms / 1000)
    print(f"nominal turnaround {budget.nominal_turnaround():.3f} s within a {budget.window_s:.0f} s window")
    print(f"{'link_ms':>8} {'turnaround_s':>13} {'fallbacks':>10}")
    for d in args.delays_ms:
        clock = edge.VirtualClock()
        link = edge.LoopbackTransport(cloud.CloudService(), clock, d / 1000, args.policy_ms / 1000)
        source = session.SimulatedParticipant(profile, 12.0, 128.0, np.random.default_rng(1), np.random.default_rng(2))
        out = edge.edge_run(source, link, profile.name, args.stages, budget=budget, clock=clock)
        print(f"{d:8.0f} {max(out.turnarounds):13.3f} {out.fallbacks:>10}")


if __name__ == "__main__":
    main()
