"""Time-frequency view of a linear chirp with the smoothed Wigner-Ville distribution.

Writes a CSV of the ridge (time, estimated frequency, true frequency) and,
when matplotlib is available, a PNG of the energy image.

    python3 scripts/wvd_demo.py --out runs/wvd
"""
import argparse
import csv
from pathlib import Path

import numpy as np

from hitlearn import dsp


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--fs", type=float, default=256.0)
    ap.add_argument("--f0", type=float, default=5.0)
    ap.add_argument("--f1", type=float, default=30.0)
    ap.add_argument("--seconds", type=float, default=4.0)
    ap.add_argument("--noise", type=float, default=0.0, help="white noise standard deviation")
    ap.add_argument("--out", default="runs/wvd")
    args = ap.parse_args()

    n = int(args.seconds * args.fs)
    t = np.arange(n) / args.fs
    x = np.sin(2 * np.pi * (args.f0 * t + (args.f1 - args.f0) / (2 * t[-1]) * t ** 2))
    x += args.noise * np.random.default_rng(0).standard_normal(n)
    img = dsp.smoothed_wvd(dsp.Window.from_array(x, args.fs))
    inst = args.f0 + (args.f1 - args.f0) * img.time_axis / t[-1]

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "ridge.csv", "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["t_s", "ridge_hz", "true_hz"])
        w.writerows(zip(img.time_axis, img.ridge(), inst))
    core = slice(n // 8, -n // 8)
    err = np.abs(img.ridge()[core] - inst[core])
    print(f"bin width {img.df:.3f} Hz; ridge error median {np.median(err):.3f} Hz, max {err.max():.3f} Hz")
    print(f"energy {img.total_energy():.4f} vs signal {np.sum(x ** 2) / args.fs:.4f}")

    try:
        import matplotlib
        matplotlib.use("Agg")
        import matplotlib.pyplot as plt
    except ImportError:
        return
    fig, ax = plt.subplots(figsize=(7, 4))
    ax.pcolormesh(img.time_axis, img.freq_axis, img.energy.T, shading="auto")
    ax.plot(img.time_axis, inst, "w--", lw=1)
    ax.set(xlabel="time (s)", ylabel="frequency (Hz)", ylim=(0, 2 * args.f1))
    fig.tight_layout()
    fig.savefig(out / "wvd.png", dpi=120)
    print(f"wrote {out / 'wvd.png'}")


if __name__ == "__main__":
    main()
