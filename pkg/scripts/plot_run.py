"""Plot one run directory (or every run_* under a sweep directory).

    python3 scripts/plot_run.py runs/demo_quantized [--out fig.png]
"""
import argparse
import json
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402


def load(run: Path):
    s = np.genfromtxt(run / "samples.csv", delimiter=",", names=True)
    syn = json.loads((run / "synthesis.json").read_text())
    return s, syn


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("path", type=Path)
    ap.add_argument("--out", type=Path, default=None)
    args = ap.parse_args()
    runs = sorted(args.path.glob("run*")) if not (args.path / "samples.csv").exists() else [args.path]
    if not runs:
        raise SystemExit(f"no runs under {args.path}")

    fig, ax = plt.subplots(3, 1, figsize=(7, 8), sharex=True)
    for run in runs:
        s, syn = load(run)
        ax[0].semilogy(s["t"], np.maximum(s["W"], 1e-12), lw=0.8)
        ax[1].plot(s["t"], s["zeta"], lw=0.8)
        ax[2].step(s["t"], s["u"], where="post", lw=0.6)
    sigma = syn.get("sigma")
    if sigma is not None:
        ax[0].axhline(sigma, color="k", ls="--", lw=0.8, label="sigma")
        ax[0].legend()
    ax[0].set_ylabel("W")
    ax[1].set_ylabel("zeta")
    ax[2].set_ylabel("u")
    ax[2].set_xlabel("t")
    fig.tight_layout()
    out = args.out or args.path / "trajectories.png"
    fig.savefig(out, dpi=130)
    print(out)


if __name__ == "__main__":
    main()
