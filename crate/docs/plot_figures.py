"""Render the delay-scan, flux-surface and per-bin matrix plots from CLI output.

    polsq forward --preset fig1c --out out/fig1c
    polsq simulate --preset fig1c --out out/fig1c
    polsq reconstruct --preset fig1c --out out/fig1c
    polsq forward --preset surface --out out/surface
    python docs/plot_figures.py out/fig1c out/surface
"""

import json
import sys
from pathlib import Path

import matplotlib.pyplot as plt
import numpy as np
import pandas as pd


def read_csv(path):
    return pd.read_csv(path, comment="#")


def delay_scan(run_dir, ax):
    dm = read_csv(run_dir / "dm_vs_tau.csv")
    ax.plot(dm.tau_s * 1e9, dm.concurrence, label="theory")
    summary = run_dir / "summary.csv"
    if summary.exists():
        s = read_csv(summary)
        ax.errorbar(s.tau_center_s * 1e9, s.concurrence, yerr=s.sigma, fmt="o", label="reconstructed")
    ax.set_xlabel("delay (ns)")
    ax.set_ylabel("concurrence")
    ax.legend()


def surface(run_dir, ax):
    s = read_csv(run_dir / "concurrence_surface.csv")
    grid = s.pivot(index="phi_s", columns="phi_c", values="concurrence")
    mesh = ax.pcolormesh(grid.columns, grid.index, grid.values, shading="auto")
    ax.set_xscale("log")
    ax.set_yscale("log")
    ax.set_xlabel("coherent flux (ph/s)")
    ax.set_ylabel("squeezed flux (ph/s)")
    plt.colorbar(mesh, ax=ax, label="concurrence")


def matrices(run_dir):
    files = sorted(run_dir.glob("dm_bin_*.json"))
    if not files:
        return
    fig, axes = plt.subplots(1, len(files), figsize=(3 * len(files), 3), squeeze=False)
    labels = ["HH", "HV", "VH", "VV"]
    for ax, f in zip(axes[0], files):
        d = json.loads(f.read_text())
        re = np.array(d["rho_hat"]["re"])
        ax.imshow(re, vmin=-0.5, vmax=0.5, cmap="RdBu")
        ax.set_xticks(range(4), labels)
        ax.set_yticks(range(4), labels)
        lo, hi = (t * 1e9 for t in d["window_s"])
        ax.set_title(f"{lo:.0f}-{hi:.0f} ns, C={d['concurrence']:.2f}")
    fig.tight_layout()
    fig.savefig(run_dir / "matrices.png", dpi=150)


def main():
    scan_dir = Path(sys.argv[1])
    fig, ax = plt.subplots()
    delay_scan(scan_dir, ax)
    fig.savefig(scan_dir / "delay_scan.png", dpi=150)
    matrices(scan_dir)
    if len(sys.argv) > 2:
        surface_dir = Path(sys.argv[2])
        fig, ax = plt.subplots()
        surface(surface_dir, ax)
        fig.savefig(surface_dir / "surface.png", dpi=150)


if __name__ == "__main__":
    main()
