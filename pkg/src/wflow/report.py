"""Render a trace into plot-ready CSV plus matplotlib figures on disk.

The report path never opens a window: figures go to PNG files next to
the delimited plot data, so results stay consumable from scripts and CI.
"""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from .harness import emit_plot_data, write_plot_csv
from .trace import Trace

FIGSIZE = (6.0, 4.0)
DPI = 150


def _column(rows, key):
    ns, vals = [], []
    for row in rows:
        v = row[key]
        if v == "" or v is None:
            continue
        ns.append(row["n"])
        vals.append(float(v))
    return np.array(ns), np.array(vals)


def _save(fig, path: Path, written: list):
    fig.tight_layout()
    fig.savefig(path, dpi=DPI)
    plt.close(fig)
    written.append(path)


def render_report(trace: Trace, outdir, stem: str = "trace") -> list[Path]:
    """Write ``<stem>_plot_data.csv`` and the standard figures.

    Figures (skipped when their columns are empty): objective gaps and
    the sigma-weighted gap series, distances to the minimizer, per-step
    inequality margins, and the stepsize/error schedules.

    Returns the list of written paths.
    """
    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    written = [write_plot_csv(trace, outdir / f"{stem}_plot_data.csv")]
    rows = emit_plot_data(trace)
    if not rows:
        return written

    ns_gap, gaps = _column(rows, "gap")
    _, sig_gaps = _column(rows, "sigma_times_gap")
    if len(ns_gap):
        fig, ax = plt.subplots(figsize=FIGSIZE)
        pos = gaps > 0
        ax.semilogy(ns_gap[pos], gaps[pos], label="objective gap")
        ax.plot(ns_gap, sig_gaps, label="sigma * gap", linestyle="--")
        ax.set_xlabel("iteration n")
        ax.set_title("objective gap and rate series")
        ax.legend()
        ax.grid(True, alpha=0.3)
        _save(fig, outdir / f"{stem}_convergence.png", written)

    fig, ax = plt.subplots(figsize=FIGSIZE)
    plotted = False
    for key, label in (("w2", "W2 to minimizer"), ("w1", "W1 to minimizer")):
        ns, vals = _column(rows, key)
        keep = vals > 0
        if keep.any():
            ax.semilogy(ns[keep], vals[keep], label=label)
            plotted = True
    if plotted:
        ax.set_xlabel("iteration n")
        ax.set_title("distance to the minimizer")
        ax.legend()
        ax.grid(True, alpha=0.3)
        _save(fig, outdir / f"{stem}_distances.png", written)
    else:
        plt.close(fig)

    ns, margins = _column(rows, "evi_margin")
    if len(ns):
        fig, ax = plt.subplots(figsize=FIGSIZE)
        ax.plot(ns, margins, label="per-step inequality margin")
        ax.axhline(0.0, color="k", linewidth=0.8)
        ax.set_xlabel("iteration n")
        ax.set_title("inequality margins (negative = violation)")
        ax.legend()
        ax.grid(True, alpha=0.3)
        _save(fig, outdir / f"{stem}_margins.png", written)

    fig, ax = plt.subplots(figsize=FIGSIZE)
    ns = np.array([row["n"] for row in rows])
    taus = np.array([float(r.tau) for r in trace.records])
    epss = np.array([row["eps"] for row in rows], dtype=float)
    ax.plot(ns, taus, label="tau_n")
    if np.any(epss > 0):
        ax.plot(ns, epss, label="eps_n")
    ax.set_xlabel("iteration n")
    ax.set_yscale("log")
    ax.set_title("schedules")
    ax.legend()
    ax.grid(True, alpha=0.3)
    _save(fig, outdir / f"{stem}_schedule.png", written)
    return written
