"""Figures for benchmark and session reports, written to files (Agg backend)."""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

STYLE = {
    "font.size": 9,
    "axes.labelsize": 9,
    "legend.fontsize": 8,
    "xtick.labelsize": 8,
    "ytick.labelsize": 8,
    "axes.spines.top": False,
    "axes.spines.right": False,
    "savefig.dpi": 150,
}


def _figure(nrows=1, ncols=1, width=5.0, ratio=0.62):
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots(nrows, ncols, figsize=(width, width * ratio * nrows), squeeze=False)
    return fig, ax


def _save(fig, path: Path) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    with plt.rc_context(STYLE):
        fig.tight_layout()
        fig.savefig(path)
    plt.close(fig)
    return path


def plot_benchmark(rows, path) -> Path:
    """Grouped bars of KGR and KDR per method."""
    fig, ax = _figure(1, 2, width=6.5, ratio=0.4)
    names = [r.method for r in rows]
    x = np.arange(len(rows))
    ax[0, 0].bar(x, [r.kgr for r in rows], color="tab:blue")
    ax[0, 0].set_ylabel("KGR (bits / sample)")
    ax[0, 1].bar(x, [r.kdr for r in rows], color="tab:orange")
    ax[0, 1].set_ylabel("KDR")
    for a in ax[0]:
        a.set_xticks(x)
        a.set_xticklabels(names)
    return _save(fig, Path(path))


def plot_block_params(report, path) -> Path:
    """Chosen level and guard factor per diversity block, agreed blocks filled."""
    fig, ax = _figure(2, 1, width=6.0, ratio=0.3)
    ids = np.array([b.block_id for b in report.blocks])
    ms = np.array([b.m for b in report.blocks])
    alphas = np.array([b.alpha for b in report.blocks])
    ok = np.array([b.agreed for b in report.blocks], dtype=bool)
    ax[0, 0].step(ids, np.log2(ms), where="mid", color="k", lw=0.8)
    ax[0, 0].set_ylabel("log2 m")
    ax[0, 0].set_yticks([1, 2, 3])
    ax[1, 0].scatter(ids[ok], alphas[ok], s=8, label="agreed")
    ax[1, 0].scatter(ids[~ok], alphas[~ok], s=8, marker="x", color="tab:red", label="dropped")
    ax[1, 0].set_ylabel("alpha")
    ax[1, 0].set_xlabel("diversity block")
    ax[1, 0].legend(loc="upper right", frameon=False)
    return _save(fig, Path(path))


def plot_traces(session, path, eve=None) -> Path:
    fig, ax = _figure(width=6.0, ratio=0.4)
    a = ax[0, 0]
    a.plot(session.trace_a.indices, session.trace_a.values, lw=0.6, label="Alice")
    a.plot(session.trace_b.indices, session.trace_b.values, lw=0.6, label="Bob")
    if eve is not None:
        a.plot(eve.indices, eve.values, lw=0.6, alpha=0.6, label="Eve")
    a.set_xlabel("probe index")
    a.set_ylabel("RSSI (dBm)")
    a.legend(loc="lower right", frameon=False, ncol=3)
    return _save(fig, Path(path))
