"""Matplotlib figures written next to the CSV/JSON reports."""

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
    "figure.dpi": 120,
}


def _figure(width=4.5, height=None):
    golden = (np.sqrt(5.0) - 1.0) / 2.0
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots(figsize=(width, height or width * golden))
    return fig, ax


def _save(fig, path):
    fig.tight_layout()
    fig.savefig(path)
    plt.close(fig)
    return path


def plot_rank_curves(rows, path, label=None):
    """Mean rank of AD-Pos and Intra-Negs per epoch. ``rows`` are metrics-log dicts."""
    fig, ax = _figure()
    ep = [r["epoch"] for r in rows]
    ax.plot(ep, [r["mean_rank_ad_pos"] for r in rows], "-o", ms=2.5, label="AD-Pos")
    intra = [r["mean_rank_intra_negs"] for r in rows]
    if any(v is not None for v in intra):
        ax.plot(ep, [np.nan if v is None else v for v in intra], "-s", ms=2.5, label="Intra-Negs")
    ax.set_xlabel("epoch")
    ax.set_ylabel("mean rank (1 = most similar)")
    if label:
        ax.set_title(label)
    ax.legend(frameon=False)
    return _save(fig, path)


def plot_loss_curve(rows, path):
    fig, ax = _figure()
    for stage, marker in (("appearance", "o"), ("moquad", "s")):
        pts = [(r["epoch"], r["mean_loss"]) for r in rows if r["stage"] == stage]
        if pts:
            x, y = zip(*pts)
            ax.plot(x, y, marker, ms=3, label=stage)
    ax.set_xlabel("epoch")
    ax.set_ylabel("mean loss per anchor")
    ax.legend(frameon=False)
    return _save(fig, path)


def plot_per_class(table, path):
    classes = sorted(table, key=int)
    acc = [table[c]["accuracy"] for c in classes]
    groups = [table[c]["group"] for c in classes]
    colors = ["#4c72b0" if g == "motion_only" else "#dd8452" for g in groups]
    fig, ax = _figure()
    ax.bar(range(len(classes)), acc, color=colors)
    ax.set_xticks(range(len(classes)))
    ax.set_xticklabels(classes)
    ax.set_ylim(0, 1)
    ax.set_xlabel("motion class")
    ax.set_ylabel("probe accuracy")
    return _save(fig, path)


def plot_sweep(summary, path, metric="top1"):
    """Bar chart of the mean (and per-seed points) of ``metric`` per sweep arm."""
    arms = list(dict.fromkeys(r["arm"] for r in summary))
    fig, ax = _figure(width=max(4.5, 1.1 * len(arms)))
    for i, arm in enumerate(arms):
        vals = [r[metric] for r in summary if r["arm"] == arm]
        ax.bar(i, np.mean(vals), color="#8da0cb")
        ax.plot([i] * len(vals), vals, "k.", ms=4)
    ax.set_xticks(range(len(arms)))
    ax.set_xticklabels(arms, rotation=20)
    ax.set_ylabel(metric)
    return _save(fig, path)
