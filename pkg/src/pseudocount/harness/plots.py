"""Static figures written next to the CSV artifacts (Agg backend, no display)."""

from __future__ import annotations

from pathlib import Path
from typing import Dict, Sequence

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

STYLE = {
    "figure.figsize": (6.0, 3.6),
    "figure.dpi": 100,
    "axes.spines.top": False,
    "axes.spines.right": False,
    "axes.grid": True,
    "grid.alpha": 0.3,
    "legend.frameon": False,
    "font.size": 9,
    "svg.hashsalt": "pseudocount",
}


def _save(fig, path) -> Path:
    path = Path(path)
    fig.tight_layout()
    fig.savefig(path, metadata={"Software": None})
    plt.close(fig)
    return path


def plot_return_curves(runs: Dict[str, Sequence], path) -> Path:
    """Seed-mean windowed return per labelled run set, with min/max band."""
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots()
        for label, metrics in runs.items():
            curves = [m.curve for m in metrics]
            x = curves[0][0]
            ys = np.stack([c[1] for c in curves])
            ax.plot(x, ys.mean(axis=0), label=label, lw=1.5)
            if len(ys) > 1:
                ax.fill_between(x, ys.min(axis=0), ys.max(axis=0), alpha=0.15)
        ax.set_xlabel("agent steps")
        ax.set_ylabel("windowed episode return")
        ax.legend()
        return _save(fig, path)


def _smooth(y, window):
    window = max(1, min(window, len(y)))
    kernel = np.ones(window) / window
    return np.convolve(y, kernel, mode="valid")


def plot_loss_curves(traces: Dict[str, Dict[int, np.ndarray]], window: int, path) -> Path:
    """Running-mean online loss per label (seed-averaged)."""
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots()
        for label, per_seed in traces.items():
            y = _smooth(np.mean(np.stack(list(per_seed.values())), axis=0), window)
            ax.plot(np.arange(window, window + len(y)), y, label=label, lw=1.2)
        ax.set_xlabel("frames")
        ax.set_ylabel("loss (nats)")
        ax.legend()
        return _save(fig, path)


def plot_pg_traces(traces: Dict[str, Dict[int, np.ndarray]], path) -> Path:
    """Prediction gain per step on a log scale, first seed of each model."""
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots()
        for label, per_seed in traces.items():
            y = next(iter(per_seed.values()))
            steps = np.arange(1, len(y) + 1)
            keep = np.isfinite(y) & (y > 0)
            ax.plot(steps[keep], y[keep], label=label, lw=0.6, alpha=0.8)
        ax.set_yscale("log")
        ax.set_xlabel("frames")
        ax.set_ylabel("prediction gain (nats)")
        ax.legend()
        return _save(fig, path)


def plot_first_reward(medians: Dict[str, float], path) -> Path:
    """Bar chart of median steps to first extrinsic reward."""
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots()
        labels = list(medians)
        ax.bar(range(len(labels)), [medians[k] for k in labels], color="0.45")
        ax.set_xticks(range(len(labels)), labels, rotation=20, ha="right")
        ax.set_ylabel("median steps to first reward")
        return _save(fig, path)
