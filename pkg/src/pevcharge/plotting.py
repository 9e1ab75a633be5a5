"""Static figures for run outputs. Optional: the CSV traces remain the primary output."""

from __future__ import annotations

from pathlib import Path

import numpy as np


def _pyplot():
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    return plt


def _hours(n: int, slot_length: float) -> np.ndarray:
    return np.arange(n) * slot_length


def plot_load(path, net_load, loads: dict, slot_length: float = 0.25, title: str = "") -> Path:
    """Net base load and one total-load curve per entry of ``loads``."""
    plt = _pyplot()
    fig, ax = plt.subplots(figsize=(8, 4))
    t = _hours(len(net_load), slot_length)
    ax.plot(t, net_load, color="0.5", lw=1.2, ls="--", label="net base load")
    for name, load in loads.items():
        ax.step(t, load, where="post", lw=1.4, label=name)
    ax.set_xlabel("hour")
    ax.set_ylabel("kW")
    ax.set_title(title or "total load")
    ax.grid(alpha=0.3)
    ax.legend(loc="upper left", fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=110, metadata={"Software": None})
    plt.close(fig)
    return Path(path)


def plot_queues(path, queues, class_index, class_names, capacity,
                slot_length: float = 0.25) -> Path:
    """Per-class mean state of charge over the horizon."""
    plt = _pyplot()
    fig, ax = plt.subplots(figsize=(8, 3.5))
    q = np.asarray(queues)
    soc = 1.0 - q / np.asarray(capacity)[:, None]
    t = _hours(q.shape[1], slot_length)
    for ci, name in enumerate(class_names):
        members = np.asarray(class_index) == ci
        if members.any():
            ax.plot(t, soc[members].mean(axis=0), lw=1.4, label=f"{name} (mean)")
    ax.set_ylim(0, 1.02)
    ax.set_xlabel("hour")
    ax.set_ylabel("state of charge")
    ax.grid(alpha=0.3)
    ax.legend(loc="lower right", fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=110, metadata={"Software": None})
    plt.close(fig)
    return Path(path)
