"""PNG plot emission for the eval/visualize commands."""
from __future__ import annotations

from pathlib import Path

import matplotlib
matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np

from .diagnostics import LtdProfile


def _to01(frames: np.ndarray) -> np.ndarray:
    return np.clip((frames + 1.0) / 2.0, 0.0, 1.0)


def save_ltd_plots(profile: LtdProfile, path: str | Path) -> Path:
    """Adjacent-distance histogram next to the normalized interval profile."""
    fig, (ax1, ax2) = plt.subplots(1, 2, figsize=(9, 3.2))
    edges = np.asarray(profile.hist_edges)
    ax1.bar(edges[:-1], profile.hist_counts, width=np.diff(edges), align="edge")
    ax1.set_xlabel("adjacent latent distance")
    ax1.set_ylabel("count")
    ax1.set_title("adjacent-frame LTD")
    ys = profile.normalized if profile.normalized is not None else profile.mean_distance
    ax2.plot(profile.intervals, ys, marker="o")
    ax2.set_xlabel("frame interval")
    ax2.set_ylabel("normalized LTD" if profile.normalized is not None else "LTD")
    ax2.set_title("LTD vs interval")
    ax2.grid(alpha=0.3)
    fig.tight_layout()
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path


def save_frame_grid(rows: list[np.ndarray], row_labels: list[str],
                    path: str | Path, max_cols: int = 8,
                    col_mark: int | None = None) -> Path:
    """Stack per-row frame sequences (frames, H, W, 3) into one labeled grid.

    ``col_mark`` draws a divider after that column (observed/dropped boundary).
    """
    n_rows = len(rows)
    n_cols = min(max_cols, min(r.shape[0] for r in rows))
    sel = np.linspace(0, rows[0].shape[0] - 1, n_cols).round().astype(int)
    fig, axes = plt.subplots(n_rows, n_cols, figsize=(1.5 * n_cols, 1.6 * n_rows),
                             squeeze=False)
    for i, (row, label) in enumerate(zip(rows, row_labels)):
        for j, f in enumerate(sel):
            ax = axes[i][j]
            img = row[f]
            ax.imshow(_to01(img) if img.min() < 0 else np.clip(img, 0, 1))
            ax.set_xticks([])
            ax.set_yticks([])
            if i == 0:
                ax.set_title(f"t={f}", fontsize=8)
            if col_mark is not None and f >= col_mark:
                for spine in ax.spines.values():
                    spine.set_edgecolor("red")
                    spine.set_linewidth(2)
        axes[i][0].set_ylabel(label, fontsize=9)
    fig.tight_layout()
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path


def flow_to_rgb(flow: np.ndarray, max_mag: float | None = None) -> np.ndarray:
    """Map (.., H, W, 2) flow to RGB: hue from angle, saturation from magnitude."""
    fx, fy = flow[..., 0], flow[..., 1]
    mag = np.sqrt(fx ** 2 + fy ** 2)
    if max_mag is None:
        max_mag = max(float(mag.max()), 1e-6)
    ang = (np.arctan2(fy, fx) + np.pi) / (2 * np.pi)
    sat = np.clip(mag / max_mag, 0, 1)
    hsv = np.stack([ang, sat, np.ones_like(ang)], axis=-1)
    return matplotlib.colors.hsv_to_rgb(hsv).astype(np.float32)


def save_flow_panel(pred: np.ndarray, gt: np.ndarray, path: str | Path,
                    max_cols: int = 6) -> Path:
    max_mag = max(float(np.abs(gt).max()), 1e-6)
    rows = [flow_to_rgb(gt, max_mag), flow_to_rgb(pred, max_mag)]
    return save_frame_grid(rows, ["ground truth", "probe"], path, max_cols=max_cols)
