"""Render run and evaluation figures to image files (Agg backend, no display)."""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np


def save_trajectory_figure(path, polylines, estimate_poses, truth_poses=None, gps=None, title="trajectory"):
    """Map walls plus estimated (and optionally true) paths and raw GPS fixes."""
    fig, ax = plt.subplots(figsize=(9, 7))
    for line in polylines:
        v = np.asarray(line.vertices)
        ax.plot(v[:, 0], v[:, 1], color="0.6", linewidth=0.8)
    if gps is not None and len(gps):
        g = np.asarray(gps)
        ax.plot(g[:, 0], g[:, 1], ".", color="tab:orange", markersize=2, alpha=0.5, label="gps")
    if truth_poses is not None:
        t = np.array([p.t for p in truth_poses])
        ax.plot(t[:, 0], t[:, 1], color="tab:green", linewidth=1.2, label="truth")
    e = np.array([p.t for p in estimate_poses])
    ax.plot(e[:, 0], e[:, 1], color="tab:blue", linewidth=1.2, label="estimate")
    ax.set_aspect("equal")
    ax.set_xlabel("x [m]")
    ax.set_ylabel("y [m]")
    ax.set_title(title)
    ax.legend(loc="best", fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=130)
    plt.close(fig)


def save_weight_traces_figure(path, logs, title="information score and weights"):
    """Per-frame information score and the resulting factor weights."""
    frames = np.array([log.frame_index for log in logs])
    s = np.array([log.s for log in logs])
    w_a = np.array([log.w_a for log in logs])
    w_o = np.array([log.w_o for log in logs])
    fig, axes = plt.subplots(2, 1, figsize=(9, 6), sharex=True)
    axes[0].plot(frames, s, color="tab:blue", linewidth=0.9)
    axes[0].set_ylabel("s")
    axes[0].set_title(title)
    axes[1].plot(frames, w_a, color="tab:red", linewidth=0.9, label="w_a")
    ax2 = axes[1].twinx()
    ax2.plot(frames, w_o, color="tab:gray", linewidth=0.9, label="w_o")
    ax2.set_ylabel("w_o")
    axes[1].set_ylabel("w_a")
    axes[1].set_xlabel("frame")
    axes[1].legend(loc="upper left", fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=130)
    plt.close(fig)


def save_error_trace_figure(path, per_frame, title="translation error per frame"):
    """Per-frame translation error with the association weight overlaid,
    ``per_frame`` as produced by ``compute_ate`` (frame, trans, rot, s, w_a)."""
    table = np.asarray(per_frame)
    fig, ax = plt.subplots(figsize=(9, 4.5))
    ax.plot(table[:, 0], table[:, 1], color="tab:blue", linewidth=0.9, label="trans err [m]")
    ax.set_xlabel("frame")
    ax.set_ylabel("translation error [m]")
    ax2 = ax.twinx()
    ax2.plot(table[:, 0], table[:, 4], color="tab:red", linewidth=0.8, alpha=0.7, label="w_a")
    ax2.set_ylabel("w_a")
    ax2.set_ylim(-0.05, 1.05)
    ax.set_title(title)
    lines, labels = ax.get_legend_handles_labels()
    lines2, labels2 = ax2.get_legend_handles_labels()
    ax.legend(lines + lines2, labels + labels2, loc="upper right", fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=130)
    plt.close(fig)
