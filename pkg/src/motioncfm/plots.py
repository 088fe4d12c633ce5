"""Static SVG figures: metric curves and joint trajectories."""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from .data.kinematics import global_joint_positions  # noqa: E402
from .data.synthetic import JOINT_NAMES  # noqa: E402

# fixed element ids and no timestamp, so identical data gives identical bytes
_SVG_RC = {"svg.hashsalt": "motioncfm", "svg.fonttype": "none"}
_SVG_META = {"Date": None, "Creator": None}

DEFAULT_TRACKED = ("left_hand", "right_hand", "left_heel", "right_heel")


def _save(fig, path):
    fig.savefig(path, format="svg", metadata=_SVG_META)
    plt.close(fig)


def line_plot(path, x, series, xlabel, title=""):
    """One panel per named series against a shared x axis."""
    with plt.rc_context(_SVG_RC):
        fig, axes = plt.subplots(len(series), 1, figsize=(5, 2.2 * len(series)), sharex=True, squeeze=False)
        for ax, (name, y) in zip(axes[:, 0], series.items()):
            ax.plot(x, y, marker="o", markersize=3)
            ax.set_ylabel(name)
            ax.grid(alpha=0.3)
        axes[-1, 0].set_xlabel(xlabel)
        if title:
            axes[0, 0].set_title(title)
        fig.tight_layout()
        _save(fig, path)


def loss_plot(path, curve):
    steps = [s for s, _ in curve]
    losses = [v for _, v in curve]
    with plt.rc_context(_SVG_RC):
        fig, ax = plt.subplots(figsize=(5, 3))
        ax.plot(steps, losses, linewidth=0.8)
        ax.set_yscale("log")
        ax.set_xlabel("step")
        ax.set_ylabel("loss")
        ax.grid(alpha=0.3)
        fig.tight_layout()
        _save(fig, path)


def trajectory_plot(motion, path, joints=DEFAULT_TRACKED, title=""):
    """Top-down X-Z paths of the tracked joints plus their coordinates over time.

    Joint names index the synthetic skeleton; the root (pelvis) is not
    stored among the local joints, so it is excluded from the choices.
    """
    local_names = JOINT_NAMES[1:]
    if motion.layout.joint_count != len(JOINT_NAMES):
        local_names = tuple(f"joint_{i}" for i in range(1, motion.layout.joint_count))
        joints = local_names[: min(4, len(local_names))]
    idx = [local_names.index(j) for j in joints]
    pos = global_joint_positions(motion)[:, idx]
    time = np.arange(motion.n_frames) / motion.fps
    with plt.rc_context(_SVG_RC):
        fig = plt.figure(figsize=(9, 5))
        grid = fig.add_gridspec(3, 2)
        top = fig.add_subplot(grid[:, 0])
        for k, name in enumerate(joints):
            top.plot(pos[:, k, 0], pos[:, k, 2], label=name, linewidth=1)
            top.plot(pos[:1, k, 0], pos[:1, k, 2], marker="o", color=top.lines[-1].get_color())
        top.set_xlabel("x")
        top.set_ylabel("z")
        top.set_aspect("equal", adjustable="datalim")
        top.legend(fontsize=7)
        for axis, label in enumerate("xyz"):
            ax = fig.add_subplot(grid[axis, 1])
            for k in range(len(joints)):
                ax.plot(time, pos[:, k, axis], linewidth=1)
            ax.set_ylabel(label)
            if axis == 2:
                ax.set_xlabel("time (s)")
        if title:
            fig.suptitle(title)
        fig.tight_layout()
        _save(fig, path)
