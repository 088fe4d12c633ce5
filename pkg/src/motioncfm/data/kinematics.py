"""Recover world-space trajectories from per-frame features."""

from __future__ import annotations

import numpy as np

from .layout import MotionSequence


def root_trajectory(motion: MotionSequence):
    """Integrate root velocities into world positions.

    Headings accumulate the per-frame angular velocity starting at 0, and
    the per-frame ``(x, z)`` velocity is expressed in the heading frame.
    The first frame sits at the origin, so the result is defined up to a
    rigid motion of the whole path.

    Returns
    -------
    positions : array, shape (N, 3)
        ``(x, height, z)`` per frame.
    heading : array, shape (N,)
    """
    f, lay = motion.frames, motion.layout
    omega = f[:, lay["root_angular_velocity"]][:, 0]
    heading = np.concatenate([[0.0], np.cumsum(omega[:-1])])
    vx = f[:, lay["root_velocity_x"]][:, 0]
    vz = f[:, lay["root_velocity_z"]][:, 0]
    c, s = np.cos(heading), np.sin(heading)
    step_x = vx * c + vz * s
    step_z = -vx * s + vz * c
    x = np.concatenate([[0.0], np.cumsum(step_x[:-1])])
    z = np.concatenate([[0.0], np.cumsum(step_z[:-1])])
    y = f[:, lay["root_height"]][:, 0]
    return np.stack([x, y, z], axis=1), heading


def global_joint_positions(motion: MotionSequence):
    """World positions of the non-root joints, shape ``(N, J - 1, 3)``.

    Local positions are rotated by the root heading and offset by the
    integrated root ``(x, z)``; heights are taken as stored.
    """
    root, heading = root_trajectory(motion)
    local = motion.joint_positions()
    c, s = np.cos(heading)[:, None], np.sin(heading)[:, None]
    gx = root[:, :1] + local[..., 0] * c + local[..., 2] * s
    gz = root[:, 2:] - local[..., 0] * s + local[..., 2] * c
    return np.stack([gx, local[..., 1], gz], axis=-1)
