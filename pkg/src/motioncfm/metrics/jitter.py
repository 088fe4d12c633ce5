"""Finite-difference smoothness of joint trajectories."""

from __future__ import annotations

import enum

import numpy as np


class JitterOrder(enum.IntEnum):
    ACCELERATION = 2
    JERK = 3


def _order(order) -> int:
    if isinstance(order, str):
        return int(JitterOrder[order.upper()])
    return int(JitterOrder(order))


def jitter_positions(positions, fps, order=JitterOrder.JERK):
    """Mean norm of the ``order``-th time derivative of joint positions.

    Parameters
    ----------
    positions : array, shape (N, J, 3)
    fps : float
    order : JitterOrder, int or str
        2 (acceleration) or 3 (jerk).

    Returns
    -------
    float
        ``mean_{k,j} || diff^order p[:, j] ||_2 * fps**order``, in length
        units per second**order.
    """
    k = _order(order)
    p = np.asarray(positions, dtype=np.float64)
    if p.ndim != 3 or p.shape[-1] != 3:
        raise ValueError(f"positions must be (N, J, 3), got {p.shape}")
    if p.shape[0] < k + 1:
        raise ValueError(f"jitter of order {k} needs at least {k + 1} frames, got {p.shape[0]}")
    d = np.diff(p, n=k, axis=0) * float(fps) ** k
    return float(np.linalg.norm(d, axis=-1).mean())


def jitter(motion, order=JitterOrder.JERK):
    """Jitter of a :class:`MotionSequence`, from its local joint-position slice."""
    return jitter_positions(motion.joint_positions(), motion.fps, order)


def dataset_jitter(motions, order=JitterOrder.JERK):
    """Average per-sequence jitter; every sequence weighs the same."""
    if len(motions) == 0:
        raise ValueError("empty motion set")
    return float(np.mean([jitter(m, order) for m in motions]))


def motion_range(motions):
    """Mean per-sequence max joint coordinate minus mean per-sequence min."""
    if len(motions) == 0:
        raise ValueError("empty motion set")
    highs = [m.joint_positions().max() for m in motions]
    lows = [m.joint_positions().min() for m in motions]
    return float(np.mean(highs) - np.mean(lows))


def jitter_scale(jitter_value, range_reference, range_other):
    """Rescale a jitter measured on another dataset to the reference dataset's spatial range.

    Returns ``(range_reference / range_other) * jitter_value``.
    """
    if not (range_reference > 0 and range_other > 0):
        raise ValueError("motion ranges must be positive")
    return (range_reference / range_other) * jitter_value
