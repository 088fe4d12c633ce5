"""Conditional flow matching along the linear Gaussian path.

The path from noise ``x0 ~ N(0, I)`` to a data sample ``x1`` is

    x_t = (1 - (1 - sigma_min) t) x0 + t x1

and the velocity that generates it, written in terms of ``x_t``, is

    u_t(x_t | x1) = (x1 - (1 - sigma_min) x_t) / (1 - (1 - sigma_min) t).

Two regression targets are supported: the clean sample ``x1`` itself
(target prediction) or ``u_t`` (vector-field prediction).
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

DENOMINATOR_EPS = 1e-6


class Objective(str, enum.Enum):
    TARGET = "target"
    VECTOR_FIELD = "vector_field"


class FlowSingularityError(ArithmeticError):
    """The conditional field's denominator vanished (``t -> 1`` with ``sigma_min = 0``)."""


@dataclass(frozen=True)
class CfmConfig:
    sigma_min: float = 0.0
    objective: Objective = Objective.TARGET

    def __post_init__(self):
        if not 0.0 <= self.sigma_min < 1.0:
            raise ValueError(f"sigma_min must lie in [0, 1), got {self.sigma_min}")
        object.__setattr__(self, "objective", Objective(self.objective))


@dataclass
class FlowSample:
    """One point on a conditional path.

    Arrays are ``(N, D)`` with ``N`` the padded batch length; ``mask`` marks
    the real frames. ``xt`` always equals ``flow_interpolate(x0, x1, t)``.
    """

    x0: np.ndarray
    x1: np.ndarray
    t: float
    xt: np.ndarray
    condition_id: int
    mask: np.ndarray | None = None
    sigma_min: float = 0.0

    def __post_init__(self):
        if self.mask is None:
            self.mask = np.ones(self.x1.shape[0], dtype=bool)


def flow_interpolate(x0, x1, t, sigma_min=0.0):
    x0 = np.asarray(x0, dtype=np.float64)
    x1 = np.asarray(x1, dtype=np.float64)
    if x0.shape != x1.shape:
        raise ValueError(f"x0 and x1 shapes differ: {x0.shape} vs {x1.shape}")
    t = _as_time(t, x0)
    return (1.0 - (1.0 - sigma_min) * t) * x0 + t * x1


def conditional_vector_field(xt, x1, t, sigma_min=0.0, eps=DENOMINATOR_EPS):
    xt = np.asarray(xt, dtype=np.float64)
    x1 = np.asarray(x1, dtype=np.float64)
    if xt.shape != x1.shape:
        raise ValueError(f"xt and x1 shapes differ: {xt.shape} vs {x1.shape}")
    t = _as_time(t, xt)
    denom = 1.0 - (1.0 - sigma_min) * t
    if np.any(denom <= eps):
        raise FlowSingularityError(
            f"vector field denominator {np.min(denom):.3g} <= {eps:g} (t too close to 1)"
        )
    return (x1 - (1.0 - sigma_min) * xt) / denom


def _as_time(t, like):
    # scalar t, or one t per leading-axis entry broadcast over the rest
    t = np.asarray(t, dtype=np.float64)
    if t.ndim == 0:
        return t
    return t.reshape(t.shape + (1,) * (like.ndim - t.ndim))


def make_training_batch(dataset, batch_size, rng, sigma_min=0.0, t=None, indices=None):
    """Draw ``batch_size`` path samples.

    Parameters
    ----------
    dataset : sequence of (frames, condition_id)
        ``frames`` are ``(N_i, D)`` arrays, typically already normalized.
    batch_size : int
    rng : numpy.random.Generator
    sigma_min : float
    t : float or array, optional
        Forces the path time instead of drawing ``t ~ U[0, 1]``.
    indices : array of int, optional
        Forces which dataset items are used.

    Returns
    -------
    list of FlowSample
        All padded to the longest item in the batch. Noise is drawn for
        the padded frames too but they are masked out of the loss.
    """
    if len(dataset) == 0:
        raise ValueError("cannot draw a batch from an empty dataset")
    if indices is None:
        indices = rng.integers(0, len(dataset), size=batch_size)
    indices = np.asarray(indices)
    times = rng.uniform(0.0, 1.0, size=len(indices))
    if t is not None:
        times = np.broadcast_to(np.asarray(t, dtype=np.float64), times.shape).copy()
    items = [dataset[i] for i in indices]
    n_max = max(f.shape[0] for f, _ in items)
    dim = items[0][0].shape[1]
    noise = rng.standard_normal((len(items), n_max, dim))
    samples = []
    for (frames, cid), x0, ti in zip(items, noise, times):
        n = frames.shape[0]
        x1 = np.zeros((n_max, dim))
        x1[:n] = frames
        mask = np.zeros(n_max, dtype=bool)
        mask[:n] = True
        xt = flow_interpolate(x0, x1, ti, sigma_min)
        samples.append(FlowSample(x0, x1, float(ti), xt, int(cid), mask, sigma_min))
    return samples


def regression_target(sample: FlowSample, config: CfmConfig):
    if config.objective is Objective.TARGET:
        return sample.x1
    return conditional_vector_field(sample.xt, sample.x1, sample.t, config.sigma_min)


def cfm_loss(prediction, sample: FlowSample, config: CfmConfig) -> float:
    """Mean squared error against the objective's target over unmasked frames."""
    prediction = np.asarray(prediction, dtype=np.float64)
    if prediction.shape != sample.x1.shape:
        raise ValueError(f"prediction shape {prediction.shape} != target shape {sample.x1.shape}")
    target = regression_target(sample, config)
    diff = (prediction - target)[sample.mask]
    return float(np.mean(diff * diff))
