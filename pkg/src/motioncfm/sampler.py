"""Guided Euler integration from noise to motion."""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from .data.layout import MotionSequence


class SamplingError(FloatingPointError):
    def __init__(self, step):
        super().__init__(f"non-finite sampler state after step {step}")
        self.step = step


@dataclass
class SampleConfig:
    steps: int = 100
    guidance_scale: float = 2.5
    sigma_min: float = 0.0
    frames: int = 120
    seed: int = 0

    def __post_init__(self):
        if int(self.steps) != self.steps or self.steps < 1:
            raise ValueError(f"steps must be a positive integer, got {self.steps}")
        if not self.guidance_scale >= 0:
            raise ValueError("guidance_scale must be >= 0")
        if not 0 <= self.sigma_min < 1:
            raise ValueError("sigma_min must lie in [0, 1)")
        if self.frames < 2:
            raise ValueError("frames must be >= 2")

    def to_dict(self):
        return asdict(self)


def guided_predict(predict, xt, t, condition_id, null_id, scale):
    """Classifier-free guided clean-motion estimate.

    ``uncond + scale * (cond - uncond)``; ``scale`` 1 and 0 return the
    conditional or unconditional output itself without evaluating the
    other branch.
    """
    xt = np.asarray(xt, dtype=np.float64)
    b = xt.shape[0]
    cond = np.broadcast_to(np.asarray(condition_id, dtype=np.int64), (b,))
    t = np.broadcast_to(np.asarray(t, dtype=np.float64), (b,))
    if scale == 1:
        return predict(xt, t, cond)
    null = np.full(b, null_id, dtype=np.int64)
    if scale == 0:
        return predict(xt, t, null)
    both = predict(np.concatenate([xt, xt]), np.concatenate([t, t]), np.concatenate([cond, null]))
    conditional, unconditional = both[:b], both[b:]
    return unconditional + scale * (conditional - unconditional)


def euler_integrate(predict, x0, condition_id, null_id, steps, guidance_scale, sigma_min=0.0):
    """Integrate ``dx/dt = (G - (1 - s) x) / (1 - (1 - s) t)`` on ``t_i = i / M``.

    ``predict(xt, t, cond)`` maps batched ``(B, N, D)`` states to clean
    estimates; ``x0`` is the batched starting noise.
    """
    x = np.array(x0, dtype=np.float64)
    h = 1.0 / steps
    k = 1.0 - sigma_min
    for i in range(steps):
        t = i / steps
        x1_hat = guided_predict(predict, x, t, condition_id, null_id, guidance_scale)
        x = x + h * ((x1_hat - k * x) / (1.0 - k * t))
        if not np.all(np.isfinite(x)):
            raise SamplingError(i)
    return x


def sample_noise(seed, index, shape):
    """Per-sample starting noise from its own ``SeedSequence([seed, index])`` stream."""
    rng = np.random.default_rng(np.random.SeedSequence([int(seed), int(index)]))
    return rng.standard_normal(shape)


def euler_sample(model, condition_id, config: SampleConfig, index=0) -> MotionSequence:
    """Generate one motion from a :class:`~motioncfm.nn.checkpoint.Checkpoint`-like model.

    ``model`` needs ``predict_clean``, ``null_id``, ``norm``, ``layout``
    and ``fps``. The result is denormalized; contact channels stay
    continuous.
    """
    return generate_batch(model, [condition_id], config, index_offset=index)[0]


def generate_batch(model, condition_ids, config: SampleConfig, lengths=None, chunk=64, index_offset=0):
    """Fan out :func:`euler_sample` over many conditions.

    Sample ``i`` starts from the noise stream ``(config.seed, i)`` so a
    sample does not depend on which other samples share its chunk.
    """
    n = len(condition_ids)
    lengths = [config.frames] * n if lengths is None else list(lengths)
    if len(lengths) != n:
        raise ValueError("lengths and condition_ids differ in size")
    dim = model.layout.feature_dim
    out = [None] * n
    by_length = {}
    for i, length in enumerate(lengths):
        by_length.setdefault(int(length), []).append(i)
    for length in sorted(by_length):
        members = by_length[length]
        for start in range(0, len(members), chunk):
            idx = members[start:start + chunk]
            x0 = np.stack([sample_noise(config.seed, index_offset + i, (length, dim)) for i in idx])
            conds = np.array([condition_ids[i] for i in idx], dtype=np.int64)
            x = euler_integrate(model.predict_clean, x0, conds, model.null_id, config.steps,
                                config.guidance_scale, config.sigma_min)
            frames = x * model.norm.std + model.norm.mean
            for j, i in enumerate(idx):
                out[i] = MotionSequence(frames[j], fps=model.fps, layout=model.layout)
    return out
