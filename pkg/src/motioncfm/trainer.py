"""AdamW training of the clean-motion predictor."""

from __future__ import annotations

import csv
import logging
from dataclasses import asdict, dataclass, field

import numpy as np

from .cfm import CfmConfig, Objective, make_training_batch
from .data.layout import ConditionVocab
from .data.normalize import fit_normalization
from .nn.checkpoint import Checkpoint
from .nn.predictor import (
    DivergenceError,
    FlowBatch,
    PredictorConfig,
    init_params,
    loss_and_grad,
)

log = logging.getLogger(__name__)


@dataclass
class TrainConfig:
    batch_size: int = 32
    steps: int = 2000
    learning_rate: float = 1e-4
    beta1: float = 0.9
    beta2: float = 0.999
    weight_decay: float = 0.01
    epsilon: float = 1e-8
    condition_dropout_prob: float = 0.1
    objective: str = "target"
    sigma_min: float = 0.0
    grad_clip: float | None = 1.0
    seed: int = 0
    log_every: int = 1

    def __post_init__(self):
        if self.batch_size < 1 or self.steps < 0 or self.log_every < 1:
            raise ValueError("batch_size and log_every must be >= 1 and steps >= 0")
        if self.learning_rate < 0 or self.weight_decay < 0 or not self.epsilon > 0:
            raise ValueError("learning_rate and weight_decay must be >= 0, epsilon > 0")
        if not (0 <= self.beta1 < 1 and 0 <= self.beta2 < 1):
            raise ValueError("betas must lie in [0, 1)")
        if not 0 <= self.condition_dropout_prob < 1:
            raise ValueError("condition_dropout_prob must lie in [0, 1)")
        if self.grad_clip is not None and not self.grad_clip > 0:
            raise ValueError("grad_clip must be positive or None")
        self.objective = Objective(self.objective).value
        CfmConfig(self.sigma_min, self.objective)

    @property
    def cfm(self) -> CfmConfig:
        return CfmConfig(self.sigma_min, self.objective)

    def to_dict(self):
        return asdict(self)


@dataclass
class OptimizerState:
    m: np.ndarray
    v: np.ndarray
    step: int = 0

    @classmethod
    def zeros(cls, n):
        return cls(np.zeros(n), np.zeros(n), 0)


def adamw_step(params, grads, state: OptimizerState, config: TrainConfig):
    """One decoupled-weight-decay Adam update, in place on ``params``.

    ``params`` and ``grads`` are flat float64 vectors; returns
    ``(params, state)`` for convenience.
    """
    if params.shape != grads.shape or state.m.shape != params.shape:
        raise ValueError("params, grads and optimizer moments must have the same shape")
    if not np.all(np.isfinite(grads)):
        raise ValueError("non-finite gradient passed to adamw_step")
    b1, b2 = config.beta1, config.beta2
    state.step += 1
    state.m *= b1
    state.m += (1 - b1) * grads
    state.v *= b2
    state.v += (1 - b2) * grads * grads
    m_hat = state.m / (1 - b1 ** state.step)
    v_hat = state.v / (1 - b2 ** state.step)
    params -= config.learning_rate * (m_hat / (np.sqrt(v_hat) + config.epsilon) + config.weight_decay * params)
    return params, state


class TrainingDivergedError(RuntimeError):
    """Raised when the loss turns non-finite; ``checkpoint`` holds the last good weights."""

    def __init__(self, step, checkpoint, loss_curve):
        super().__init__(f"training diverged at step {step}")
        self.step = step
        self.checkpoint = checkpoint
        self.loss_curve = loss_curve


@dataclass
class TrainResult:
    checkpoint: Checkpoint
    loss_curve: list = field(default_factory=list)  # (step, loss)

    def smoothed(self, window=100):
        losses = np.array([l for _, l in self.loss_curve])
        window = max(1, min(window, len(losses)))
        return losses[:window].mean(), losses[-window:].mean()


def clip_by_global_norm(grads, max_norm):
    norm = float(np.sqrt(np.dot(grads, grads)))
    if max_norm is not None and norm > max_norm:
        grads *= max_norm / norm
    return norm


def train(motions, condition_ids, vocab: ConditionVocab, predictor_config: PredictorConfig,
          config: TrainConfig, callback=None) -> TrainResult:
    """Fit the predictor on ``motions`` with the flow-matching objective.

    Normalization statistics are fitted on ``motions`` and stored in the
    returned checkpoint. Per step: draw a path batch, replace each
    condition by the empty one with probability
    ``config.condition_dropout_prob``, backprop, clip, AdamW.
    """
    if len(motions) == 0:
        raise ValueError("cannot train on an empty dataset")
    if predictor_config.n_conditions != vocab.n_conditions:
        raise ValueError("predictor n_conditions does not match the vocabulary")
    layout, fps = motions[0].layout, motions[0].fps
    norm = fit_normalization(motions)
    data = [((m.frames - norm.mean) / norm.std, vocab.check_id(c, allow_null=False))
            for m, c in zip(motions, condition_ids)]
    init_rng = np.random.default_rng(np.random.SeedSequence([config.seed, 0]))
    rng = np.random.default_rng(np.random.SeedSequence([config.seed, 1]))
    params = init_params(predictor_config, init_rng)
    state = OptimizerState.zeros(len(params))
    cfm = config.cfm
    curve = []

    def snapshot(p, step):
        meta = {"train": config.to_dict(), "step": step}
        return Checkpoint(p, norm, vocab, layout, fps, cfm, meta)

    last_good = params.copy()
    for step in range(config.steps):
        batch = FlowBatch.from_samples(make_training_batch(data, config.batch_size, rng, cfm.sigma_min))
        dropped = rng.random(config.batch_size) < config.condition_dropout_prob
        batch.condition_id = np.where(dropped, vocab.null_id, batch.condition_id)
        try:
            loss, grads = loss_and_grad(params, batch, cfm)
        except DivergenceError:
            raise TrainingDivergedError(step, snapshot(last_good, step), curve) from None
        clip_by_global_norm(grads.flat, config.grad_clip)
        adamw_step(params.flat, grads.flat, state, config)
        if not np.all(np.isfinite(params.flat)):
            raise TrainingDivergedError(step, snapshot(last_good, step), curve)
        last_good.flat[...] = params.flat
        if step % config.log_every == 0 or step == config.steps - 1:
            curve.append((step, loss))
            if callback is not None:
                callback(step, loss)
        if step % 500 == 0:
            log.info("step %d loss %.5f", step, loss)
    return TrainResult(snapshot(params, config.steps), curve)


def write_loss_curve(curve, path):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["step", "loss"])
        for step, loss in curve:
            w.writerow([step, repr(float(loss))])
