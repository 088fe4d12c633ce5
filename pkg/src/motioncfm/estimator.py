"""Scikit-learn style front end: fit on motions and labels, then generate."""

from __future__ import annotations

import numbers

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from .data.layout import ConditionVocab, MotionSequence
from .metrics.distances import frechet_distance
from .metrics.embedders import TemporalStatsEmbedder
from .nn.predictor import VARIANTS, PredictorConfig
from .sampler import SampleConfig, generate_batch
from .trainer import TrainConfig, train


def check_motion_set(X, name="X"):
    """Validate a non-empty list of :class:`MotionSequence` sharing one layout and fps."""
    motions = list(X)
    if not motions:
        raise ValueError(f"{name} is empty")
    for i, m in enumerate(motions):
        if not isinstance(m, MotionSequence):
            raise TypeError(f"{name}[{i}] is {type(m).__name__}, expected MotionSequence")
    layout, fps = motions[0].layout, motions[0].fps
    for i, m in enumerate(motions):
        if m.layout != layout or m.fps != fps:
            raise ValueError(f"{name}[{i}] has a different layout or fps than {name}[0]")
    return motions


def check_labels(y, n, vocab=None):
    """Turn prompts or integer ids into condition ids.

    Returns ``(ids, vocab)``. Without a vocabulary, prompts build one in
    order of first appearance, and integer ids are named ``"condition <i>"``.
    """
    labels = list(y)
    if len(labels) != n:
        raise ValueError(f"got {len(labels)} labels for {n} motions")
    if vocab is None:
        if all(isinstance(v, str) for v in labels):
            vocab = ConditionVocab(list(dict.fromkeys(labels)))
        elif all(isinstance(v, numbers.Integral) for v in labels):
            if min(labels) < 0:
                raise ValueError("condition ids must be >= 0")
            vocab = ConditionVocab([f"condition {i}" for i in range(max(labels) + 1)])
        else:
            raise TypeError("labels must be all prompts (str) or all condition ids (int)")
    ids = [vocab.id_of(v) if isinstance(v, str) else vocab.check_id(int(v), allow_null=False)
           for v in labels]
    return np.asarray(ids, dtype=np.int64), vocab


class MotionFlowGenerator(BaseEstimator):
    """Text-conditioned motion generator trained by conditional flow matching.

    ``fit`` trains the clean-motion predictor; ``predict`` maps condition
    labels to generated :class:`MotionSequence` objects with guided Euler
    sampling. Architecture arguments left as ``None`` take the small
    defaults of :meth:`PredictorConfig.desk`.

    Parameters
    ----------
    variant : {"frame_mlp", "attention"}
    hidden_dim, layer_count, head_count, ff_dim : int or None
    max_frames : int
    objective : {"target", "vector_field"}
        Regress the clean motion or the conditional vector field.
    sigma_min : float
    batch_size, steps : int
    learning_rate, weight_decay, condition_dropout_prob : float
    grad_clip : float or None
    sample_steps : int
        Euler steps at generation time.
    guidance_scale : float
    frames : int
        Default generated length.
    random_state : int
        Seeds training; generation uses ``random_state`` unless ``predict``
        gets its own seed.

    Attributes
    ----------
    checkpoint_ : Checkpoint
    loss_curve_ : list of (step, loss)
    vocab_ : ConditionVocab
    n_features_in_ : int
    """

    def __init__(self, variant="frame_mlp", hidden_dim=None, layer_count=None, head_count=None,
                 ff_dim=None, max_frames=196, objective="target", sigma_min=0.0, batch_size=32,
                 steps=2000, learning_rate=1e-4, weight_decay=0.01, condition_dropout_prob=0.1,
                 grad_clip=1.0, sample_steps=100, guidance_scale=2.5, frames=120, random_state=0):
        self.variant = variant
        self.hidden_dim = hidden_dim
        self.layer_count = layer_count
        self.head_count = head_count
        self.ff_dim = ff_dim
        self.max_frames = max_frames
        self.objective = objective
        self.sigma_min = sigma_min
        self.batch_size = batch_size
        self.steps = steps
        self.learning_rate = learning_rate
        self.weight_decay = weight_decay
        self.condition_dropout_prob = condition_dropout_prob
        self.grad_clip = grad_clip
        self.sample_steps = sample_steps
        self.guidance_scale = guidance_scale
        self.frames = frames
        self.random_state = random_state

    def _predictor_config(self, feature_dim, n_conditions):
        if self.variant not in VARIANTS:
            raise ValueError(f"variant must be one of {VARIANTS}, got {self.variant!r}")
        overrides = {k: getattr(self, k) for k in ("hidden_dim", "layer_count", "head_count", "ff_dim")
                     if getattr(self, k) is not None}
        return PredictorConfig.desk(self.variant, feature_dim, n_conditions,
                                    max_frames=self.max_frames, **overrides)

    def _train_config(self):
        return TrainConfig(batch_size=self.batch_size, steps=self.steps, learning_rate=self.learning_rate,
                           weight_decay=self.weight_decay, condition_dropout_prob=self.condition_dropout_prob,
                           objective=self.objective, sigma_min=self.sigma_min, grad_clip=self.grad_clip,
                           seed=self.random_state)

    def _sample_config(self, seed):
        return SampleConfig(steps=self.sample_steps, guidance_scale=self.guidance_scale,
                            sigma_min=self.sigma_min, frames=self.frames,
                            seed=self.random_state if seed is None else seed)

    def fit(self, X, y, vocab=None):
        """Train on motions ``X`` labelled by prompts or condition ids ``y``."""
        motions = check_motion_set(X)
        ids, vocab = check_labels(y, len(motions), vocab)
        too_long = max(m.n_frames for m in motions)
        if too_long > self.max_frames:
            raise ValueError(f"a motion has {too_long} frames, above max_frames={self.max_frames}")
        train_config = self._train_config()
        pred_config = self._predictor_config(motions[0].layout.feature_dim, vocab.n_conditions)
        result = train(motions, ids, vocab, pred_config, train_config)
        self.checkpoint_ = result.checkpoint
        self.loss_curve_ = result.loss_curve
        self.vocab_ = vocab
        self.n_features_in_ = motions[0].layout.feature_dim
        return self

    @classmethod
    def from_checkpoint(cls, checkpoint, **params):
        """Wrap an already trained checkpoint."""
        est = cls(variant=checkpoint.config.variant, objective=checkpoint.cfm.objective.value,
                  sigma_min=checkpoint.cfm.sigma_min, max_frames=checkpoint.config.max_frames, **params)
        est.checkpoint_ = checkpoint
        est.loss_curve_ = []
        est.vocab_ = checkpoint.vocab
        est.n_features_in_ = checkpoint.layout.feature_dim
        return est

    def predict(self, y, lengths=None, seed=None):
        """Generate one motion per label.

        Parameters
        ----------
        y : sequence of str or int
            Prompts of the training vocabulary or condition ids.
        lengths : sequence of int, optional
            Frame count per motion; ``frames`` otherwise.
        seed : int, optional
            Noise seed; sample ``i`` uses the stream ``(seed, i)``.
        """
        check_is_fitted(self, "checkpoint_")
        labels = list(y)
        ids, _ = check_labels(labels, len(labels), self.vocab_)
        if lengths is not None:
            lengths = [int(n) for n in lengths]
            if any(n < 2 or n > self.checkpoint_.config.max_frames for n in lengths):
                raise ValueError(f"lengths must lie in [2, {self.checkpoint_.config.max_frames}]")
        return generate_batch(self.checkpoint_, ids, self._sample_config(seed), lengths=lengths)

    sample = predict

    def score(self, X, y):
        """Negative FID between motions generated for ``y`` and the motions ``X``.

        Generated lengths follow ``X``; embeddings use a
        :class:`TemporalStatsEmbedder` fitted on ``X``.
        """
        motions = check_motion_set(X)
        generated = self.predict(y, lengths=[m.n_frames for m in motions])
        emb = TemporalStatsEmbedder().fit(motions)
        return -frechet_distance(emb.transform(generated), emb.transform(motions))
