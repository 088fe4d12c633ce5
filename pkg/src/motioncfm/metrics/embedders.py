"""Deterministic motion/text embedders standing in for pretrained evaluators."""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from ..data.normalize import fit_normalization


def temporal_stats(frames):
    """Per-dimension mean, std and mean absolute first difference, concatenated."""
    f = np.asarray(frames, dtype=np.float64)
    return np.concatenate([f.mean(0), f.std(0), np.abs(np.diff(f, axis=0)).mean(0)])


class TemporalStatsEmbedder(TransformerMixin, BaseEstimator):
    """Training-free motion embedder.

    ``fit`` learns normalization statistics on reference motions and draws
    a fixed orthonormal projection from ``3 * D`` statistics down to
    ``output_dim``. Text embeddings are the per-prompt centroids of the
    reference motions' embeddings.

    Parameters
    ----------
    output_dim : int, default=32
    random_state : int, default=0
        Seed of the projection.
    """

    def __init__(self, output_dim=32, random_state=0):
        self.output_dim = output_dim
        self.random_state = random_state

    def fit(self, X, y=None):
        motions = list(X)
        if not motions:
            raise ValueError("TemporalStatsEmbedder needs at least one motion to fit")
        self.norm_ = fit_normalization(motions)
        in_dim = 3 * motions[0].layout.feature_dim
        if self.output_dim > in_dim:
            raise ValueError(f"output_dim {self.output_dim} exceeds statistics width {in_dim}")
        rng = np.random.default_rng(self.random_state)
        q, r = np.linalg.qr(rng.standard_normal((in_dim, self.output_dim)))
        self.projection_ = q * np.sign(np.diag(r))
        self.n_features_in_ = motions[0].layout.feature_dim
        if y is not None:
            self.fit_text(self.transform(motions), y)
        return self

    def transform(self, X):
        check_is_fitted(self, "projection_")
        stats = np.stack([
            temporal_stats((m.frames - self.norm_.mean) / self.norm_.std) for m in X
        ])
        return stats @ self.projection_

    def fit_text(self, motion_embeddings, condition_ids):
        ids = np.asarray(condition_ids)
        self.text_table_ = {int(c): motion_embeddings[ids == c].mean(0) for c in np.unique(ids)}
        return self

    def embed_text(self, condition_ids):
        check_is_fitted(self, "text_table_")
        return np.stack([self.text_table_[int(c)] for c in condition_ids])


def _unit_rows(x):
    norm = np.maximum(np.linalg.norm(x, axis=1, keepdims=True), 1e-12)
    return x / norm, norm


def _unit_rows_backward(d_unit, unit, norm):
    return (d_unit - unit * (d_unit * unit).sum(axis=1, keepdims=True)) / norm


def contrastive_loss(stats, w, table, onehot, temperature):
    """Cross-entropy of cosine-similarity logits and its gradients in ``w`` and ``table``."""
    z, z_norm = _unit_rows(stats @ w)
    t, t_norm = _unit_rows(table)
    logits = z @ t.T / temperature
    logits -= logits.max(axis=1, keepdims=True)
    log_p = logits - np.log(np.exp(logits).sum(axis=1, keepdims=True))
    n = stats.shape[0]
    loss = -float((onehot * log_p).sum()) / n
    dlogits = (np.exp(log_p) - onehot) / (n * temperature)
    gw = stats.T @ _unit_rows_backward(dlogits @ t, z, z_norm)
    gt = _unit_rows_backward(dlogits.T @ z, t, t_norm)
    return loss, gw, gt


class ContrastiveEmbedder(TransformerMixin, BaseEstimator):
    """Linear motion and text encoders trained contrastively.

    Both sides are L2-normalized and the loss is the softmax cross-entropy
    of each motion's cosine similarity to every text row, divided by
    ``temperature``, with its own condition as the positive.

    Motions enter through the same normalized temporal statistics as
    :class:`TemporalStatsEmbedder`; texts are rows of a learned table over
    condition ids. Trained by full-batch gradient descent, so the result is
    a deterministic function of the data and ``random_state``.
    """

    def __init__(self, output_dim=32, temperature=0.1, n_iter=300, learning_rate=0.1, random_state=0):
        self.output_dim = output_dim
        self.temperature = temperature
        self.n_iter = n_iter
        self.learning_rate = learning_rate
        self.random_state = random_state

    def _stats(self, X):
        return np.stack([temporal_stats((m.frames - self.norm_.mean) / self.norm_.std) for m in X])

    def fit(self, X, y):
        motions = list(X)
        ids = np.asarray(y, dtype=np.int64)
        if len(motions) != ids.shape[0] or len(motions) < 2:
            raise ValueError("need at least 2 motions with one condition id each")
        self.norm_ = fit_normalization(motions)
        s = self._stats(motions)
        self.stat_mean_ = s.mean(0)
        self.stat_std_ = np.maximum(s.std(0), 1e-8)
        s = (s - self.stat_mean_) / self.stat_std_
        rng = np.random.default_rng(self.random_state)
        n_text = int(ids.max()) + 1
        w = rng.standard_normal((s.shape[1], self.output_dim)) / np.sqrt(s.shape[1])
        table = rng.standard_normal((n_text, self.output_dim))
        onehot = np.eye(n_text)[ids]
        for _ in range(self.n_iter):
            _, gw, gt = contrastive_loss(s, w, table, onehot, self.temperature)
            w -= self.learning_rate * gw
            table -= self.learning_rate * gt
        self.weights_ = w
        self.text_table_ = _unit_rows(table)[0]
        self.n_features_in_ = motions[0].layout.feature_dim
        return self

    def transform(self, X):
        check_is_fitted(self, "weights_")
        return _unit_rows(((self._stats(X) - self.stat_mean_) / self.stat_std_) @ self.weights_)[0]

    def embed_text(self, condition_ids):
        check_is_fitted(self, "text_table_")
        return self.text_table_[np.asarray(condition_ids, dtype=np.int64)]


EMBEDDERS = {"temporal_stats": TemporalStatsEmbedder, "contrastive": ContrastiveEmbedder}


def make_embedder(kind="temporal_stats", **kwargs):
    try:
        return EMBEDDERS[kind](**kwargs)
    except KeyError:
        raise ValueError(f"unknown embedder kind {kind!r}; expected one of {sorted(EMBEDDERS)}") from None
