"""Per-feature z-scoring of motion datasets."""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from .layout import MotionSequence

STD_FLOOR = 1e-8


@dataclass
class NormStats:
    mean: np.ndarray
    std: np.ndarray

    def __post_init__(self):
        self.mean = np.asarray(self.mean, dtype=np.float64)
        self.std = np.asarray(self.std, dtype=np.float64)
        if self.mean.shape != self.std.shape or self.mean.ndim != 1:
            raise ValueError("mean and std must be 1-D vectors of equal length")

    @classmethod
    def identity(cls, dim: int) -> "NormStats":
        return cls(np.zeros(dim), np.ones(dim))


def fit_normalization(dataset, floor: float = STD_FLOOR) -> NormStats:
    """Mean and floored standard deviation over all frames of ``dataset``."""
    if len(dataset) == 0:
        raise ValueError("cannot fit normalization on an empty dataset")
    stacked = np.concatenate([m.frames for m in dataset], axis=0)
    mean = stacked.mean(axis=0)
    std = np.maximum(stacked.std(axis=0), floor)
    return NormStats(mean, std)


def normalize(motion: MotionSequence, stats: NormStats) -> MotionSequence:
    return replace(motion, frames=(motion.frames - stats.mean) / stats.std)


def denormalize(motion: MotionSequence, stats: NormStats) -> MotionSequence:
    return replace(motion, frames=motion.frames * stats.std + stats.mean)


class MotionNormalizer(TransformerMixin, BaseEstimator):
    """Scikit-learn transformer wrapper around :func:`fit_normalization`.

    ``X`` is a list of :class:`MotionSequence`; ``transform`` returns a new
    list and leaves the input untouched.
    """

    def __init__(self, floor=STD_FLOOR):
        self.floor = floor

    def fit(self, X, y=None):
        self.stats_ = fit_normalization(list(X), floor=self.floor)
        self.n_features_in_ = self.stats_.mean.shape[0]
        return self

    def transform(self, X):
        check_is_fitted(self, "stats_")
        return [normalize(m, self.stats_) for m in X]

    def inverse_transform(self, X):
        check_is_fitted(self, "stats_")
        return [denormalize(m, self.stats_) for m in X]
