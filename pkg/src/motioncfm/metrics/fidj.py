"""Mahalanobis distance of (FID, Jitter) pairs from the ground-truth pair."""

from __future__ import annotations

import csv
import enum
from dataclasses import dataclass

import numpy as np
from scipy.stats import chi2

MAD_CONSISTENCY = 0.6745
MAD_FLOOR = 1e-12


class OutlierRule(str, enum.Enum):
    MAHALANOBIS = "mahalanobis"
    MAD_ZSCORE = "mad_zscore"
    NONE = "none"


@dataclass(frozen=True)
class MethodPoint:
    name: str
    fid: float
    jitter: float

    def __post_init__(self):
        if not (np.isfinite(self.fid) and np.isfinite(self.jitter)):
            raise ValueError(f"{self.name}: fid and jitter must be finite")
        if self.fid < 0 or self.jitter < 0:
            raise ValueError(f"{self.name}: fid and jitter must be >= 0")

    @property
    def vector(self):
        return np.array([self.fid, self.jitter])


def robust_zscores(values):
    """``0.6745 (v - median) / MAD`` with the MAD floored at 1e-12."""
    v = np.asarray(values, dtype=np.float64)
    med = np.median(v)
    mad = max(np.median(np.abs(v - med)), MAD_FLOOR)
    return MAD_CONSISTENCY * (v - med) / mad


def mad_outliers(values, threshold=3.0):
    """Boolean mask of values whose robust z-score exceeds ``threshold`` in magnitude."""
    if len(values) < 3:
        raise ValueError("the MAD rule needs at least 3 values")
    return np.abs(robust_zscores(values)) > threshold


def mahalanobis(x, mu, cov):
    diff = np.atleast_2d(np.asarray(x, dtype=np.float64) - mu)
    sol = np.linalg.solve(cov, diff.T).T
    return np.sqrt(np.maximum((diff * sol).sum(axis=1), 0.0))


def _cov(points, reg):
    cov = np.cov(points, rowvar=False)
    return cov + reg * np.trace(cov) / cov.shape[0] * np.eye(cov.shape[0])


def mahalanobis_outliers(points, quantile=0.95, reg=1e-10):
    """Flag points far from the point cloud's own centre.

    Fit mean/covariance on all points, flag ``D_M > sqrt(chi2_2(quantile))``,
    refit on the survivors once and flag again against the refit.
    """
    x = np.asarray(points, dtype=np.float64)
    if x.shape[0] < 3:
        raise ValueError("the Mahalanobis rule needs at least 3 points")
    limit = np.sqrt(chi2.ppf(quantile, df=x.shape[1]))
    keep = mahalanobis(x, x.mean(0), _cov(x, reg)) <= limit
    if keep.sum() >= 3:
        inl = x[keep]
        keep = mahalanobis(x, inl.mean(0), _cov(inl, reg)) <= limit
    return ~keep


@dataclass
class FidjResult:
    distances: dict
    inliers: dict
    covariance: np.ndarray

    def rows(self, points, ground_truth):
        out = [(ground_truth.name, ground_truth.fid, ground_truth.jitter, True, 0.0)]
        for p in points:
            out.append((p.name, p.fid, p.jitter, self.inliers[p.name], self.distances[p.name]))
        return out


def mahalanobis_fidj(points, ground_truth: MethodPoint, outlier_rule=OutlierRule.MAD_ZSCORE,
                     covariance=None, quantile=0.95, mad_threshold=3.0, reg=1e-10):
    """FID-J of every method against the ground truth.

    The outlier rule only decides which methods enter the covariance fit;
    distances are reported for all methods, and the ground truth maps to 0.

    Parameters
    ----------
    points : list of MethodPoint
    ground_truth : MethodPoint
    outlier_rule : OutlierRule or str
        ``mad_zscore`` screens the jitter values, ``mahalanobis`` screens the
        (fid, jitter) pairs, ``none`` keeps every method.
    covariance : array (2, 2), optional
        Use this matrix instead of fitting one.
    """
    rule = OutlierRule(outlier_rule)
    names = [p.name for p in points]
    if len(set(names)) != len(names):
        raise ValueError("method names must be unique")
    x = np.array([p.vector for p in points]).reshape(-1, 2)
    if covariance is None:
        if rule is OutlierRule.MAD_ZSCORE:
            flagged = mad_outliers(x[:, 1], mad_threshold)
        elif rule is OutlierRule.MAHALANOBIS:
            flagged = mahalanobis_outliers(x, quantile, reg)
        else:
            flagged = np.zeros(len(points), dtype=bool)
        inl = x[~flagged]
        if inl.shape[0] < 2:
            raise ValueError("fewer than 2 inliers left to fit the covariance")
        cov = _cov(inl, reg)
        if np.linalg.cond(cov) > 1e14:
            raise np.linalg.LinAlgError("inlier covariance is singular")
    else:
        cov = np.asarray(covariance, dtype=np.float64)
        flagged = np.zeros(len(points), dtype=bool)
    dist = mahalanobis(x, ground_truth.vector, cov) if len(points) else np.zeros(0)
    result = {p.name: float(d) for p, d in zip(points, dist)}
    result[ground_truth.name] = 0.0
    return FidjResult(result, {p.name: bool(not f) for p, f in zip(points, flagged)}, cov)


def write_fidj_csv(result: FidjResult, points, ground_truth, path):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["method", "fid", "jitter", "inlier_flag", "fidj"])
        for name, fid, jit, inl, d in result.rows(points, ground_truth):
            w.writerow([name, repr(fid), repr(jit), int(inl), repr(d)])
