"""Embedding-space metrics: FID, diversity, multimodal distance, R-precision, multimodality."""

from __future__ import annotations

import numpy as np

COV_REG = 1e-10


def _as_2d(x, name):
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 2:
        raise ValueError(f"{name} must be a 2-D (samples, dim) array, got shape {x.shape}")
    return x


def regularized_cov(x, reg=COV_REG):
    cov = np.atleast_2d(np.cov(x, rowvar=False))
    d = cov.shape[0]
    return cov + reg * max(np.trace(cov) / d, 0.0) * np.eye(d)


def gaussian_frechet(mu_a, cov_a, mu_b, cov_b):
    """Frechet distance between ``N(mu_a, cov_a)`` and ``N(mu_b, cov_b)``.

    The cross term ``tr (cov_a cov_b)^{1/2}`` is evaluated as the trace of
    the square root of the symmetric PSD matrix ``A^{1/2} cov_b A^{1/2}``,
    which has the same spectrum.
    """
    w, v = np.linalg.eigh(cov_a)
    root_a = (v * np.sqrt(np.clip(w, 0.0, None))) @ v.T
    inner = root_a @ cov_b @ root_a
    eig = np.linalg.eigvalsh((inner + inner.T) / 2)
    cross = np.sqrt(np.clip(eig, 0.0, None)).sum()
    diff = mu_a - mu_b
    value = diff @ diff + np.trace(cov_a) + np.trace(cov_b) - 2.0 * cross
    return float(max(value, 0.0))


def frechet_distance(set_a, set_b, reg=COV_REG):
    a = _as_2d(set_a, "set_a")
    b = _as_2d(set_b, "set_b")
    if a.shape[0] < 2 or b.shape[0] < 2:
        raise ValueError("each set needs at least 2 samples")
    if a.shape[1] != b.shape[1]:
        raise ValueError(f"dimension mismatch: {a.shape[1]} vs {b.shape[1]}")
    return gaussian_frechet(a.mean(0), regularized_cov(a, reg), b.mean(0), regularized_cov(b, reg))


def _sample_pairs(n, pair_count, rng):
    """Distinct unordered index pairs ``i < j``; all of them when ``pair_count`` covers the set."""
    iu, ju = np.triu_indices(n, k=1)
    total = iu.shape[0]
    if pair_count is None or pair_count >= total:
        return iu, ju
    pick = rng.choice(total, size=pair_count, replace=False)
    return iu[pick], ju[pick]


def diversity(embeddings, pair_count=300, rng=None):
    """Mean distance over randomly drawn distinct pairs of embeddings."""
    x = _as_2d(embeddings, "embeddings")
    if x.shape[0] < 2:
        raise ValueError("diversity needs at least 2 embeddings")
    rng = np.random.default_rng(0) if rng is None else rng
    i, j = _sample_pairs(x.shape[0], pair_count, rng)
    return float(np.linalg.norm(x[i] - x[j], axis=1).mean())


def mm_dist(text_embeddings, motion_embeddings):
    t = _as_2d(text_embeddings, "text_embeddings")
    m = _as_2d(motion_embeddings, "motion_embeddings")
    if t.shape != m.shape:
        raise ValueError(f"paired embeddings differ in shape: {t.shape} vs {m.shape}")
    return float(np.linalg.norm(t - m, axis=1).mean())


def r_precision(text_embeddings, motion_embeddings, k=3, batch_size=32, rng=None):
    """Top-``k`` retrieval accuracy inside shuffled batches of ``batch_size`` pairs.

    Each text is ranked against every motion of its batch by Euclidean
    distance; a hit means its own motion is among the ``k`` nearest.
    Incomplete trailing batches are dropped.
    """
    t = _as_2d(text_embeddings, "text_embeddings")
    m = _as_2d(motion_embeddings, "motion_embeddings")
    if t.shape != m.shape:
        raise ValueError(f"paired embeddings differ in shape: {t.shape} vs {m.shape}")
    if not 1 <= k < batch_size:
        raise ValueError(f"k must satisfy 1 <= k < batch_size={batch_size}, got {k}")
    n_batches = t.shape[0] // batch_size
    if n_batches == 0:
        raise ValueError(f"need at least batch_size={batch_size} pairs, got {t.shape[0]}")
    rng = np.random.default_rng(0) if rng is None else rng
    order = rng.permutation(t.shape[0])[: n_batches * batch_size].reshape(n_batches, batch_size)
    hits = 0
    for idx in order:
        d = np.linalg.norm(t[idx][:, None, :] - m[idx][None, :, :], axis=-1)
        own = np.diag(d)
        # rank = number of motions strictly closer than the matching one
        rank = (d < own[:, None]).sum(axis=1)
        hits += int((rank < k).sum())
    return hits / (n_batches * batch_size)


def mmodality(per_prompt_embeddings, pair_count=10, rng=None):
    """Average within-prompt pairwise distance, averaged over prompts.

    ``per_prompt_embeddings`` maps a prompt (or id) to an ``(S, dim)``
    array of embeddings of motions generated for it.
    """
    rng = np.random.default_rng(0) if rng is None else rng
    if not per_prompt_embeddings:
        raise ValueError("no prompts given")
    values = []
    for key in sorted(per_prompt_embeddings, key=str):
        x = _as_2d(per_prompt_embeddings[key], f"embeddings for {key!r}")
        if x.shape[0] < 2:
            raise ValueError(f"prompt {key!r} has fewer than 2 samples")
        i, j = _sample_pairs(x.shape[0], pair_count, rng)
        values.append(np.linalg.norm(x[i] - x[j], axis=1).mean())
    return float(np.mean(values))
