"""Repeated-trial evaluation of a generated motion set against reference motions."""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field

import numpy as np
from sklearn.base import clone

from .distances import diversity, frechet_distance, mm_dist, mmodality, r_precision
from .embedders import TemporalStatsEmbedder
from .jitter import JitterOrder, _order, dataset_jitter

TRIAL_METRICS = ("fid", "diversity", "mm_dist", "r_precision_top1", "r_precision_top2",
                 "r_precision_top3", "jitter")


@dataclass(frozen=True)
class MetricSummary:
    mean: float
    std: float
    trials: int

    def __post_init__(self):
        if self.trials < 1:
            raise ValueError("trial count must be >= 1")
        if not self.std >= 0:
            raise ValueError("deviation must be >= 0")


@dataclass
class MetricReport:
    """Metric name to ``(mean, std, trials)``, plus the raw per-trial values."""

    metrics: dict
    per_trial: dict = field(default_factory=dict)
    jitter_order: str = "jerk"
    reference_jitter: float | None = None

    def __getitem__(self, name):
        return self.metrics[name]

    def to_dict(self):
        out = {name: {"mean": s.mean, "std": s.std, "trials": s.trials}
               for name, s in self.metrics.items()}
        out["_meta"] = {"jitter_order": self.jitter_order, "reference_jitter": self.reference_jitter}
        return out

    def write_json(self, path):
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh, indent=2, sort_keys=True)
            fh.write("\n")

    def write_trials_csv(self, path):
        names = [n for n in self.per_trial]
        n_trials = max((len(v) for v in self.per_trial.values()), default=0)
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["trial", *names])
            for i in range(n_trials):
                row = [self.per_trial[n][i] if i < len(self.per_trial[n]) else "" for n in names]
                w.writerow([i, *(repr(float(v)) if v != "" else "" for v in row)])


def summarize(values):
    v = np.asarray(values, dtype=np.float64)
    return MetricSummary(float(v.mean()), float(v.std()), int(v.size))


def evaluate_motions(generated, generated_ids, reference, reference_ids, embedder=None, trials=20,
                     seed=0, jitter_order=JitterOrder.JERK, diversity_pairs=300, r_batch_size=32,
                     mmodality_pairs=10, regenerate=None):
    """Score generated motions against a reference set.

    The embedder is fitted on the reference motions (and their condition
    ids, for the text side). The sampled metrics (Diversity, R-Precision)
    draw fresh pairs and batches in every trial from the sub-seed
    ``(seed, trial)``. FID, Jitter and MM-Dist are deterministic for a
    fixed set, so they only spread across trials when ``regenerate``
    supplies a new set per trial. MModality is computed once over the
    first set grouped by condition id, when every group has at least two
    members.

    Parameters
    ----------
    regenerate : callable, optional
        ``regenerate(trial)`` returns a fresh generated set with the same
        condition ids; used for trials 1 and up, trial 0 scores
        ``generated``.

    Returns
    -------
    MetricReport
    """
    generated = list(generated)
    reference = list(reference)
    gen_ids = np.asarray(generated_ids, dtype=np.int64)
    ref_ids = np.asarray(reference_ids, dtype=np.int64)
    if not generated or not reference:
        raise ValueError("generated and reference sets must be non-empty")
    if gen_ids.shape[0] != len(generated) or ref_ids.shape[0] != len(reference):
        raise ValueError("every motion needs exactly one condition id")
    if trials < 1:
        raise ValueError("trials must be >= 1")
    order = _order(jitter_order)
    emb = clone(embedder) if embedder is not None else TemporalStatsEmbedder()
    emb.fit(reference, ref_ids)
    if not hasattr(emb, "text_table_"):
        emb.fit_text(emb.transform(reference), ref_ids)
    missing = set(gen_ids.tolist()) - set(ref_ids.tolist())
    if missing:
        raise ValueError(f"condition ids {sorted(missing)} have no reference motion")

    ref_emb = emb.transform(reference)
    text_emb = emb.embed_text(gen_ids)
    can_rank = len(generated) >= r_batch_size

    per_trial = {name: [] for name in TRIAL_METRICS}
    if not can_rank:
        for k in (1, 2, 3):
            del per_trial[f"r_precision_top{k}"]
    first_emb = None
    for trial in range(trials):
        motions = generated if trial == 0 or regenerate is None else list(regenerate(trial))
        if len(motions) != len(generated):
            raise ValueError("regenerated set size differs from the first set")
        if trial == 0 or regenerate is not None:
            gen_emb = emb.transform(motions)
            fid = frechet_distance(gen_emb, ref_emb)
            jit = dataset_jitter(motions, order)
            mmd = mm_dist(text_emb, gen_emb)
        if first_emb is None:
            first_emb = gen_emb
        rng = np.random.default_rng(np.random.SeedSequence([int(seed), trial]))
        per_trial["fid"].append(fid)
        per_trial["jitter"].append(jit)
        per_trial["mm_dist"].append(mmd)
        per_trial["diversity"].append(diversity(gen_emb, diversity_pairs, rng) if len(motions) > 1 else 0.0)
        if can_rank:
            # one shared batch layout per trial so top-k values are nested
            state = rng.bit_generator.state
            for k in (1, 2, 3):
                rng.bit_generator.state = state
                per_trial[f"r_precision_top{k}"].append(
                    r_precision(text_emb, gen_emb, k, r_batch_size, rng))

    metrics = {name: summarize(v) for name, v in per_trial.items()}
    groups = {int(c): first_emb[gen_ids == c] for c in np.unique(gen_ids)}
    if all(g.shape[0] >= 2 for g in groups.values()):
        rng = np.random.default_rng(np.random.SeedSequence([int(seed), trials]))
        metrics["mmodality"] = MetricSummary(mmodality(groups, mmodality_pairs, rng), 0.0, 1)
    return MetricReport(metrics, per_trial, JitterOrder(order).name.lower(),
                        dataset_jitter(reference, order))
