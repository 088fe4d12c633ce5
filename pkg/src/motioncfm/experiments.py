"""Multi-run harness: held-out evaluation, objective ablation and sampler sweeps."""

from __future__ import annotations

import csv
import logging
from dataclasses import dataclass, replace

import numpy as np

from .config import MetricSection, RunConfig
from .data.io import read_dataset, write_dataset
from .data.synthetic import DatasetSpec, FamilySpec, generate_synthetic_dataset
from .metrics.distances import frechet_distance
from .metrics.embedders import make_embedder
from .metrics.evaluate import evaluate_motions
from .metrics.jitter import dataset_jitter
from .sampler import SampleConfig, generate_batch
from .trainer import train

log = logging.getLogger(__name__)

HELDOUT_SPLIT = 1


@dataclass
class MotionSet:
    motions: list
    condition_ids: np.ndarray
    vocab: object

    def __len__(self):
        return len(self.motions)

    @property
    def lengths(self):
        return [m.n_frames for m in self.motions]


def heldout_spec(spec: DatasetSpec, per_family):
    families = [FamilySpec(f.kind, f.prompt, per_family, f.ranges) for f in spec.families]
    return DatasetSpec(families, spec.fps, spec.min_frames, spec.max_frames, spec.contact_threshold)


def synthesize(config: RunConfig):
    """Training and held-out sets for the configured synthetic dataset."""
    spec = config.dataset_spec()
    seed = config.dataset_seed
    motions, ids, vocab = generate_synthetic_dataset(spec, seed)
    held, held_ids, _ = generate_synthetic_dataset(
        heldout_spec(spec, config.metrics.heldout_per_family), seed, split=HELDOUT_SPLIT)
    return MotionSet(motions, np.asarray(ids), vocab), MotionSet(held, np.asarray(held_ids), vocab)


def write_splits(out_dir, train_set: MotionSet, heldout: MotionSet):
    write_dataset(f"{out_dir}/train", train_set.motions, train_set.condition_ids, train_set.vocab)
    write_dataset(f"{out_dir}/heldout", heldout.motions, heldout.condition_ids, heldout.vocab)


def read_split(path):
    motions, ids, vocab = read_dataset(path)
    return MotionSet(motions, np.asarray(ids), vocab)


def load_splits(config: RunConfig, data_dir=None):
    """Read ``data_dir/{train,heldout}`` written by dataset-gen, or synthesize from the config."""
    if data_dir is None:
        return synthesize(config)
    return read_split(f"{data_dir}/train"), read_split(f"{data_dir}/heldout")


def _embedder(metrics: MetricSection):
    return make_embedder(metrics.embedder, output_dim=metrics.output_dim)


def generate_like(checkpoint, reference: MotionSet, sample_config: SampleConfig, chunk=64):
    """One generated motion per reference motion, with matching prompt and length."""
    return generate_batch(checkpoint, list(reference.condition_ids), sample_config,
                          lengths=reference.lengths, chunk=chunk)


def evaluate_checkpoint(checkpoint, reference: MotionSet, config: RunConfig, sample_config=None):
    """Generate against the reference prompts and lengths, then run the metric battery.

    Every trial after the first regenerates the set from its own noise
    seed, so FID and Jitter report a spread over generations.
    """
    if sample_config is None:
        sample_config = config.sample.build(config.seed, checkpoint.cfm.sigma_min)
    generated = generate_like(checkpoint, reference, sample_config, config.sample.chunk)

    def regenerate(trial):
        seed = int(np.random.SeedSequence([sample_config.seed, trial]).generate_state(1)[0])
        return generate_like(checkpoint, reference, replace(sample_config, seed=seed), config.sample.chunk)

    report = evaluate_set(generated, reference.condition_ids, reference, config.metrics, config.seed,
                          regenerate=regenerate)
    return report, generated


def evaluate_set(generated, generated_ids, reference: MotionSet, metrics: MetricSection, seed, regenerate=None):
    return evaluate_motions(
        generated, generated_ids, reference.motions, reference.condition_ids,
        embedder=_embedder(metrics), trials=metrics.trials, seed=seed,
        jitter_order=metrics.jitter_order, diversity_pairs=metrics.diversity_pairs,
        r_batch_size=metrics.r_batch_size, mmodality_pairs=metrics.mmodality_pairs, regenerate=regenerate)


def fid_and_jitter(generated, reference: MotionSet, metrics: MetricSection):
    """The two sweep metrics: FID against the reference and dataset Jitter."""
    emb = _embedder(metrics).fit(reference.motions, reference.condition_ids)
    fid = frechet_distance(emb.transform(generated), emb.transform(reference.motions))
    return fid, dataset_jitter(generated, metrics.jitter_order)


# ---------------------------------------------------------------- ablation

ABLATION_FIELDS = ("seed", "objective", "final_loss", "fid", "jitter", "gt_jitter", "jitter_error")


@dataclass
class AblationResult:
    rows: list  # dicts keyed by ABLATION_FIELDS
    gt_jitter: float

    def arm(self, objective):
        return [r for r in self.rows if r["objective"] == objective]

    def paired(self):
        """Per-seed comparison of the two arms."""
        target = {r["seed"]: r for r in self.arm("target")}
        field_ = {r["seed"]: r for r in self.arm("vector_field")}
        out = []
        for seed in target:
            a, b = target[seed], field_[seed]
            out.append({
                "seed": seed,
                "target_jitter_error": a["jitter_error"],
                "vector_field_jitter_error": b["jitter_error"],
                "jitter_error_difference": a["jitter_error"] - b["jitter_error"],
                "target_fid": a["fid"],
                "vector_field_fid": b["fid"],
                "target_wins": a["jitter_error"] <= b["jitter_error"],
            })
        return out

    def direction_holds(self, tolerance=0.10):
        """Target error <= vector-field error in a majority of seeds and never worse by more than ``tolerance``."""
        pairs = self.paired()
        wins = sum(p["target_wins"] for p in pairs)
        worst = max(p["target_jitter_error"] / max(p["vector_field_jitter_error"], 1e-12) for p in pairs)
        return wins >= (2 * len(pairs) + 2) // 3 and worst <= 1.0 + tolerance


def run_ablation(train_set: MotionSet, reference: MotionSet, config: RunConfig, on_arm=None):
    """Train both objectives for every seed under one budget and architecture.

    Both arms of a seed share parameter initialization, batch stream and
    sampling noise; only the regression target differs. ``on_arm`` is
    called with ``(seed, objective, train_result)`` after each training run.
    """
    metrics = config.metrics
    gt_jitter = dataset_jitter(reference.motions, metrics.jitter_order)
    rows = []
    for seed in config.ablation.seeds:
        for objective in config.ablation.objectives:
            rows.append(ablation_arm(train_set, reference, config, seed, objective, gt_jitter, on_arm))
    return AblationResult(rows, gt_jitter)


def ablation_arm(train_set, reference, config: RunConfig, seed, objective, gt_jitter=None, on_arm=None):
    metrics = config.metrics
    if gt_jitter is None:
        gt_jitter = dataset_jitter(reference.motions, metrics.jitter_order)
    tc = config.train_config(seed=seed, objective=objective)
    pc = config.model.build(train_set.motions[0].layout.feature_dim, train_set.vocab.n_conditions)
    log.info("ablation seed %d objective %s", seed, objective)
    result = train(train_set.motions, train_set.condition_ids, train_set.vocab, pc, tc)
    if on_arm is not None:
        on_arm(seed, objective, result)
    generated = generate_like(result.checkpoint, reference,
                              config.sample.build(seed, tc.sigma_min), config.sample.chunk)
    fid, jit = fid_and_jitter(generated, reference, metrics)
    final = result.smoothed()[1] if result.loss_curve else float("nan")
    return {"seed": seed, "objective": objective, "final_loss": float(final), "fid": fid,
            "jitter": jit, "gt_jitter": gt_jitter, "jitter_error": abs(jit - gt_jitter)}


def _fmt(value):
    if isinstance(value, (bool, np.bool_)):
        return int(value)
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    return value


def write_rows(rows, path, columns):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(columns)
        for r in rows:
            w.writerow([_fmt(r[c]) for c in columns])


def write_ablation_csvs(result: AblationResult, out_dir):
    write_rows(result.rows, f"{out_dir}/ablation_runs.csv", ABLATION_FIELDS)
    pairs = result.paired()
    write_rows(pairs, f"{out_dir}/ablation_paired.csv", list(pairs[0]))


# ---------------------------------------------------------------- sweep

def run_sweep(checkpoint, reference: MotionSet, config: RunConfig, axis=None, values=None):
    """FID and Jitter for each value of the sampling-step or guidance axis.

    Every value reuses the same noise seed, prompts and lengths.
    """
    axis = config.sweep.axis if axis is None else axis
    values = list(config.sweep.values if values is None else values)
    if not values:
        raise ValueError("sweep needs at least one value")
    base = config.sample.build(config.seed, checkpoint.cfm.sigma_min)
    rows = []
    for value in values:
        if axis == "steps":
            sc = SampleConfig(int(value), base.guidance_scale, base.sigma_min, base.frames, base.seed)
        elif axis == "guidance":
            sc = SampleConfig(base.steps, float(value), base.sigma_min, base.frames, base.seed)
        else:
            raise ValueError(f"unknown sweep axis {axis!r}")
        generated = generate_like(checkpoint, reference, sc, config.sample.chunk)
        fid, jit = fid_and_jitter(generated, reference, config.metrics)
        rows.append({"value": value, "fid": fid, "jitter": jit})
        log.info("sweep %s=%s fid %.4f jitter %.4f", axis, value, fid, jit)
    return rows
