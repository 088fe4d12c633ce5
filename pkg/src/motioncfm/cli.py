"""Command-line entry point.

Every command writes into ``--out``: the resolved ``config.json``, a
``command.json`` naming its inputs, the command's artifacts and a
timestamped ``run.log``. Exit codes: 0 success, 1 usage or configuration
error, 2 runtime failure. Failures also print one JSON line to stderr.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from .config import ConfigError, load_config, write_config
from .data.io import MotionFileError, read_dataset, read_motion_file, write_dataset
from .experiments import (
    evaluate_checkpoint,
    evaluate_set,
    load_splits,
    read_split,
    run_ablation,
    run_sweep,
    synthesize,
    write_ablation_csvs,
    write_rows,
    write_splits,
)
from .metrics.fidj import MethodPoint, OutlierRule, mahalanobis_fidj, write_fidj_csv
from .metrics.jitter import dataset_jitter
from .nn.checkpoint import Checkpoint, CheckpointFormatError
from .plots import line_plot, loss_plot, trajectory_plot
from .sampler import SamplingError, generate_batch
from .trainer import TrainingDivergedError, train, write_loss_curve

log = logging.getLogger("motioncfm")

EXIT_OK, EXIT_USAGE, EXIT_RUNTIME = 0, 1, 2
RUNTIME_ERRORS = (MotionFileError, CheckpointFormatError, TrainingDivergedError, SamplingError,
                  FloatingPointError, OSError, np.linalg.LinAlgError, ValueError, KeyError)


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _dump_json(obj, path):
    with open(path, "w") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _prepare_out(args, config, inputs):
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "plots").mkdir(exist_ok=True)
    write_config(config, out / "config.json")
    _dump_json({"command": args.command, **inputs}, out / "command.json")
    handler = logging.FileHandler(out / "run.log", mode="w")
    handler.setFormatter(logging.Formatter("%(asctime)s %(levelname)s %(name)s: %(message)s"))
    logging.getLogger("motioncfm").addHandler(handler)
    logging.getLogger("motioncfm").setLevel(logging.INFO)
    return out


def _load_checkpoint(path):
    if not Path(path).is_file():
        raise FileNotFoundError(f"checkpoint not found: {path}")
    return Checkpoint.load(path)


def _reference(config, data_dir):
    """Held-out reference motions: ``data_dir`` may be a dataset-gen output or a single split."""
    if data_dir is None:
        return synthesize(config)[1]
    root = Path(data_dir)
    if (root / "manifest.json").exists():
        return read_split(root)
    return read_split(root / "heldout")


def cmd_dataset_gen(args, config):
    out = _prepare_out(args, config, {})
    train_set, heldout = synthesize(config)
    write_splits(out, train_set, heldout)
    stats = {
        "train_count": len(train_set),
        "heldout_count": len(heldout),
        "prompts": train_set.vocab.prompts,
        "train_jitter": dataset_jitter(train_set.motions, config.metrics.jitter_order),
        "heldout_jitter": dataset_jitter(heldout.motions, config.metrics.jitter_order),
        "jitter_order": config.metrics.jitter_order,
    }
    _dump_json(stats, out / "metrics.json")
    for name, motion_set in (("train", train_set), ("heldout", heldout)):
        firsts = [int(np.flatnonzero(motion_set.condition_ids == c)[0])
                  for c in np.unique(motion_set.condition_ids)]
        for i in firsts:
            prompt = motion_set.vocab.prompt_of(motion_set.condition_ids[i])
            trajectory_plot(motion_set.motions[i], out / "plots" / f"{name}_{i:05d}.svg", title=prompt)
    return EXIT_OK


def cmd_train(args, config):
    out = _prepare_out(args, config, {"data": args.data})
    train_set, _ = load_splits(config, args.data)
    tc = config.train_config()
    pc = config.model.build(train_set.motions[0].layout.feature_dim, train_set.vocab.n_conditions)
    try:
        result = train(train_set.motions, train_set.condition_ids, train_set.vocab, pc, tc)
    except TrainingDivergedError as exc:
        exc.checkpoint.save(out / "checkpoint_last_good.fmck")
        write_loss_curve(exc.loss_curve, out / "loss.csv")
        raise
    result.checkpoint.save(out / "checkpoint.fmck")
    write_loss_curve(result.loss_curve, out / "loss.csv")
    if result.loss_curve:
        loss_plot(out / "plots" / "loss.svg", result.loss_curve)
        first, last = result.smoothed()
    else:
        first = last = None
    _dump_json({"steps": tc.steps, "param_count": len(result.checkpoint.params),
                "initial_smoothed_loss": first, "final_smoothed_loss": last}, out / "metrics.json")
    return EXIT_OK


def cmd_sample(args, config):
    out = _prepare_out(args, config, {"checkpoint": args.checkpoint, "prompts": args.prompt})
    ck = _load_checkpoint(args.checkpoint)
    prompts = args.prompt or ck.vocab.prompts
    try:
        ids = [ck.vocab.id_of(p) for p in prompts for _ in range(config.sample.count)]
    except KeyError as exc:
        raise ConfigError(str(exc)) from None
    sc = config.sample.build(config.seed, ck.cfm.sigma_min)
    motions = generate_batch(ck, ids, sc, chunk=config.sample.chunk)
    extras = [{"seed": sc.seed, "index": i, "config": sc.to_dict()} for i in range(len(ids))]
    write_dataset(out, motions, ids, ck.vocab, prefix="sample", extras=extras)
    for i, (motion, cid) in enumerate(zip(motions, ids)):
        if i % config.sample.count == 0:
            trajectory_plot(motion, out / "plots" / f"sample_{i:05d}.svg", title=ck.vocab.prompt_of(cid))
    return EXIT_OK


def cmd_evaluate(args, config):
    out = _prepare_out(args, config, {"target": args.target, "data": args.data})
    reference = _reference(config, args.data)
    target = Path(args.target)
    if target.is_file() and target.suffix != ".json":
        report, _ = evaluate_checkpoint(_load_checkpoint(target), reference, config)
    else:
        motions, ids, vocab = read_dataset(target)
        try:
            ref_ids = [reference.vocab.id_of(vocab.prompt_of(c)) for c in ids]
        except KeyError as exc:
            raise ConfigError(f"evaluated motions use a prompt the reference lacks: {exc}") from None
        report = evaluate_set(motions, ref_ids, reference, config.metrics, config.seed)
    report.write_json(out / "metrics.json")
    report.write_trials_csv(out / "trials.csv")
    return EXIT_OK


def cmd_ablation(args, config):
    out = _prepare_out(args, config, {"data": args.data})
    train_set, heldout = load_splits(config, args.data)
    (out / "checkpoints").mkdir(exist_ok=True)

    def keep(seed, objective, result):
        result.checkpoint.save(out / "checkpoints" / f"seed{seed}_{objective}.fmck")
        write_loss_curve(result.loss_curve, out / "checkpoints" / f"loss_seed{seed}_{objective}.csv")

    result = run_ablation(train_set, heldout, config, on_arm=keep)
    write_ablation_csvs(result, out)
    pairs = result.paired()
    summary = {"gt_jitter": result.gt_jitter, "direction_holds": result.direction_holds(),
               "target_wins": sum(p["target_wins"] for p in pairs), "seeds": len(pairs)}
    for objective in config.ablation.objectives:
        rows = result.arm(objective)
        for key in ("fid", "jitter", "jitter_error"):
            values = np.array([r[key] for r in rows])
            summary[f"{objective}_{key}_mean"] = float(values.mean())
            summary[f"{objective}_{key}_std"] = float(values.std())
    try:
        points = [MethodPoint(f"{r['objective']}_seed{r['seed']}", r["fid"], r["jitter"]) for r in result.rows]
        reference = MethodPoint("ground_truth", 0.0, result.gt_jitter)
        fidj = mahalanobis_fidj(points, reference, OutlierRule.MAD_ZSCORE)
        write_fidj_csv(fidj, points, reference, out / "fidj.csv")
        summary["fidj"] = {name: d for name, d in fidj.distances.items() if name != reference.name}
    except (ValueError, np.linalg.LinAlgError) as exc:
        log.warning("FID-J skipped: %s", exc)
    _dump_json(summary, out / "metrics.json")
    seeds = [p["seed"] for p in pairs]
    line_plot(out / "plots" / "ablation.svg", seeds, {
        "target |J - J_gt|": [p["target_jitter_error"] for p in pairs],
        "vector field |J - J_gt|": [p["vector_field_jitter_error"] for p in pairs],
    }, "seed")
    return EXIT_OK


def cmd_sweep(args, config):
    out = _prepare_out(args, config, {"checkpoint": args.checkpoint, "data": args.data})
    ck = _load_checkpoint(args.checkpoint)
    reference = _reference(config, args.data)
    rows = run_sweep(ck, reference, config)
    write_rows(rows, out / "sweep.csv", ("value", "fid", "jitter"))
    line_plot(out / "plots" / "sweep.svg", [r["value"] for r in rows],
              {"FID": [r["fid"] for r in rows], "Jitter": [r["jitter"] for r in rows]},
              "sampling steps" if config.sweep.axis == "steps" else "guidance scale")
    return EXIT_OK


def cmd_plot(args, config):
    out = _prepare_out(args, config, {"motions": args.motions})
    paths = []
    for item in args.motions:
        p = Path(item)
        paths.extend(sorted(p.rglob("*.fmot")) if p.is_dir() else [p])
    if not paths:
        raise FileNotFoundError("no motion files given")
    for i, path in enumerate(paths):
        motion = read_motion_file(path)
        trajectory_plot(motion, out / "plots" / f"{i:05d}_{path.stem}.svg", title=path.name)
    return EXIT_OK


COMMANDS = {
    "dataset-gen": cmd_dataset_gen,
    "train": cmd_train,
    "sample": cmd_sample,
    "evaluate": cmd_evaluate,
    "ablation": cmd_ablation,
    "sweep": cmd_sweep,
    "plot": cmd_plot,
}


def build_parser():
    common = _Parser(add_help=False)
    common.add_argument("--config", help="JSON run configuration")
    common.add_argument("--set", action="append", default=[], metavar="KEY.PATH=VALUE",
                        help="override a config entry; the value is parsed as JSON when possible")
    common.add_argument("--seed", type=int, help="master seed (overrides the config's)")
    common.add_argument("--out", required=True, help="run directory")

    parser = _Parser(prog="motioncfm", description="Flow-matching text-to-motion toolkit.")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    sub.add_parser("dataset-gen", parents=[common], help="render the synthetic dataset and a held-out split")
    p = sub.add_parser("train", parents=[common], help="train the predictor")
    p.add_argument("--data", help="dataset-gen output directory (synthesized from the config if omitted)")
    p = sub.add_parser("sample", parents=[common], help="generate motions from a checkpoint")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--prompt", action="append", default=[], help="prompt to sample (repeatable; default all)")
    p = sub.add_parser("evaluate", parents=[common], help="metric battery against held-out motions")
    p.add_argument("--target", required=True, help="checkpoint file, or a directory / manifest of motions")
    p.add_argument("--data", help="dataset-gen directory or a single split directory")
    p = sub.add_parser("ablation", parents=[common], help="target vs. vector-field objective over seeds")
    p.add_argument("--data")
    p = sub.add_parser("sweep", parents=[common], help="FID and Jitter across sampling steps or guidance")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--data")
    p.add_argument("--axis", choices=("steps", "guidance"), help="shorthand for --set sweep.axis=...")
    p.add_argument("--values", help="comma-separated values, shorthand for --set sweep.values=[...]")
    p = sub.add_parser("plot", parents=[common], help="trajectory plots of motion files")
    p.add_argument("motions", nargs="+", help="motion files or directories")
    return parser


def _fail(code, exc):
    line = {"status": "error", "exit_code": code, "error": type(exc).__name__, "message": str(exc)}
    print(json.dumps(line, sort_keys=True), file=sys.stderr)
    return code


def main(argv=None):
    try:
        args = build_parser().parse_args(argv)
        overrides = list(args.set)
        if getattr(args, "axis", None):
            overrides.append(f"sweep.axis={json.dumps(args.axis)}")
        if getattr(args, "values", None):
            try:
                values = [json.loads(v) for v in args.values.split(",")]
            except json.JSONDecodeError as exc:
                raise ConfigError(f"--values must be comma-separated numbers: {exc}") from None
            overrides.append(f"sweep.values={json.dumps(values)}")
        config = load_config(args.config, overrides, args.seed)
    except (UsageError, ConfigError) as exc:
        return _fail(EXIT_USAGE, exc)
    try:
        return COMMANDS[args.command](args, config)
    except (UsageError, ConfigError) as exc:
        return _fail(EXIT_USAGE, exc)
    except RUNTIME_ERRORS as exc:
        return _fail(EXIT_RUNTIME, exc)
    finally:
        for handler in list(logging.getLogger("motioncfm").handlers):
            if isinstance(handler, logging.FileHandler):
                handler.close()
                logging.getLogger("motioncfm").removeHandler(handler)


if __name__ == "__main__":
    sys.exit(main())
