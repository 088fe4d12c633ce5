"""Run the CLI pipeline on a tiny config and compare reruns byte for byte."""

import json
from pathlib import Path

from motioncfm.cli import main

TINY = {
    "dataset": {"families": [{"kind": k, "count": 6} for k in ("stand", "walk", "circle", "wave")],
                "min_frames": 16, "max_frames": 32},
    "model": {"hidden_dim": 16, "layer_count": 1, "max_frames": 32},
    "train": {"steps": 15, "batch_size": 8},
    "sample": {"steps": 4, "count": 2, "frames": 20},
    "metrics": {"trials": 2, "heldout_per_family": 6},
    "ablation": {"seeds": [0, 1]},
    "sweep": {"values": [2, 4]},
}

# run logs carry wall-clock timestamps; everything else must repeat exactly
VOLATILE = {"run.log"}


def pipeline_commands(root):
    """Command name, out dir and extra argv for every CLI subcommand."""
    root = Path(root)
    data, train = root / "data", root / "train"
    ck = train / "checkpoint.fmck"
    return [
        ("dataset-gen", data, []),
        ("train", train, ["--data", str(data)]),
        ("sample", root / "sample", ["--checkpoint", str(ck), "--prompt", "a person walks forward"]),
        ("evaluate", root / "evaluate", ["--target", str(ck), "--data", str(data)]),
        ("evaluate", root / "evaluate_dir", ["--target", str(root / "sample"), "--data", str(data)]),
        ("sweep", root / "sweep", ["--checkpoint", str(ck), "--data", str(data), "--axis", "steps"]),
        ("ablation", root / "ablation", ["--data", str(data)]),
        ("plot", root / "plot", [str(root / "sample" / "motions")]),
    ]


def run_pipeline(root, seed=0):
    """Run every command from ``TINY`` into ``root``; returns ``{out_dir: exit_code}``."""
    root = Path(root)
    root.mkdir(parents=True, exist_ok=True)
    config = root / "tiny.json"
    config.write_text(json.dumps(TINY))
    codes = {}
    for command, out, extra in pipeline_commands(root):
        codes[out.name] = main([command, "--config", str(config), "--seed", str(seed), "--out", str(out), *extra])
    return codes


def artifact_bytes(out):
    out = Path(out)
    return {p.relative_to(out).as_posix(): p.read_bytes()
            for p in sorted(out.rglob("*")) if p.is_file() and p.name not in VOLATILE}


def rerun_from_echo(root):
    """Re-run every command from its echoed ``config.json``; returns the names that differ."""
    root = Path(root)
    mismatched = []
    for command, out, extra in pipeline_commands(root):
        again = out.with_name(out.name + "_rerun")
        code = main([command, "--config", str(out / "config.json"), "--out", str(again), *extra])
        first, second = artifact_bytes(out), artifact_bytes(again)
        if code != 0 or first != second:
            mismatched.append(out.name)
    return mismatched
