"""Binary motion files and JSON dataset manifests.

Motion file layout, all little-endian::

    b"FMOT" | u32 version=1 | u32 N | u32 D | f32 fps
    | u32 J | 8 x u32 slice offsets | N*D f32 payload (row-major)

Frames are held in float64 in memory and stored as float32, so a write
followed by a read is bit-exact for any motion whose values are already
float32-representable (the synthetic generator guarantees this).
"""

from __future__ import annotations

import json
import os
import struct
from pathlib import Path

import numpy as np

from .layout import ConditionVocab, MotionSequence, PoseLayout

MAGIC = b"FMOT"
VERSION = 1
_HEADER = struct.Struct("<4sIIIf")
_LAYOUT = struct.Struct("<9I")


class MotionFileError(ValueError):
    """Base class for unreadable motion files."""


class MotionFormatError(MotionFileError):
    """Wrong magic, unsupported version or inconsistent layout block."""


class MotionTruncatedError(MotionFileError):
    """Payload shorter or longer than the header announces."""


class NonFiniteMotionError(MotionFileError):
    """Payload decodes to NaN or infinity."""


def write_motion_file(motion: MotionSequence, path) -> None:
    layout = motion.layout
    n, d = motion.frames.shape
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(MAGIC, VERSION, n, d, motion.fps))
        fh.write(_LAYOUT.pack(layout.joint_count, *layout.offsets))
        fh.write(np.ascontiguousarray(motion.frames, dtype="<f4").tobytes())


def read_motion_file(path) -> MotionSequence:
    raw = Path(path).read_bytes()
    head = _HEADER.size + _LAYOUT.size
    if len(raw) < 4 or raw[:4] != MAGIC:
        raise MotionFormatError(f"{path}: not a motion file (bad magic)")
    if len(raw) < head:
        raise MotionTruncatedError(f"{path}: header truncated")
    _, version, n, d, fps = _HEADER.unpack_from(raw, 0)
    if version != VERSION:
        raise MotionFormatError(f"{path}: unsupported version {version}")
    joint_count, *offsets = _LAYOUT.unpack_from(raw, _HEADER.size)
    try:
        layout = PoseLayout(joint_count)
    except ValueError as exc:
        raise MotionFormatError(f"{path}: {exc}") from None
    if tuple(offsets) != layout.offsets or d != layout.feature_dim:
        raise MotionFormatError(f"{path}: layout block inconsistent with joint count {joint_count}")
    payload = raw[head:]
    if len(payload) != 4 * n * d:
        raise MotionTruncatedError(
            f"{path}: header declares {n}x{d} floats but payload holds {len(payload)} bytes"
        )
    frames = np.frombuffer(payload, dtype="<f4").reshape(n, d).astype(np.float64)
    if not np.all(np.isfinite(frames)):
        raise NonFiniteMotionError(f"{path}: payload contains non-finite values")
    return MotionSequence(frames, fps=float(fps), layout=layout)


def write_dataset(out_dir, motions, condition_ids, vocab: ConditionVocab, prefix="motion", extras=None):
    """Write one motion file per sequence plus ``manifest.json``.

    Returns the manifest path. Motion paths in the manifest are relative to
    the manifest's directory. ``extras``, one dict per motion, adds fields
    to the manifest entries.
    """
    out_dir = Path(out_dir)
    (out_dir / "motions").mkdir(parents=True, exist_ok=True)
    entries = []
    for i, (motion, cid) in enumerate(zip(motions, condition_ids)):
        rel = f"motions/{prefix}_{i:05d}.fmot"
        write_motion_file(motion, out_dir / rel)
        entry = {"motion_path": rel, "condition_id": int(cid), "prompt": vocab.prompt_of(cid)}
        if extras is not None:
            entry.update(extras[i])
        entries.append(entry)
    manifest = out_dir / "manifest.json"
    manifest.write_text(json.dumps(entries, indent=1) + "\n")
    (out_dir / "vocab.json").write_text(json.dumps({"prompts": vocab.prompts}, indent=1) + "\n")
    return manifest


def read_dataset(manifest_path):
    """Inverse of :func:`write_dataset`: ``(motions, condition_ids, vocab)``.

    The vocabulary comes from ``vocab.json`` next to the manifest when it
    exists, otherwise from the (id, prompt) pairs of the manifest itself.
    """
    manifest_path = Path(manifest_path)
    if manifest_path.is_dir():
        manifest_path = manifest_path / "manifest.json"
    entries = json.loads(manifest_path.read_text())
    root = manifest_path.parent
    vocab_path = root / "vocab.json"
    if vocab_path.exists():
        vocab = ConditionVocab(json.loads(vocab_path.read_text())["prompts"])
    else:
        pairs = {}
        for e in entries:
            if e["prompt"]:
                pairs.setdefault(int(e["condition_id"]), e["prompt"])
        if sorted(pairs) != list(range(len(pairs))):
            raise ValueError(f"{manifest_path}: condition ids are not dense")
        vocab = ConditionVocab([pairs[i] for i in range(len(pairs))])
    motions, ids = [], []
    for e in entries:
        path = Path(e["motion_path"])
        motions.append(read_motion_file(path if path.is_absolute() else root / path))
        ids.append(vocab.check_id(e["condition_id"]))
    return motions, ids, vocab


def list_motion_files(directory):
    return sorted(
        os.path.join(dp, f) for dp, _, fs in os.walk(directory) for f in fs if f.endswith(".fmot")
    )
