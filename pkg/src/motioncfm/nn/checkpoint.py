"""Trained-model bundle and its binary checkpoint format.

Layout (little-endian)::

    b"FMCK" | u32 version | u32 header_len | header_len bytes of UTF-8 JSON
    | repeated blocks: u32 name_len | name | u64 count | count x f64

The JSON header carries the predictor config, vocabulary, feature layout,
flow settings and the block shapes; blocks hold the predictor parameters
followed by ``norm.mean`` and ``norm.std``.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ..cfm import CfmConfig
from ..data.layout import ConditionVocab, PoseLayout
from ..data.normalize import NormStats
from .predictor import PredictorConfig, PredictorParams, forward

MAGIC = b"FMCK"
VERSION = 1


class CheckpointFormatError(ValueError):
    pass


@dataclass
class Checkpoint:
    params: PredictorParams
    norm: NormStats
    vocab: ConditionVocab
    layout: PoseLayout
    fps: float = 20.0
    cfm: CfmConfig = field(default_factory=CfmConfig)
    meta: dict = field(default_factory=dict)

    @property
    def config(self) -> PredictorConfig:
        return self.params.config

    @property
    def null_id(self) -> int:
        return self.vocab.null_id

    def predict_clean(self, xt, t, condition_id, mask=None):
        """Network output in normalized feature space (``(B, N, D)`` in and out)."""
        return forward(self.params, xt, t, condition_id, mask)

    def save(self, path):
        save_checkpoint(self, path)

    @classmethod
    def load(cls, path):
        return load_checkpoint(path)


def _header(ck: Checkpoint):
    return {
        "predictor": ck.config.to_dict(),
        "prompts": ck.vocab.prompts,
        "joint_count": ck.layout.joint_count,
        "fps": ck.fps,
        "cfm": {"sigma_min": ck.cfm.sigma_min, "objective": ck.cfm.objective.value},
        "meta": ck.meta,
        "blocks": [[n, list(ck.params[n].shape)] for n in ck.params.names()],
    }


def save_checkpoint(ck: Checkpoint, path):
    header = json.dumps(_header(ck), sort_keys=True).encode("utf-8")
    blocks = [(n, ck.params[n]) for n in ck.params.names()]
    blocks += [("norm.mean", ck.norm.mean), ("norm.std", ck.norm.std)]
    with open(path, "wb") as fh:
        fh.write(MAGIC + struct.pack("<II", VERSION, len(header)))
        fh.write(header)
        for name, arr in blocks:
            raw = name.encode("utf-8")
            fh.write(struct.pack("<I", len(raw)) + raw)
            fh.write(struct.pack("<Q", arr.size))
            fh.write(np.ascontiguousarray(arr, dtype="<f8").tobytes())


def load_checkpoint(path) -> Checkpoint:
    raw = Path(path).read_bytes()
    if raw[:4] != MAGIC:
        raise CheckpointFormatError(f"{path}: not a checkpoint (bad magic)")
    try:
        version, hlen = struct.unpack_from("<II", raw, 4)
        if version != VERSION:
            raise CheckpointFormatError(f"{path}: unsupported checkpoint version {version}")
        pos = 12
        header = json.loads(raw[pos:pos + hlen].decode("utf-8"))
        pos += hlen
        arrays = {}
        while pos < len(raw):
            (nlen,) = struct.unpack_from("<I", raw, pos)
            name = raw[pos + 4:pos + 4 + nlen].decode("utf-8")
            pos += 4 + nlen
            (count,) = struct.unpack_from("<Q", raw, pos)
            pos += 8
            if pos + 8 * count > len(raw):
                raise CheckpointFormatError(f"{path}: block {name!r} truncated")
            arrays[name] = np.frombuffer(raw, dtype="<f8", count=count, offset=pos).astype(np.float64)
            pos += 8 * count
    except (struct.error, UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise CheckpointFormatError(f"{path}: corrupt checkpoint ({exc})") from None
    config = PredictorConfig(**header["predictor"])
    params = PredictorParams(config)
    for name, shape in header["blocks"]:
        if name not in arrays or arrays[name].size != int(np.prod(shape)):
            raise CheckpointFormatError(f"{path}: block {name!r} missing or mis-sized")
        params[name][...] = arrays[name].reshape(shape)
    return Checkpoint(
        params=params,
        norm=NormStats(arrays["norm.mean"], arrays["norm.std"]),
        vocab=ConditionVocab(header["prompts"]),
        layout=PoseLayout(header["joint_count"]),
        fps=header["fps"],
        cfm=CfmConfig(**header["cfm"]),
        meta=header.get("meta", {}),
    )
