"""The clean-motion predictor ``G(x_t, t, c)`` and its exact gradients.

Two variants share the same conditioning path (sinusoidal time features
through a two-layer perceptron, summed with a learned condition row that
includes the empty condition):

``frame_mlp``
    Every frame is mapped independently: input projection plus the
    condition vector, then ``layer_count`` SiLU layers and an output
    projection.
``attention``
    The condition vector is token 0, projected frames plus learned
    positions are tokens ``1..N``; ``layer_count`` post-norm encoder
    blocks; token 0 is dropped before the output projection.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from ..cfm import CfmConfig, FlowSample, Objective, flow_interpolate
from . import layers as L

VARIANTS = ("frame_mlp", "attention")


class DivergenceError(FloatingPointError):
    """Loss or gradient became non-finite."""


@dataclass(frozen=True)
class PredictorConfig:
    feature_dim: int
    n_conditions: int
    variant: str = "frame_mlp"
    hidden_dim: int = 128
    layer_count: int = 3
    head_count: int = 4
    ff_dim: int = 128
    max_frames: int = 196
    positional_encoding: bool = True

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise ValueError(f"variant must be one of {VARIANTS}, got {self.variant!r}")
        for name in ("feature_dim", "n_conditions", "hidden_dim", "layer_count", "head_count", "ff_dim", "max_frames"):
            if int(getattr(self, name)) < 1:
                raise ValueError(f"{name} must be a positive integer")
        if self.n_conditions < 2:
            raise ValueError("n_conditions counts the empty condition, so it must be >= 2")
        if self.hidden_dim % 2:
            raise ValueError("hidden_dim must be even (sin/cos time features)")
        if self.variant == "attention" and self.hidden_dim % self.head_count:
            raise ValueError("hidden_dim must be divisible by head_count")

    @classmethod
    def desk(cls, variant, feature_dim, n_conditions, **overrides):
        """Small defaults that train on a laptop CPU."""
        if variant == "frame_mlp":
            base = dict(hidden_dim=128, layer_count=3)
        else:
            base = dict(hidden_dim=64, layer_count=2, head_count=4, ff_dim=128)
        base.update(overrides)
        return cls(feature_dim=feature_dim, n_conditions=n_conditions, variant=variant, **base)

    def to_dict(self):
        return asdict(self)


def block_shapes(config: PredictorConfig):
    """Ordered ``(name, shape)`` list of every parameter block."""
    h, d = config.hidden_dim, config.feature_dim
    shapes = [
        ("time.w1", (h, h)), ("time.b1", (h,)),
        ("time.w2", (h, h)), ("time.b2", (h,)),
        ("cond.table", (config.n_conditions, h)),
        ("in.w", (d, h)), ("in.b", (h,)),
    ]
    if config.variant == "frame_mlp":
        for i in range(config.layer_count):
            shapes += [(f"mlp{i}.w", (h, h)), (f"mlp{i}.b", (h,))]
    else:
        if config.positional_encoding:
            shapes.append(("pos.table", (config.max_frames, h)))
        f = config.ff_dim
        for i in range(config.layer_count):
            shapes += [
                (f"enc{i}.wq", (h, h)), (f"enc{i}.bq", (h,)),
                (f"enc{i}.wk", (h, h)), (f"enc{i}.bk", (h,)),
                (f"enc{i}.wv", (h, h)), (f"enc{i}.bv", (h,)),
                (f"enc{i}.wo", (h, h)), (f"enc{i}.bo", (h,)),
                (f"enc{i}.ln1.g", (h,)), (f"enc{i}.ln1.b", (h,)),
                (f"enc{i}.ff.w1", (h, f)), (f"enc{i}.ff.b1", (f,)),
                (f"enc{i}.ff.w2", (f, h)), (f"enc{i}.ff.b2", (h,)),
                (f"enc{i}.ln2.g", (h,)), (f"enc{i}.ln2.b", (h,)),
            ]
    shapes += [("out.w", (h, d)), ("out.b", (d,))]
    return shapes


def count_params(config: PredictorConfig) -> int:
    return int(sum(np.prod(s) for _, s in block_shapes(config)))


class PredictorParams:
    """Named parameter blocks backed by one flat float64 vector.

    ``params["in.w"]`` is a writable view into ``params.flat``, so the
    optimizer can update the flat vector in place.
    """

    def __init__(self, config: PredictorConfig, flat=None):
        self.config = config
        shapes = block_shapes(config)
        size = sum(int(np.prod(s)) for _, s in shapes)
        if flat is None:
            flat = np.zeros(size)
        flat = np.asarray(flat, dtype=np.float64)
        if flat.shape != (size,):
            raise ValueError(f"flat vector has shape {flat.shape}, expected ({size},)")
        self.flat = flat
        self.blocks = {}
        self.offsets = {}
        start = 0
        for name, shape in shapes:
            n = int(np.prod(shape))
            self.blocks[name] = flat[start:start + n].reshape(shape)
            self.offsets[name] = (start, start + n)
            start += n

    def __getitem__(self, name):
        return self.blocks[name]

    def __len__(self):
        return self.flat.shape[0]

    def names(self):
        return list(self.blocks)

    def copy(self):
        return PredictorParams(self.config, self.flat.copy())

    def zeros_like(self):
        return PredictorParams(self.config)

    def block_of(self, index):
        """Name of the block holding flat coordinate ``index``."""
        for name, (lo, hi) in self.offsets.items():
            if lo <= index < hi:
                return name
        raise IndexError(index)


def init_params(config: PredictorConfig, rng) -> PredictorParams:
    """Glorot-uniform matrices and tables, zero biases, unit layer-norm gains."""
    params = PredictorParams(config)
    for name, block in params.blocks.items():
        leaf = name.rsplit(".", 1)[-1]
        if block.ndim == 2:
            limit = np.sqrt(6.0 / (block.shape[0] + block.shape[1]))
            block[...] = rng.uniform(-limit, limit, size=block.shape)
        elif leaf == "g":
            block[...] = 1.0
    return params


def _as_batch(xt, t, condition_id, mask):
    xt = np.asarray(xt, dtype=np.float64)
    single = xt.ndim == 2
    if single:
        xt = xt[None]
    b = xt.shape[0]
    t = np.broadcast_to(np.asarray(t, dtype=np.float64), (b,))
    cond = np.broadcast_to(np.asarray(condition_id, dtype=np.int64), (b,))
    if mask is None:
        mask = np.ones(xt.shape[:2], dtype=bool)
    else:
        mask = np.asarray(mask, dtype=bool).reshape(xt.shape[:2])
    return xt, t, cond, mask, single


def _check_inputs(params, xt, cond):
    cfg = params.config
    if xt.shape[-1] != cfg.feature_dim:
        raise ValueError(f"motion width {xt.shape[-1]} != predictor feature_dim {cfg.feature_dim}")
    if xt.shape[1] > cfg.max_frames:
        raise ValueError(f"{xt.shape[1]} frames exceed max_frames={cfg.max_frames}")
    if np.any(cond < 0) or np.any(cond >= cfg.n_conditions):
        raise ValueError(f"condition id outside [0, {cfg.n_conditions - 1}]")


def _condition_forward(params, t, cond):
    h = params.config.hidden_dim
    feats = L.sinusoidal_features(t, h)
    a1, _ = L.linear_forward(feats, params["time.w1"], params["time.b1"])
    h1, act = L.silu_forward(a1)
    temb, _ = L.linear_forward(h1, params["time.w2"], params["time.b2"])
    ctok = temb + params["cond.table"][cond]
    return ctok, (feats, h1, act, cond)


def _condition_backward(dctok, cache, params, grads):
    feats, h1, act, cond = cache
    np.add.at(grads["cond.table"], cond, dctok)
    dh1 = L.linear_backward(dctok, h1, params["time.w2"], grads["time.w2"], grads["time.b2"])
    da1 = L.silu_backward(dh1, act)
    L.linear_backward(da1, feats, params["time.w1"], grads["time.w1"], grads["time.b1"])


def embed_inputs(params, xt, t, condition_id):
    """Token sequence entering the encoder body, shape ``(N + 1, hidden)``.

    Token 0 carries time plus condition; tokens ``1..N`` are projected
    frames plus learned positions (when the config enables them).
    """
    xt, t, cond, _, single = _as_batch(xt, t, condition_id, None)
    _check_inputs(params, xt, cond)
    tokens = _embed(params, xt, t, cond)[0]
    return tokens[0] if single else tokens


def _embed(params, xt, t, cond):
    cfg = params.config
    ctok, ccache = _condition_forward(params, t, cond)
    frames, _ = L.linear_forward(xt, params["in.w"], params["in.b"])
    if cfg.variant == "attention" and cfg.positional_encoding:
        frames = frames + params["pos.table"][: xt.shape[1]]
    tokens = np.concatenate([ctok[:, None, :], frames], axis=1)
    return tokens, ccache


def _encoder_forward(params, tokens, key_mask):
    cfg = params.config
    x = tokens
    caches = []
    for i in range(cfg.layer_count):
        pre = f"enc{i}."
        att_p = {k: params[pre + k] for k in ("wq", "bq", "wk", "bk", "wv", "bv", "wo", "bo")}
        att, acache = L.attention_forward(x, att_p, cfg.head_count, key_mask)
        x1, ln1 = L.layernorm_forward(x + att, params[pre + "ln1.g"], params[pre + "ln1.b"])
        f1, _ = L.linear_forward(x1, params[pre + "ff.w1"], params[pre + "ff.b1"])
        f1a, act = L.silu_forward(f1)
        f2, _ = L.linear_forward(f1a, params[pre + "ff.w2"], params[pre + "ff.b2"])
        x2, ln2 = L.layernorm_forward(x1 + f2, params[pre + "ln2.g"], params[pre + "ln2.b"])
        caches.append((att_p, acache, x1, ln1, f1a, act, ln2))
        x = x2
    return x, caches


def _encoder_backward(dx, caches, params, grads):
    cfg = params.config
    for i in reversed(range(cfg.layer_count)):
        pre = f"enc{i}."
        att_p, acache, x1, ln1, f1a, act, ln2 = caches[i]
        dsum2 = L.layernorm_backward(dx, ln2, params[pre + "ln2.g"], grads[pre + "ln2.g"], grads[pre + "ln2.b"])
        df1a = L.linear_backward(dsum2, f1a, params[pre + "ff.w2"], grads[pre + "ff.w2"], grads[pre + "ff.b2"])
        df1 = L.silu_backward(df1a, act)
        dx1 = dsum2 + L.linear_backward(df1, x1, params[pre + "ff.w1"], grads[pre + "ff.w1"], grads[pre + "ff.b1"])
        dsum1 = L.layernorm_backward(dx1, ln1, params[pre + "ln1.g"], grads[pre + "ln1.g"], grads[pre + "ln1.b"])
        att_g = {k: grads[pre + k] for k in att_p}
        dx = dsum1 + L.attention_backward(dsum1, acache, att_p, att_g, cfg.head_count)
    return dx


def _forward(params, xt, t, cond, mask, keep_cache):
    cfg = params.config
    if cfg.variant == "frame_mlp":
        ctok, ccache = _condition_forward(params, t, cond)
        # frames are independent: only the real ones are evaluated
        rows = xt[mask]
        owner = np.nonzero(mask)[0]
        h, _ = L.linear_forward(rows, params["in.w"], params["in.b"])
        h = h + ctok[owner]
        body = []
        for i in range(cfg.layer_count):
            a, _ = L.linear_forward(h, params[f"mlp{i}.w"], params[f"mlp{i}.b"])
            hn, act = L.silu_forward(a)
            body.append((h, act))
            h = hn
        out_rows, _ = L.linear_forward(h, params["out.w"], params["out.b"])
        out = np.zeros(xt.shape)
        out[mask] = out_rows
        cache = (rows, owner, ccache, body, h) if keep_cache else None
        return out, cache
    tokens, ccache = _embed(params, xt, t, cond)
    key_mask = np.concatenate([np.ones((xt.shape[0], 1), dtype=bool), mask], axis=1)
    enc, ecaches = _encoder_forward(params, tokens, key_mask)
    hidden = enc[:, 1:]
    out, _ = L.linear_forward(hidden, params["out.w"], params["out.b"])
    cache = (ccache, ecaches, hidden) if keep_cache else None
    return out, cache


def _backward(dout, cache, params, xt, mask):
    cfg = params.config
    grads = params.zeros_like()
    if cfg.variant == "frame_mlp":
        rows, owner, ccache, body, h = cache
        dh = L.linear_backward(dout[mask], h, params["out.w"], grads["out.w"], grads["out.b"])
        for i in reversed(range(cfg.layer_count)):
            h_in, act = body[i]
            da = L.silu_backward(dh, act)
            dh = L.linear_backward(da, h_in, params[f"mlp{i}.w"], grads[f"mlp{i}.w"], grads[f"mlp{i}.b"])
        L.linear_backward(dh, rows, params["in.w"], grads["in.w"], grads["in.b"])
        counts = mask.sum(axis=1)
        if np.all(counts > 0):
            starts = np.concatenate([[0], np.cumsum(counts)[:-1]])
            dctok = np.add.reduceat(dh, starts, axis=0)
        else:
            dctok = np.zeros((xt.shape[0], cfg.hidden_dim))
            np.add.at(dctok, owner, dh)
        _condition_backward(dctok, ccache, params, grads)
        return grads
    ccache, ecaches, hidden = cache
    dhidden = L.linear_backward(dout, hidden, params["out.w"], grads["out.w"], grads["out.b"])
    dtok = np.zeros((xt.shape[0], xt.shape[1] + 1, cfg.hidden_dim))
    dtok[:, 1:] = dhidden
    dtok = _encoder_backward(dtok, ecaches, params, grads)
    dframes = dtok[:, 1:]
    if cfg.positional_encoding:
        grads["pos.table"][: xt.shape[1]] += dframes.sum(axis=0)
    L.linear_backward(dframes, xt, params["in.w"], grads["in.w"], grads["in.b"])
    _condition_backward(dtok[:, 0], ccache, params, grads)
    return grads


def forward(params: PredictorParams, xt, t, condition_id, mask=None):
    """Predict the clean motion.

    ``xt`` is ``(N, D)`` or a batch ``(B, N, D)``; ``t`` and
    ``condition_id`` are scalars or length-``B`` arrays. With a mask,
    padded frames of the output are zero for ``frame_mlp`` and arbitrary
    for ``attention``.
    """
    xt, t, cond, mask, single = _as_batch(xt, t, condition_id, mask)
    _check_inputs(params, xt, cond)
    out, _ = _forward(params, xt, t, cond, mask, keep_cache=False)
    return out[0] if single else out


@dataclass
class FlowBatch:
    """Stacked :class:`FlowSample` arrays, ``(B, N, D)``."""

    x0: np.ndarray
    x1: np.ndarray
    xt: np.ndarray
    t: np.ndarray
    condition_id: np.ndarray
    mask: np.ndarray
    sigma_min: float = 0.0

    @classmethod
    def from_samples(cls, samples):
        if not samples:
            raise ValueError("empty batch")
        return cls(
            np.stack([s.x0 for s in samples]),
            np.stack([s.x1 for s in samples]),
            np.stack([s.xt for s in samples]),
            np.array([s.t for s in samples], dtype=np.float64),
            np.array([s.condition_id for s in samples], dtype=np.int64),
            np.stack([s.mask for s in samples]),
            samples[0].sigma_min,
        )

    def samples(self):
        return [
            FlowSample(self.x0[i], self.x1[i], float(self.t[i]), self.xt[i], int(self.condition_id[i]),
                       self.mask[i], self.sigma_min)
            for i in range(len(self.t))
        ]


def batch_targets(batch: FlowBatch, cfm: CfmConfig):
    if cfm.objective is Objective.TARGET:
        return batch.x1
    # x1 - (1 - sigma) x0 equals the conditional field on the path and has
    # no t -> 1 singularity
    return batch.x1 - (1.0 - cfm.sigma_min) * batch.x0


def loss_and_grad(params: PredictorParams, batch, cfm: CfmConfig):
    """Mean per-sample CFM loss over a batch and its gradient.

    Each sample's loss is the mean squared error over its real frames;
    the batch loss averages samples with equal weight.

    Returns
    -------
    loss : float
    grads : PredictorParams
        Same layout as ``params``; ``grads.flat`` is the flat gradient.
    """
    if not isinstance(batch, FlowBatch):
        batch = FlowBatch.from_samples(list(batch))
    xt, t, cond, mask, _ = _as_batch(batch.xt, batch.t, batch.condition_id, batch.mask)
    _check_inputs(params, xt, cond)
    pred, cache = _forward(params, xt, t, cond, mask, keep_cache=True)
    target = batch_targets(batch, cfm)
    m = mask[..., None]
    diff = np.where(m, pred - target, 0.0)
    weight = 1.0 / (mask.sum(axis=1) * xt.shape[-1] * xt.shape[0])
    loss = float(np.sum((diff * diff).sum(axis=(1, 2)) * weight))
    if not np.isfinite(loss):
        raise DivergenceError(f"non-finite loss {loss}")
    dout = 2.0 * diff * weight[:, None, None]
    grads = _backward(dout, cache, params, xt, mask)
    if not np.all(np.isfinite(grads.flat)):
        raise DivergenceError("non-finite gradient")
    return loss, grads


def backward(params, config, samples, cfm: CfmConfig):
    """``(loss, flat gradient)`` for a list of :class:`FlowSample`."""
    if config != params.config:
        raise ValueError("params were built for a different predictor config")
    loss, grads = loss_and_grad(params, FlowBatch.from_samples(list(samples)), cfm)
    return loss, grads.flat


def fixed_batch(params, x1, condition_id, t, rng, sigma_min=0.0):
    """Convenience: a one-sample :class:`FlowBatch` for a clean ``(N, D)`` motion."""
    x1 = np.asarray(x1, dtype=np.float64)
    x0 = rng.standard_normal(x1.shape)
    xt = flow_interpolate(x0, x1, t, sigma_min)
    return FlowBatch.from_samples([FlowSample(x0, x1, float(t), xt, int(condition_id), None, sigma_min)])
