"""Forward/backward pairs for the handful of layers the predictor uses.

Each ``*_forward`` returns ``(output, cache)``; the matching ``*_backward``
takes the upstream gradient and the cache. Weight gradients are written
into caller-provided arrays (``+=``) so they can land directly in a flat
gradient buffer.
"""

import numpy as np

LN_EPS = 1e-5


def linear_forward(x, w, b):
    return x @ w + b, x


def linear_backward(dy, x, w, dw, db):
    k = w.shape[0]
    dw += x.reshape(-1, k).T @ dy.reshape(-1, w.shape[1])
    db += dy.reshape(-1, w.shape[1]).sum(axis=0)
    return dy @ w.T


def silu_forward(x):
    sig = 1.0 / (1.0 + np.exp(-x))
    return x * sig, (x, sig)


def silu_backward(dy, cache):
    x, sig = cache
    return dy * sig * (1.0 + x * (1.0 - sig))


def layernorm_forward(x, g, b, eps=LN_EPS):
    mu = x.mean(axis=-1, keepdims=True)
    xc = x - mu
    inv = 1.0 / np.sqrt((xc * xc).mean(axis=-1, keepdims=True) + eps)
    xhat = xc * inv
    return xhat * g + b, (xhat, inv)


def layernorm_backward(dy, cache, g, dg, db):
    xhat, inv = cache
    h = xhat.shape[-1]
    dg += (dy * xhat).reshape(-1, h).sum(axis=0)
    db += dy.reshape(-1, h).sum(axis=0)
    dxhat = dy * g
    return inv * (
        dxhat - dxhat.mean(axis=-1, keepdims=True) - xhat * (dxhat * xhat).mean(axis=-1, keepdims=True)
    )


def attention_forward(x, p, heads, key_mask):
    """Multi-head self-attention.

    ``x`` is ``(B, T, H)``; ``p`` maps ``wq, bq, wk, bk, wv, bv, wo, bo``
    to arrays; ``key_mask`` is ``(B, T)`` with False for keys to ignore.
    """
    b, t, h = x.shape
    dh = h // heads

    def split(a):
        return a.reshape(b, t, heads, dh).transpose(0, 2, 1, 3)

    q = split(x @ p["wq"] + p["bq"])
    k = split(x @ p["wk"] + p["bk"])
    v = split(x @ p["wv"] + p["bv"])
    scale = 1.0 / np.sqrt(dh)
    scores = (q @ k.transpose(0, 1, 3, 2)) * scale
    blocked = ~key_mask[:, None, None, :]
    scores = np.where(blocked, -np.inf, scores)
    scores -= scores.max(axis=-1, keepdims=True)
    probs = np.exp(scores)
    probs /= probs.sum(axis=-1, keepdims=True)
    mixed = (probs @ v).transpose(0, 2, 1, 3).reshape(b, t, h)
    out = mixed @ p["wo"] + p["bo"]
    return out, (x, q, k, v, probs, mixed, scale)


def attention_backward(dout, cache, p, g, heads):
    """Backprop through :func:`attention_forward`; ``g`` holds the gradient views."""
    x, q, k, v, probs, mixed, scale = cache
    b, t, h = x.shape
    dh = h // heads
    dmixed = linear_backward(dout, mixed, p["wo"], g["wo"], g["bo"])
    dctx = dmixed.reshape(b, t, heads, dh).transpose(0, 2, 1, 3)
    dprobs = dctx @ v.transpose(0, 1, 3, 2)
    dv = probs.transpose(0, 1, 3, 2) @ dctx
    dscores = probs * (dprobs - (dprobs * probs).sum(axis=-1, keepdims=True))
    dscores *= scale
    dq = dscores @ k
    dk = dscores.transpose(0, 1, 3, 2) @ q

    def merge(a):
        return a.transpose(0, 2, 1, 3).reshape(b, t, h)

    dx = linear_backward(merge(dq), x, p["wq"], g["wq"], g["bq"])
    dx += linear_backward(merge(dk), x, p["wk"], g["wk"], g["bk"])
    dx += linear_backward(merge(dv), x, p["wv"], g["wv"], g["bv"])
    return dx


def sinusoidal_features(t, dim, max_freq=16.0):
    """``[sin(t f_i), cos(t f_i)]`` with ``f_i`` geometric in ``[1, max_freq]``."""
    half = dim // 2
    freqs = np.exp(np.linspace(0.0, np.log(max_freq), half))
    arg = np.asarray(t, dtype=np.float64)[:, None] * freqs
    return np.concatenate([np.sin(arg), np.cos(arg)], axis=-1)
