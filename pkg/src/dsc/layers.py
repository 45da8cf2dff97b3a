"""Forward and hand-derived backward passes for the layer kinds used by the
autoencoder: 3x3 same conv, 2x2 max pool, 2x nearest upsample, dense,
pointwise activations and a single-layer LSTM.

Spatial layers work channels-last on a batch ``(N, H, W, C)``; a single
sample ``(H, W, C)`` is accepted and returned without the batch axis.
Every forward returns ``(output, cache)``; the matching backward takes the
cache and the upstream gradient and returns ``(grad_input, param_grads)``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .errors import DimensionError
from .tensor import TRAIN_DTYPE

KERNEL = 3


@dataclass
class LayerParams:
    """Trainable tensors of one layer plus its hyperparameters.

    ``kind`` is ``conv2d``, ``dense`` or ``lstm``. Weight layouts:

    * conv2d: ``W`` (3, 3, cin, cout), ``b`` (cout,)
    * dense: ``W`` (dout, din), ``b`` (dout,)
    * lstm: ``Wx`` (din, 4m), ``Wh`` (m, 4m), ``b`` (4m,), gate blocks packed
      in the order input, forget, candidate, output
    """

    kind: str
    tensors: dict[str, np.ndarray]
    hyper: dict[str, int] = field(default_factory=dict)

    def __getitem__(self, key: str) -> np.ndarray:
        return self.tensors[key]

    @property
    def size(self) -> int:
        return sum(t.size for t in self.tensors.values())


def _glorot(rng: np.random.Generator, shape, fan_in: int, fan_out: int, dtype):
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=shape).astype(dtype)


def init_conv2d(rng, cin: int, cout: int, dtype=TRAIN_DTYPE) -> LayerParams:
    w = _glorot(rng, (KERNEL, KERNEL, cin, cout), KERNEL * KERNEL * cin,
                KERNEL * KERNEL * cout, dtype)
    return LayerParams("conv2d", {"W": w, "b": np.zeros(cout, dtype)},
                       {"cin": cin, "cout": cout})


def init_dense(rng, din: int, dout: int, dtype=TRAIN_DTYPE) -> LayerParams:
    w = _glorot(rng, (dout, din), din, dout, dtype)
    return LayerParams("dense", {"W": w, "b": np.zeros(dout, dtype)},
                       {"din": din, "dout": dout})


def init_lstm(rng, din: int, hidden: int, dtype=TRAIN_DTYPE) -> LayerParams:
    # each gate block is its own din->m (or m->m) map for the fan computation
    wx = np.concatenate([_glorot(rng, (din, hidden), din, hidden, dtype)
                         for _ in range(4)], axis=1)
    wh = np.concatenate([_glorot(rng, (hidden, hidden), hidden, hidden, dtype)
                         for _ in range(4)], axis=1)
    b = np.zeros(4 * hidden, dtype)
    b[hidden:2 * hidden] = 1.0
    return LayerParams("lstm", {"Wx": wx, "Wh": wh, "b": b},
                       {"din": din, "hidden": hidden})


def _batched(x: np.ndarray, rank: int):
    if x.ndim == rank:
        return x, False
    if x.ndim == rank - 1:
        return x[None], True
    raise DimensionError(f"expected rank {rank - 1} or {rank}, got shape {x.shape}")


# --- conv2d -----------------------------------------------------------------

def conv2d_forward(x: np.ndarray, params: LayerParams):
    x, single = _batched(x, 4)
    w, b = params["W"], params["b"]
    n, h, wd, cin = x.shape
    if cin != w.shape[2]:
        raise DimensionError(f"conv2d expects {w.shape[2]} input channels, got {cin}")
    xp = np.pad(x, ((0, 0), (1, 1), (1, 1), (0, 0)))
    # (N, H, W, C, kh, kw) -> (N*H*W, kh*kw*C) matching W's (kh, kw, C) layout
    cols = sliding_window_view(xp, (KERNEL, KERNEL), axis=(1, 2))
    cols = cols.transpose(0, 1, 2, 4, 5, 3).reshape(n * h * wd, KERNEL * KERNEL * cin)
    out = cols @ w.reshape(-1, w.shape[3]) + b
    out = out.reshape(n, h, wd, -1)
    return (out[0] if single else out), (cols, x.shape, single)


def conv2d_backward(cache, dout: np.ndarray, params: LayerParams):
    cols, xshape, single = cache
    if single:
        dout = dout[None]
    n, h, wd, cin = xshape
    w = params["W"]
    cout = w.shape[3]
    dflat = dout.reshape(-1, cout)
    dw = (cols.T @ dflat).reshape(w.shape)
    db = dflat.sum(axis=0)
    dcols = (dflat @ w.reshape(-1, cout).T).reshape(n, h, wd, KERNEL, KERNEL, cin)
    dxp = np.zeros((n, h + 2, wd + 2, cin), dtype=dout.dtype)
    for i in range(KERNEL):
        for j in range(KERNEL):
            dxp[:, i:i + h, j:j + wd, :] += dcols[:, :, :, i, j, :]
    dx = dxp[:, 1:-1, 1:-1, :]
    return (dx[0] if single else dx), {"W": dw, "b": db}


# --- pooling / upsampling ---------------------------------------------------

def maxpool2d_forward(x: np.ndarray):
    x, single = _batched(x, 4)
    n, h, w, c = x.shape
    if h % 2 or w % 2:
        raise DimensionError(f"maxpool2d needs even extents, got {h}x{w}")
    win = x.reshape(n, h // 2, 2, w // 2, 2, c).transpose(0, 1, 3, 5, 2, 4)
    win = win.reshape(n, h // 2, w // 2, c, 4)
    # argmax returns the first maximum: row-major tie-break inside the window
    arg = win.argmax(axis=-1)
    out = np.take_along_axis(win, arg[..., None], axis=-1)[..., 0]
    return (out[0] if single else out), (arg, x.shape, single)


def maxpool2d_backward(cache, dout: np.ndarray):
    arg, xshape, single = cache
    if single:
        dout = dout[None]
    n, h, w, c = xshape
    dwin = np.zeros((n, h // 2, w // 2, c, 4), dtype=dout.dtype)
    np.put_along_axis(dwin, arg[..., None], dout[..., None], axis=-1)
    dx = dwin.reshape(n, h // 2, w // 2, c, 2, 2).transpose(0, 1, 4, 2, 5, 3)
    dx = dx.reshape(xshape)
    return dx[0] if single else dx


def upsample2d_forward(x: np.ndarray):
    x, single = _batched(x, 4)
    out = np.repeat(np.repeat(x, 2, axis=1), 2, axis=2)
    return (out[0] if single else out), single


def upsample2d_backward(cache, dout: np.ndarray):
    single = cache
    if single:
        dout = dout[None]
    n, h2, w2, c = dout.shape
    dx = dout.reshape(n, h2 // 2, 2, w2 // 2, 2, c).sum(axis=(2, 4))
    return dx[0] if single else dx


# --- dense ------------------------------------------------------------------

def dense_forward(x: np.ndarray, params: LayerParams):
    x, single = _batched(x, 2)
    w, b = params["W"], params["b"]
    if x.shape[1] != w.shape[1]:
        raise DimensionError(f"dense expects input size {w.shape[1]}, got {x.shape[1]}")
    out = x @ w.T + b
    return (out[0] if single else out), (x, single)


def dense_backward(cache, dout: np.ndarray, params: LayerParams):
    x, single = cache
    if single:
        dout = dout[None]
    dw = dout.T @ x
    db = dout.sum(axis=0)
    dx = dout @ params["W"]
    return (dx[0] if single else dx), {"W": dw, "b": db}


# --- activations ------------------------------------------------------------

def _sigmoid(x):
    # split by sign so exp never overflows
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def activation_forward(kind: str, x: np.ndarray):
    if kind == "relu":
        out = np.maximum(x, 0)
        return out, x > 0
    if kind == "sigmoid":
        out = _sigmoid(x)
        return out, out
    if kind == "tanh":
        out = np.tanh(x)
        return out, out
    raise ValueError(f"unknown activation {kind!r}")


def activation_backward(kind: str, cache, dout: np.ndarray) -> np.ndarray:
    if kind == "relu":
        return dout * cache
    if kind == "sigmoid":
        return dout * cache * (1 - cache)
    if kind == "tanh":
        return dout * (1 - cache * cache)
    raise ValueError(f"unknown activation {kind!r}")


# --- lstm -------------------------------------------------------------------

def lstm_step(x_t, h_prev, c_prev, params: LayerParams):
    """One LSTM cell update; returns ``(h, c, gates)`` with gates = (i, f, g, o)."""
    m = params.hyper["hidden"]
    z = x_t @ params["Wx"] + h_prev @ params["Wh"] + params["b"]
    i = _sigmoid(z[:, :m])
    f = _sigmoid(z[:, m:2 * m])
    g = np.tanh(z[:, 2 * m:3 * m])
    o = _sigmoid(z[:, 3 * m:])
    c = f * c_prev + i * g
    h = o * np.tanh(c)
    return h, c, (i, f, g, o)


def lstm_forward(seq: np.ndarray, params: LayerParams):
    """Run the sequence ``(N, S, din)`` from zero state; return final hidden ``(N, m)``."""
    seq, single = _batched(seq, 3)
    n, steps, din = seq.shape
    if steps == 0:
        raise DimensionError("lstm needs at least one step")
    if din != params["Wx"].shape[0]:
        raise DimensionError(f"lstm expects input size {params['Wx'].shape[0]}, got {din}")
    m = params.hyper["hidden"]
    h = np.zeros((n, m), dtype=seq.dtype)
    c = np.zeros((n, m), dtype=seq.dtype)
    hs, cs, gates = [h], [c], []
    for t in range(steps):
        h, c, gt = lstm_step(seq[:, t], h, c, params)
        hs.append(h)
        cs.append(c)
        gates.append(gt)
    return (h[0] if single else h), (seq, hs, cs, gates, single)


def lstm_backward(cache, dh_last: np.ndarray, params: LayerParams):
    seq, hs, cs, gates, single = cache
    if single:
        dh_last = dh_last[None]
    n, steps, din = seq.shape
    m = params.hyper["hidden"]
    wx, wh = params["Wx"], params["Wh"]
    dwx = np.zeros_like(wx)
    dwh = np.zeros_like(wh)
    db = np.zeros_like(params["b"])
    dseq = np.zeros_like(seq)
    dh = dh_last
    dc = np.zeros((n, m), dtype=seq.dtype)
    for t in reversed(range(steps)):
        i, f, g, o = gates[t]
        c = cs[t + 1]
        tc = np.tanh(c)
        do = dh * tc
        dc = dc + dh * o * (1 - tc * tc)
        di = dc * g
        dg = dc * i
        df = dc * cs[t]
        dz = np.concatenate([di * i * (1 - i), df * f * (1 - f),
                             dg * (1 - g * g), do * o * (1 - o)], axis=1)
        dwx += seq[:, t].T @ dz
        dwh += hs[t].T @ dz
        db += dz.sum(axis=0)
        dseq[:, t] = dz @ wx.T
        dh = dz @ wh.T
        dc = dc * f
    return (dseq[0] if single else dseq), {"Wx": dwx, "Wh": dwh, "b": db}
