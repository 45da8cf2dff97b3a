"""The four autoencoder variants built from :mod:`dsc.layers`.

Encoder: edge-pad to a G x G grid, then ``len(channels)`` stages of
conv + relu + maxpool. LSTM variants read the top feature map row by row
as a sequence and use the final hidden state as the embedding; CNN
variants flatten and project with dense + relu. The decoder mirrors the
encoder with upsample + conv stages, a sigmoid on the last conv, and a
center crop back to L x W.
"""

from __future__ import annotations

import io
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import layers as nn
from .errors import ConfigError, DimensionError, FormatError, VariantError
from .tensor import TRAIN_DTYPE, check_finite

VARIANTS = ("cnn-enc", "cnn-ae", "cnn-lstm-enc", "cnn-lstm-ae")
DEFAULT_CHANNELS = (32, 64, 128)
DEFAULT_LATENT = 256
CHECKPOINT_VERSION = 1


@dataclass
class ModelSpec:
    variant: str
    dims: tuple[int, int, int]
    grid: int
    channels: tuple[int, ...]
    latent_dim: int
    seed: int
    params: dict[str, nn.LayerParams] = field(default_factory=dict)

    @property
    def is_autoencoder(self) -> bool:
        return self.variant.endswith("-ae")

    @property
    def uses_lstm(self) -> bool:
        return "lstm" in self.variant

    @property
    def top(self) -> int:
        """Spatial extent of the deepest feature map."""
        return self.grid // 2 ** len(self.channels)

    @property
    def n_params(self) -> int:
        return sum(p.size for p in self.params.values())

    @property
    def pad(self) -> tuple[tuple[int, int], tuple[int, int]]:
        lon, lat, _ = self.dims
        before_l = (self.grid - lon) // 2
        before_w = (self.grid - lat) // 2
        return ((before_l, self.grid - lon - before_l),
                (before_w, self.grid - lat - before_w))

    def encoder_steps(self) -> list[tuple]:
        steps = []
        for s in range(len(self.channels)):
            steps += [("conv", f"enc_conv{s + 1}"), ("act", "relu"), ("pool",)]
        if self.uses_lstm:
            steps += [("rows",), ("lstm", "enc_lstm")]
        else:
            steps += [("flatten",), ("dense", "enc_dense"), ("act", "relu")]
        return steps

    def decoder_steps(self) -> list[tuple]:
        steps = [("dense", "dec_dense"), ("act", "relu"),
                 ("unflatten", (self.top, self.top, self.channels[-1]))]
        depth = len(self.channels)
        for s in range(depth):
            last = s == depth - 1
            steps += [("upsample",), ("conv", f"dec_conv{s + 1}"),
                      ("act", "sigmoid" if last else "relu")]
        steps.append(("crop",))
        return steps

    def astype(self, dtype) -> "ModelSpec":
        """Copy with every parameter cast to ``dtype`` (float64 for gradient checks)."""
        params = {name: nn.LayerParams(p.kind, {k: v.astype(dtype) for k, v in p.tensors.items()},
                                       dict(p.hyper))
                  for name, p in self.params.items()}
        return ModelSpec(self.variant, self.dims, self.grid, self.channels,
                         self.latent_dim, self.seed, params)

    def flat_params(self) -> dict[tuple[str, str], np.ndarray]:
        return {(name, key): arr for name, p in self.params.items()
                for key, arr in p.tensors.items()}


def padded_grid(lon: int, lat: int, factor: int = 8) -> int:
    """Smallest multiple of ``factor`` that holds an ``lon x lat`` grid."""
    side = max(lon, lat)
    return -(-side // factor) * factor


def build_model(variant: str, dims, seed: int = 0, *, latent_dim: int = DEFAULT_LATENT,
                channels=DEFAULT_CHANNELS, grid: int | None = None,
                dtype=TRAIN_DTYPE) -> ModelSpec:
    if variant not in VARIANTS:
        raise ConfigError(f"unknown variant {variant!r}; choose from {VARIANTS}")
    lon, lat, nvar = (int(d) for d in dims)
    channels = tuple(int(c) for c in channels)
    if min(lon, lat, nvar, latent_dim) < 1 or not channels:
        raise ConfigError(f"invalid dims {dims} / latent {latent_dim} / channels {channels}")
    factor = 2 ** len(channels)
    if grid is None:
        grid = padded_grid(lon, lat, factor)
    if grid % factor or grid < max(lon, lat):
        raise ConfigError(f"grid {grid} must be a multiple of {factor} and >= {max(lon, lat)}")

    rng = np.random.default_rng(seed)
    model = ModelSpec(variant, (lon, lat, nvar), grid, channels, latent_dim, seed)
    p = model.params
    cin = nvar
    for s, cout in enumerate(channels):
        p[f"enc_conv{s + 1}"] = nn.init_conv2d(rng, cin, cout, dtype)
        cin = cout
    top = model.top
    if model.uses_lstm:
        p["enc_lstm"] = nn.init_lstm(rng, top * channels[-1], latent_dim, dtype)
    else:
        p["enc_dense"] = nn.init_dense(rng, top * top * channels[-1], latent_dim, dtype)
    if model.is_autoencoder:
        p["dec_dense"] = nn.init_dense(rng, latent_dim, top * top * channels[-1], dtype)
        ladder = list(reversed(channels)) + [nvar]
        for s in range(len(channels)):
            p[f"dec_conv{s + 1}"] = nn.init_conv2d(rng, ladder[s], ladder[s + 1], dtype)
    return model


# --- generic sequential runner ---------------------------------------------

def _run(model: ModelSpec, steps, x):
    caches = []
    for step in steps:
        op = step[0]
        if op == "conv":
            x, c = nn.conv2d_forward(x, model.params[step[1]])
        elif op == "dense":
            x, c = nn.dense_forward(x, model.params[step[1]])
        elif op == "lstm":
            x, c = nn.lstm_forward(x, model.params[step[1]])
        elif op == "act":
            x, c = nn.activation_forward(step[1], x)
        elif op == "pool":
            x, c = nn.maxpool2d_forward(x)
        elif op == "upsample":
            x, c = nn.upsample2d_forward(x)
        elif op == "rows":
            c = x.shape
            x = x.reshape(x.shape[0], x.shape[1], -1)
        elif op == "flatten":
            c = x.shape
            x = x.reshape(x.shape[0], -1)
        elif op == "unflatten":
            c = x.shape
            x = x.reshape((x.shape[0],) + step[1])
        elif op == "crop":
            (l0, l1), (w0, w1) = model.pad
            c = x.shape
            x = x[:, l0:x.shape[1] - l1, w0:x.shape[2] - w1, :]
        else:
            raise ValueError(f"unknown step {op}")
        check_finite(x, f"{model.variant} step {step}")
        caches.append(c)
    return x, caches


def _backprop(model: ModelSpec, steps, caches, dx, grads):
    for step, c in zip(reversed(steps), reversed(caches)):
        op = step[0]
        if op == "conv":
            dx, g = nn.conv2d_backward(c, dx, model.params[step[1]])
            grads[step[1]] = g
        elif op == "dense":
            dx, g = nn.dense_backward(c, dx, model.params[step[1]])
            grads[step[1]] = g
        elif op == "lstm":
            dx, g = nn.lstm_backward(c, dx, model.params[step[1]])
            grads[step[1]] = g
        elif op == "act":
            dx = nn.activation_backward(step[1], c, dx)
        elif op == "pool":
            dx = nn.maxpool2d_backward(c, dx)
        elif op == "upsample":
            dx = nn.upsample2d_backward(c, dx)
        elif op in ("rows", "flatten", "unflatten"):
            dx = dx.reshape(c)
        elif op == "crop":
            full = np.zeros(c, dtype=dx.dtype)
            (l0, l1), (w0, w1) = model.pad
            full[:, l0:c[1] - l1, w0:c[2] - w1, :] = dx
            dx = full
    return dx


def pad_input(model: ModelSpec, v: np.ndarray) -> np.ndarray:
    (l0, l1), (w0, w1) = model.pad
    return np.pad(v, ((0, 0), (l0, l1), (w0, w1), (0, 0)), mode="edge")


def _as_batch(model: ModelSpec, v: np.ndarray):
    v = np.asarray(v)
    single = v.ndim == 3
    if single:
        v = v[None]
    if v.ndim != 4 or v.shape[1:] != model.dims:
        raise DimensionError(f"expected (..., {model.dims}) input, got {v.shape}")
    return v, single


def encode_with_cache(model: ModelSpec, batch: np.ndarray):
    batch, _ = _as_batch(model, batch)
    return _run(model, model.encoder_steps(), pad_input(model, batch))


def decode_with_cache(model: ModelSpec, emb: np.ndarray):
    if not model.is_autoencoder:
        raise VariantError(f"variant {model.variant} has no decoder")
    return _run(model, model.decoder_steps(), np.atleast_2d(emb))


def encode(model: ModelSpec, v: np.ndarray) -> np.ndarray:
    """Map one observation ``(L, W, n)`` to ``(m,)``, or a batch to ``(N, m)``."""
    v, single = _as_batch(model, v)
    emb, _ = encode_with_cache(model, v)
    return emb[0] if single else emb


def decode(model: ModelSpec, emb: np.ndarray) -> np.ndarray:
    """Reconstruct ``(L, W, n)`` from ``(m,)``, or a batch from ``(N, m)``."""
    single = np.ndim(emb) == 1
    out, _ = decode_with_cache(model, emb)
    return out[0] if single else out


def encode_backward(model: ModelSpec, caches, d_emb, grads=None):
    grads = {} if grads is None else grads
    _backprop(model, model.encoder_steps(), caches, d_emb, grads)
    return grads


def decode_backward(model: ModelSpec, caches, d_recon, grads=None):
    """Returns ``(d_embedding, grads)``."""
    grads = {} if grads is None else grads
    d_emb = _backprop(model, model.decoder_steps(), caches, d_recon, grads)
    return d_emb, grads


def encode_batches(model: ModelSpec, data: np.ndarray, batch_size: int = 64) -> np.ndarray:
    return np.concatenate([encode(model, data[i:i + batch_size])
                           for i in range(0, len(data), batch_size)])


def reconstruction_loss(batch, recon) -> float:
    """Mean over samples of the squared L2 error over all grid entries."""
    batch, recon = np.asarray(batch), np.asarray(recon)
    if batch.shape != recon.shape:
        raise DimensionError(f"batch {batch.shape} vs reconstruction {recon.shape}")
    diff = recon.astype(np.float64) - batch
    return float(np.sum(diff * diff) / len(batch))


def reconstruction_grad(batch, recon) -> np.ndarray:
    """Gradient of :func:`reconstruction_loss` with respect to ``recon``."""
    batch, recon = np.asarray(batch), np.asarray(recon)
    if batch.shape != recon.shape:
        raise DimensionError(f"batch {batch.shape} vs reconstruction {recon.shape}")
    return (2.0 / len(batch)) * (recon - batch)


# --- checkpoint --------------------------------------------------------------

def save_checkpoint(model: ModelSpec, path) -> None:
    """Write metadata and every parameter as little-endian float32 into one npz."""
    header = {
        "format": "dsc-checkpoint",
        "version": CHECKPOINT_VERSION,
        "variant": model.variant,
        "dims": list(model.dims),
        "grid": model.grid,
        "channels": list(model.channels),
        "latent_dim": model.latent_dim,
        "seed": model.seed,
        "layers": [{"name": name, "kind": p.kind, "hyper": p.hyper,
                    "tensors": {k: list(v.shape) for k, v in p.tensors.items()}}
                   for name, p in model.params.items()],
    }
    arrays = {"__header__": np.frombuffer(json.dumps(header).encode(), dtype=np.uint8)}
    for (name, key), arr in model.flat_params().items():
        arrays[f"{name}/{key}"] = np.ascontiguousarray(arr, dtype="<f4")
    buf = io.BytesIO()
    np.savez(buf, **arrays)
    Path(path).write_bytes(buf.getvalue())


def load_checkpoint(path) -> ModelSpec:
    with np.load(path, allow_pickle=False) as z:
        try:
            header = json.loads(z["__header__"].tobytes().decode())
        except (KeyError, ValueError) as exc:
            raise FormatError(f"{path}: missing or corrupt checkpoint header") from exc
        if header.get("format") != "dsc-checkpoint" or header.get("version") != CHECKPOINT_VERSION:
            raise FormatError(f"{path}: unsupported checkpoint version")
        model = ModelSpec(header["variant"], tuple(header["dims"]), header["grid"],
                          tuple(header["channels"]), header["latent_dim"], header["seed"])
        for layer in header["layers"]:
            tensors = {}
            for key, shape in layer["tensors"].items():
                arr = z[f"{layer['name']}/{key}"]
                if list(arr.shape) != shape or arr.dtype != np.dtype("<f4"):
                    raise FormatError(f"{path}: tensor {layer['name']}/{key} malformed")
                tensors[key] = arr.astype(np.float32)
            model.params[layer["name"]] = nn.LayerParams(layer["kind"], tensors, layer["hyper"])
    return model
