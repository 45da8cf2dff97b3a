"""Random-instance gradient checks: analytic backward vs central differences.

Each ``check_*`` builds one random float64 instance, contracts the layer
output with a random upstream tensor to get a scalar, and returns the max
relative error over the input and every parameter.
"""

from __future__ import annotations

import numpy as np

from . import layers as nn
from .cluster import kl_gradients, kl_loss, soft_assign, target_distribution
from .model import reconstruction_grad, reconstruction_loss
from .tensor import CHECK_DTYPE, finite_diff_grad, rel_error

EPS = 1e-5  # smaller steps let roundoff dominate on small LSTM gradients


def _perturbed(fn, arr):
    """Scalar function of a replacement value for ``arr`` (restored afterwards)."""
    def f(value):
        saved = arr.copy()
        arr[...] = value
        try:
            return fn()
        finally:
            arr[...] = saved
    return f


def _check_layer(forward, backward, x, params: nn.LayerParams | None, rng):
    out, cache = forward(x)
    upstream = rng.normal(size=out.shape)
    dx, grads = backward(cache, upstream)

    def scalar():
        return float(np.sum(forward(x)[0] * upstream))

    errs = [rel_error(dx, finite_diff_grad(_perturbed(scalar, x), x.copy(), EPS))]
    if params is not None:
        for key, arr in params.tensors.items():
            num = finite_diff_grad(_perturbed(scalar, arr), arr.copy(), EPS)
            errs.append(rel_error(grads[key], num))
    return max(errs)


def _to64(p: nn.LayerParams, rng) -> nn.LayerParams:
    # randomize biases too so their gradients are exercised away from zero
    tensors = {k: (v.astype(CHECK_DTYPE) + (0.1 * rng.normal(size=v.shape) if k == "b" else 0))
               for k, v in p.tensors.items()}
    return nn.LayerParams(p.kind, tensors, dict(p.hyper))


def check_conv2d(rng, shape=(5, 5, 2), cout=3) -> float:
    params = _to64(nn.init_conv2d(rng, shape[2], cout, CHECK_DTYPE), rng)
    x = rng.normal(size=shape)
    return _check_layer(lambda v: nn.conv2d_forward(v, params),
                        lambda c, d: nn.conv2d_backward(c, d, params), x, params, rng)


def check_maxpool2d(rng, shape=(8, 8, 3)) -> float:
    # distinct values spaced far beyond EPS keep every window away from a tie
    x = rng.permutation(np.prod(shape)).reshape(shape) / np.prod(shape) + 0.01 * rng.random(shape) / np.prod(shape)
    return _check_layer(nn.maxpool2d_forward,
                        lambda c, d: (nn.maxpool2d_backward(c, d), {}), x, None, rng)


def check_upsample2d(rng, shape=(4, 4, 2)) -> float:
    x = rng.normal(size=shape)
    return _check_layer(nn.upsample2d_forward,
                        lambda c, d: (nn.upsample2d_backward(c, d), {}), x, None, rng)


def check_dense(rng, din=16, dout=8) -> float:
    params = _to64(nn.init_dense(rng, din, dout, CHECK_DTYPE), rng)
    x = rng.normal(size=din)
    return _check_layer(lambda v: nn.dense_forward(v, params),
                        lambda c, d: nn.dense_backward(c, d, params), x, params, rng)


def check_activation(rng, kind: str, size=12) -> float:
    x = rng.normal(size=size)
    if kind == "relu":
        # keep clear of the kink at zero
        x = np.where(np.abs(x) < 1e-2, 0.5, x)
    return _check_layer(lambda v: nn.activation_forward(kind, v),
                        lambda c, d: (nn.activation_backward(kind, c, d), {}), x, None, rng)


def check_lstm(rng, steps=3, din=4, hidden=5) -> float:
    params = _to64(nn.init_lstm(rng, din, hidden, CHECK_DTYPE), rng)
    x = rng.normal(size=(steps, din))
    return _check_layer(lambda v: nn.lstm_forward(v, params),
                        lambda c, d: nn.lstm_backward(c, d, params), x, params, rng)


def check_reconstruction_loss(rng, shape=(2, 3, 3, 2)) -> float:
    batch = rng.random(shape)
    recon = rng.random(shape)
    num = finite_diff_grad(lambda r: reconstruction_loss(batch, r), recon, EPS)
    return rel_error(reconstruction_grad(batch, recon), num)


def check_kl_gradients(rng, t=6, k=2, m=3, alpha=1.0) -> float:
    emb = rng.normal(size=(t, m))
    cent = rng.normal(size=(k, m))
    p = target_distribution(soft_assign(emb, cent, alpha))
    # perturb P so it is not exactly the fixed point of Q
    p = 0.5 * p + 0.5 * rng.dirichlet(np.ones(k), size=t)
    g_e, g_c = kl_gradients(p, soft_assign(emb, cent, alpha), emb, cent, alpha)
    num_e = finite_diff_grad(lambda e: kl_loss(p, soft_assign(e, cent, alpha)), emb, EPS)
    num_c = finite_diff_grad(lambda c: kl_loss(p, soft_assign(emb, c, alpha)), cent, EPS)
    return max(rel_error(g_e, num_e), rel_error(g_c, num_c))


CHECKS = {
    "conv2d": check_conv2d,
    "maxpool2d": check_maxpool2d,
    "upsample2d": check_upsample2d,
    "dense": check_dense,
    "relu": lambda rng: check_activation(rng, "relu"),
    "sigmoid": lambda rng: check_activation(rng, "sigmoid"),
    "tanh": lambda rng: check_activation(rng, "tanh"),
    "lstm": check_lstm,
    "reconstruction_loss": check_reconstruction_loss,
    "kl_gradients": check_kl_gradients,
}


def worst_error(name: str, instances: int = 50, seed: int = 0) -> float:
    rng = np.random.default_rng(seed)
    return max(CHECKS[name](rng) for _ in range(instances))
