"""Array primitives with explicit backward passes.

Feature maps use NHWC layout: ``(batch, height, width, channels)``.
Convolution weights are ``(kh, kw, c_in, c_out)``. Every ``*_forward``
returns ``(output, cache)`` and the matching ``*_backward`` consumes the
cache, so nothing is stored on shared objects.
"""

from __future__ import annotations

from functools import lru_cache

import numpy as np
from scipy.special import erf

from .errors import ConfigError, DimensionError

_SQRT_HALF = 0.7071067811865476
_INV_SQRT_2PI = 0.3989422804014327


# --------------------------------------------------------------------------
# convolution
# --------------------------------------------------------------------------


def _out_size(n, k, stride, pad):
    return (n + 2 * pad - k) // stride + 1


def conv2d_forward(x, w, b, stride=1, pad=0):
    n, h, wd, c = x.shape
    kh, kw, cin, cout = w.shape
    if cin != c:
        raise DimensionError(f"conv expects {cin} input channels, got {c}")
    ho, wo = _out_size(h, kh, stride, pad), _out_size(wd, kw, stride, pad)
    if kh == 1 and kw == 1 and stride == 1 and pad == 0:
        cols = x.reshape(-1, c)
    else:
        xp = np.pad(x, ((0, 0), (pad, pad), (pad, pad), (0, 0))) if pad else x
        cols = np.empty((n, ho, wo, kh, kw, c), dtype=x.dtype)
        for i in range(kh):
            for j in range(kw):
                cols[:, :, :, i, j, :] = xp[
                    :, i : i + stride * ho : stride, j : j + stride * wo : stride, :
                ]
        cols = cols.reshape(n * ho * wo, kh * kw * c)
    y = cols @ w.reshape(-1, cout) + b
    cache = (cols, x.shape, w, stride, pad)
    return y.reshape(n, ho, wo, cout), cache


def conv2d_backward(dy, cache):
    """Returns ``(dx, dw, db)``."""
    cols, x_shape, w, stride, pad = cache
    n, h, wd, c = x_shape
    kh, kw, cin, cout = w.shape
    ho, wo = dy.shape[1:3]
    dy2 = dy.reshape(-1, cout)
    dw = (cols.T @ dy2).reshape(w.shape)
    db = dy2.sum(axis=0)
    dcols = dy2 @ w.reshape(-1, cout).T
    if kh == 1 and kw == 1 and stride == 1 and pad == 0:
        return dcols.reshape(x_shape), dw, db
    dcols = dcols.reshape(n, ho, wo, kh, kw, c)
    dxp = np.zeros((n, h + 2 * pad, wd + 2 * pad, c), dtype=dy.dtype)
    for i in range(kh):
        for j in range(kw):
            dxp[:, i : i + stride * ho : stride, j : j + stride * wo : stride, :] += dcols[
                :, :, :, i, j, :
            ]
    if pad:
        dxp = dxp[:, pad:-pad, pad:-pad, :]
    return dxp, dw, db


# --------------------------------------------------------------------------
# bilinear resampling
# --------------------------------------------------------------------------


@lru_cache(maxsize=None)
def _interp_matrix(n: int, factor: int) -> np.ndarray:
    """``(n*factor, n)`` bilinear upsampling matrix, half-pixel centres.

    Out-of-range source coordinates are clamped to the border, the usual
    ``align_corners=False`` convention. Entries are dyadic rationals.
    """
    m = np.zeros((n * factor, n), dtype=np.float64)
    for o in range(n * factor):
        src = (o + 0.5) / factor - 0.5
        src = min(max(src, 0.0), n - 1.0)
        i0 = int(np.floor(src))
        i1 = min(i0 + 1, n - 1)
        lam = src - i0
        m[o, i0] += 1.0 - lam
        m[o, i1] += lam
    m.setflags(write=False)
    return m


def upsample(x, factor: int):
    """Bilinear upsampling of the two spatial axes following the batch axis.

    Works for NHWC features and for ``(N, H, W)`` logit grids.
    """
    if factor == 1:
        return x
    uh = _interp_matrix(x.shape[1], factor).astype(x.dtype, copy=False)
    uw = _interp_matrix(x.shape[2], factor).astype(x.dtype, copy=False)
    y = np.einsum("ih,nh...->ni...", uh, x)
    return np.einsum("jw,niw...->nij...", uw, y)


def upsample_backward(dy, factor: int):
    if factor == 1:
        return dy
    uh = _interp_matrix(dy.shape[1] // factor, factor).astype(dy.dtype, copy=False)
    uw = _interp_matrix(dy.shape[2] // factor, factor).astype(dy.dtype, copy=False)
    d = np.einsum("ih,ni...->nh...", uh, dy)
    return np.einsum("jw,nhj...->nhw...", uw, d)


# --------------------------------------------------------------------------
# activations
# --------------------------------------------------------------------------


def _gelu(z):
    return 0.5 * z * (1.0 + erf(z * _SQRT_HALF))


def _gelu_grad(z):
    cdf = 0.5 * (1.0 + erf(z * _SQRT_HALF))
    return cdf + z * _INV_SQRT_2PI * np.exp(-0.5 * z * z)


ACTIVATIONS = {
    "gelu": (_gelu, _gelu_grad),
    "relu": (lambda z: np.maximum(z, 0), lambda z: (z > 0).astype(z.dtype)),
    "identity": (lambda z: z, lambda z: np.ones_like(z)),
}


def activation(name: str):
    """Return ``(f, f_prime)`` for a named activation. All satisfy f(0) = 0."""
    try:
        return ACTIVATIONS[name]
    except KeyError:
        raise ConfigError(f"unknown activation {name!r}; choose from {sorted(ACTIVATIONS)}")


# --------------------------------------------------------------------------
# logistic helpers
# --------------------------------------------------------------------------


def sigmoid(z):
    z = np.asarray(z)
    out = np.empty_like(z, dtype=np.result_type(z, np.float32))
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out
