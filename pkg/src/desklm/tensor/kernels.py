"""Hot numeric kernels with a compiled core and a numpy fallback.

The compiled extension (``desklm.tensor._ckernels``, built from Cython) is
picked at import time when available; setting the environment variable
``DESKLM_NO_EXT=1`` forces the numpy path. Both backends compute the same
formulas in 64-bit floats; ``BACKEND`` names the active one.

All kernels take and return C-contiguous float64 arrays. The 2-d variants
treat the input as rows of width H (callers reshape).
"""

import os

import numpy as np

GELU_CUBIC = 0.044715
GELU_SCALE = 0.7978845608028654  # sqrt(2/pi)


def _np_gelu_fwd(x):
    inner = GELU_SCALE * (x + GELU_CUBIC * x * x * x)
    return 0.5 * x * (1.0 + np.tanh(inner))


def _np_gelu_bwd(x, dy):
    inner = GELU_SCALE * (x + GELU_CUBIC * x * x * x)
    t = np.tanh(inner)
    dinner = GELU_SCALE * (1.0 + 3.0 * GELU_CUBIC * x * x)
    return dy * (0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * dinner)


def _np_softmax2d_fwd(x):
    shifted = x - x.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=1, keepdims=True)


def _np_softmax2d_bwd(y, dy):
    inner = (dy * y).sum(axis=1, keepdims=True)
    return y * (dy - inner)


def _np_layernorm2d_fwd(x, gamma, beta, eps):
    mean = x.mean(axis=1, keepdims=True)
    var = ((x - mean) ** 2).mean(axis=1, keepdims=True)
    rstd = 1.0 / np.sqrt(var + eps)
    xhat = (x - mean) * rstd
    return xhat * gamma + beta, xhat, rstd[:, 0]


def _np_layernorm2d_bwd(xhat, rstd, gamma, dy):
    dxhat = dy * gamma
    m1 = dxhat.mean(axis=1, keepdims=True)
    m2 = (dxhat * xhat).mean(axis=1, keepdims=True)
    dx = rstd[:, None] * (dxhat - m1 - xhat * m2)
    dgamma = (dy * xhat).sum(axis=0)
    dbeta = dy.sum(axis=0)
    return dx, dgamma, dbeta


_impl = None
if not os.environ.get("DESKLM_NO_EXT"):
    try:
        from desklm.tensor import _ckernels as _impl
    except ImportError:
        _impl = None

if _impl is not None:
    BACKEND = "compiled"

    def _c(x):
        return np.ascontiguousarray(x, dtype=np.float64)

    def gelu_fwd(x):
        x = _c(x)
        return _impl.gelu_fwd(x.ravel()).reshape(x.shape)

    def gelu_bwd(x, dy):
        x = _c(x)
        return _impl.gelu_bwd(x.ravel(), _c(dy).ravel()).reshape(x.shape)

    def softmax2d_fwd(x):
        return _impl.softmax2d_fwd(_c(x))

    def softmax2d_bwd(y, dy):
        return _impl.softmax2d_bwd(_c(y), _c(dy))

    def layernorm2d_fwd(x, gamma, beta, eps):
        return _impl.layernorm2d_fwd(_c(x), _c(gamma), _c(beta), eps)

    def layernorm2d_bwd(xhat, rstd, gamma, dy):
        return _impl.layernorm2d_bwd(_c(xhat), _c(rstd), _c(gamma), _c(dy))

else:
    BACKEND = "numpy"
    gelu_fwd = _np_gelu_fwd
    gelu_bwd = _np_gelu_bwd
    softmax2d_fwd = _np_softmax2d_fwd
    softmax2d_bwd = _np_softmax2d_bwd
    layernorm2d_fwd = _np_layernorm2d_fwd
    layernorm2d_bwd = _np_layernorm2d_bwd

# The fallback implementations stay importable under stable names so the
# benchmark and parity tests can compare backends directly.
numpy_impl = {
    "gelu_fwd": _np_gelu_fwd,
    "gelu_bwd": _np_gelu_bwd,
    "softmax2d_fwd": _np_softmax2d_fwd,
    "softmax2d_bwd": _np_softmax2d_bwd,
    "layernorm2d_fwd": _np_layernorm2d_fwd,
    "layernorm2d_bwd": _np_layernorm2d_bwd,
}

compiled_impl = None
if _impl is not None:
    compiled_impl = {
        "gelu_fwd": _impl.gelu_fwd,
        "gelu_bwd": _impl.gelu_bwd,
        "softmax2d_fwd": _impl.softmax2d_fwd,
        "softmax2d_bwd": _impl.softmax2d_bwd,
        "layernorm2d_fwd": _impl.layernorm2d_fwd,
        "layernorm2d_bwd": _impl.layernorm2d_bwd,
    }
