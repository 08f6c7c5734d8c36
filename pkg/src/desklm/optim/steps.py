"""Parameter update rules: decoupled-weight-decay Adam and per-tensor LAMB.

Both take gradients as a name -> ndarray mapping (typically the model's
``grad_or_zeros`` output, possibly passed through a gradient transform), verify
finiteness before touching anything, and update parameters in place.  Weight
decay is skipped for bias and normalization tensors.
"""

import numpy as np

from ..errors import NumericsError
from ..tensor.value import ParamStore

__all__ = [
    "OptState",
    "adamw_step",
    "lamb_step",
    "wants_decay",
    "identity_grad_transform",
    "GRAD_TRANSFORMS",
]


def wants_decay(name: str) -> bool:
    """Decay applies to weight matrices only, never biases or norm tensors."""
    return not (name.endswith(".bias") or ".norm." in name)


class OptState:
    """First/second moments per parameter tensor plus the shared step count."""

    def __init__(self, params: ParamStore, beta1=0.9, beta2=0.999, eps=1e-6,
                 weight_decay=0.0, lr_peak=None):
        self.m = {name: np.zeros_like(v.data) for name, v in params.items()}
        self.v = {name: np.zeros_like(v.data) for name, v in params.items()}
        self.t = 0
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.weight_decay = weight_decay
        self.lr_peak = lr_peak


def _check_finite(params: ParamStore, grads: dict) -> None:
    for name in params.names():
        g = grads[name]
        if not np.all(np.isfinite(g)):
            raise NumericsError(f"non-finite gradient for parameter {name!r}; step rejected")


def _directions(params: ParamStore, grads: dict, state: OptState):
    # shared Adam machinery: updates moments in place, yields bias-corrected
    # directions r = m_hat / (sqrt(v_hat) + eps) + wd * w per tensor
    b1, b2 = state.beta1, state.beta2
    c1 = 1.0 - b1 ** state.t
    c2 = 1.0 - b2 ** state.t
    for name, param in params.items():
        g = np.asarray(grads[name], dtype=np.float64)
        m = state.m[name]
        v = state.v[name]
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * g * g
        r = (m / c1) / (np.sqrt(v / c2) + state.eps)
        if state.weight_decay != 0.0 and wants_decay(name):
            r = r + state.weight_decay * param.data
        yield name, param, r


def adamw_step(params: ParamStore, grads: dict, state: OptState, lr: float):
    """w <- w - lr * (m_hat / (sqrt(v_hat) + eps) + wd * w), decay decoupled."""
    _check_finite(params, grads)
    state.t += 1
    for name, param, r in _directions(params, grads, state):
        param.data -= lr * r
    return params, state


def lamb_step(params: ParamStore, grads: dict, state: OptState, lr: float):
    """Adam direction scaled per tensor by the trust ratio ||w|| / ||r||.

    The ratio is clipped to [0, 10] and defined as 1 when either norm is 0.
    """
    _check_finite(params, grads)
    state.t += 1
    for name, param, r in _directions(params, grads, state):
        w_norm = float(np.linalg.norm(param.data))
        r_norm = float(np.linalg.norm(r))
        if w_norm == 0.0 or r_norm == 0.0:
            trust = 1.0
        else:
            trust = min(w_norm / r_norm, 10.0)
        param.data -= (lr * trust) * r
    return params, state


def identity_grad_transform(grads: dict) -> dict:
    """Default gradient transform: pass gradients through unchanged.

    Hook point between backward() and the optimizer step for gradient
    correction schemes; the identity keeps the baseline behavior.
    """
    return grads


GRAD_TRANSFORMS = {"identity": identity_grad_transform}
