"""Central-difference verification of reverse-mode gradients."""

from __future__ import annotations

import numpy as np

from desklm.errors import ContractError, NumericsError
from desklm.tensor.value import ParamStore, Value, backward

REL_ERR_FLOOR = 1e-8  # denominator floor; avoids blowups where both sides ~ 0


def grad_check_report(fn, params: ParamStore, step: float = 1e-5) -> dict[str, float]:
    """Worst relative error per parameter between backward() and central differences.

    `fn` takes no arguments, reads the current parameter data and returns a
    scalar Value; it must be deterministic. Relative error uses the
    denominator max(|analytic|, |numeric|, 1e-8).
    """
    if step <= 0:
        raise ContractError(f"grad_check: step must be positive, got {step}")
    loss = fn()
    backward(loss)
    analytic = {name: v.grad_or_zeros().copy() for name, v in params.items()}

    report: dict[str, float] = {}
    for name, v in params.items():
        flat = v.data.ravel()
        ana = analytic[name].ravel()
        worst = 0.0
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + step
            f_plus = float(fn().data)
            flat[i] = orig - step
            f_minus = float(fn().data)
            flat[i] = orig
            numeric = (f_plus - f_minus) / (2.0 * step)
            if not (np.isfinite(numeric) and np.isfinite(ana[i])):
                raise NumericsError(f"grad_check: non-finite value at parameter {name!r}")
            rel = abs(numeric - ana[i]) / max(abs(numeric), abs(ana[i]), REL_ERR_FLOOR)
            if rel > worst:
                worst = rel
        report[name] = worst
    return report


def grad_check(fn, params: ParamStore, step: float = 1e-5) -> float:
    """Maximum relative error across all parameters; see grad_check_report."""
    report = grad_check_report(fn, params, step)
    return max(report.values()) if report else 0.0


def check_single(fn_of_x, x0: np.ndarray, step: float = 1e-5) -> float:
    """grad_check specialized to one unnamed tensor input."""
    params = ParamStore()
    params.add("x", Value(np.array(x0, dtype=np.float64), op_tag="param"))

    def fn():
        return fn_of_x(params["x"])

    return grad_check(fn, params, step)
