"""Central finite-difference gradient checking."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from ..errors import ContractError
from .tensor import Tensor, backward


@dataclass
class GradCheckReport:
    max_rel_error: float
    tolerance: float
    per_input: list[float] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return self.max_rel_error <= self.tolerance


def _rel_error(analytic: np.ndarray, numeric: np.ndarray) -> float:
    # elementwise relative error, floored at a fraction of the gradient scale so
    # entries that are zero analytically are judged against roundoff, not 0/0
    scale = max(1.0, float(np.max(np.abs(analytic), initial=0.0)))
    denom = np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), 1e-3 * scale)
    return float(np.max(np.abs(analytic - numeric) / denom, initial=0.0))


def grad_check(
    op: Callable[..., Tensor],
    inputs: Sequence[np.ndarray | Tensor],
    tolerance: float = 1e-5,
    h: float = 1e-5,
) -> GradCheckReport:
    """Compare reverse-mode gradients of a scalar ``op`` with central differences.

    ``op`` receives one :class:`Tensor` per input and must return a scalar
    tensor. Inputs are copied; the caller's arrays are never touched.
    """
    arrays = [np.array(x.data if isinstance(x, Tensor) else x, dtype=np.float64) for x in inputs]
    leaves = [Tensor(a, requires_grad=True) for a in arrays]
    out = op(*leaves)
    if out.data.size != 1:
        raise ContractError("grad_check needs a scalar-valued op")
    backward(out)
    errors = []
    for i, leaf in enumerate(leaves):
        analytic = np.zeros_like(arrays[i]) if leaf.grad is None else leaf.grad
        numeric = np.zeros_like(arrays[i])
        flat = arrays[i].reshape(-1)
        for j in range(flat.size):
            orig = flat[j]
            flat[j] = orig + h
            fp = float(op(*[Tensor(a) for a in arrays]).data)
            flat[j] = orig - h
            fm = float(op(*[Tensor(a) for a in arrays]).data)
            flat[j] = orig
            numeric.reshape(-1)[j] = (fp - fm) / (2.0 * h)
        errors.append(_rel_error(analytic, numeric))
    return GradCheckReport(max(errors, default=0.0), tolerance, errors)
