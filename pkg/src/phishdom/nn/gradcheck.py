"""Central finite-difference verification of analytic gradients.

The op under test is scalarized by a fixed random projection of its output,
so the full Jacobian is exercised, not just the row sums. The relative error
is an infinity-norm ratio over each input's whole gradient.
"""
from __future__ import annotations

from typing import Callable, Sequence

import numpy as np

from .tensor import Tensor, mul, no_grad, tensor_sum


def gradcheck(
    f: Callable[..., Tensor],
    inputs: Sequence[Tensor],
    rng: np.random.Generator,
    h: float = 1e-5,
) -> float:
    """Return the worst relative error between analytic and numeric gradients."""
    out = f(*inputs)
    proj = Tensor(rng.standard_normal(out.shape))

    def scalarize(*args) -> float:
        with no_grad():
            return float(tensor_sum(mul(f(*args), proj)).data)

    for t in inputs:
        t.grad = None
    tensor_sum(mul(out, proj)).backward()

    worst = 0.0
    for t in inputs:
        if not t.requires_grad:
            continue
        analytic = t.grad if t.grad is not None else np.zeros_like(t.data)
        numeric = np.zeros_like(t.data)
        flat = t.data.reshape(-1)
        nflat = numeric.reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + h
            plus = scalarize(*inputs)
            flat[i] = orig - h
            minus = scalarize(*inputs)
            flat[i] = orig
            nflat[i] = (plus - minus) / (2.0 * h)
        denom = max(np.abs(analytic).max(), np.abs(numeric).max(), 1e-12)
        worst = max(worst, float(np.abs(analytic - numeric).max() / denom))
    return worst
