"""Central finite-difference gradient checks"""

import logging
from typing import Callable, Optional, Sequence

import numpy as np

from autograd.tensor import Tape, Tensor, UsageError, precision

logger = logging.getLogger(__name__)


def grad_check(
    f: Callable[..., Tensor],
    inputs: Sequence[Tensor],
    eps: float = 1e-4,
    max_coords: Optional[int] = None,
    rng: Optional[np.random.Generator] = None,
) -> float:
    """Compare tape gradients of ``f(*inputs)`` against central differences.

    Inputs are promoted to float64 in place and perturbed in place, so ``f``
    may also close over them (e.g. model parameters). The step for a
    coordinate x is ``eps * max(1, |x|)``.

    Args:
        f: Callable returning a scalar Tensor.
        inputs: Tensors to differentiate; they are marked requires_grad.
        eps: Relative finite-difference step.
        max_coords: Check at most this many random coordinates per input.
        rng: Generator used to pick coordinates.

    Returns:
        float: max over checked coordinates of
        |analytic - numeric| / max(1, |analytic|, |numeric|).
    """
    rng = rng or np.random.default_rng(0)
    for tensor in inputs:
        tensor.data = tensor.data.astype(np.float64)
        tensor.requires_grad = True
        tensor.grad = None

    with precision(np.float64):
        with Tape() as tape:
            loss = f(*inputs)
        if loss.size != 1:
            raise UsageError("grad_check needs a scalar function")
        gradient_map = tape.backward(loss)

        def value() -> float:
            return float(f(*inputs).data.reshape(-1)[0])

        worst = 0.0
        for tensor in inputs:
            analytic = gradient_map.get(tensor, np.zeros_like(tensor.data))
            flat = tensor.data.reshape(-1)
            coords = np.arange(flat.size)
            if max_coords is not None and flat.size > max_coords:
                coords = rng.choice(flat.size, size=max_coords, replace=False)
            for i in coords:
                original = flat[i]
                h = eps * max(1.0, abs(original))
                flat[i] = original + h
                plus = value()
                flat[i] = original - h
                minus = value()
                flat[i] = original
                numeric = (plus - minus) / (2 * h)
                a = analytic.reshape(-1)[i]
                err = abs(a - numeric) / max(1.0, abs(a), abs(numeric))
                worst = max(worst, err)
    logger.debug(f"grad_check max relative error {worst:.3e}")
    return worst
