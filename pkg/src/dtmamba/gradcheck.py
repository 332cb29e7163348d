"""Central finite-difference oracle for checking analytic gradients."""

from __future__ import annotations

from typing import Callable, Sequence

import numpy as np

from .tensor import Tensor


def _central(f: Callable[[], float], flat: np.ndarray, i: int, h: float) -> float:
    orig = flat[i]
    flat[i] = orig + h
    fp = f()
    flat[i] = orig - h
    fm = f()
    flat[i] = orig
    return (fp - fm) / (2.0 * h)


def numerical_grad(f: Callable[[], float], arr: np.ndarray, h: float = 1e-5,
                   richardson: bool = False) -> np.ndarray:
    """d f / d arr by central differences, perturbing ``arr`` in place.

    With ``richardson`` the steps h and h/2 are combined to cancel the O(h^2)
    truncation term.  That permits a larger ``h`` and so less rounding noise,
    which matters when a gradient entry is tiny next to the value of ``f``.
    """
    grad = np.zeros_like(arr)
    flat = arr.reshape(-1)
    gflat = grad.reshape(-1)
    for i in range(flat.size):
        d = _central(f, flat, i, h)
        if richardson:
            d = (4.0 * _central(f, flat, i, h / 2) - d) / 3.0
        gflat[i] = d
    return grad


def relative_error(analytic: np.ndarray, numeric: np.ndarray, floor: float = 1e-8) -> np.ndarray:
    return np.abs(analytic - numeric) / (np.abs(analytic) + floor)


def check_gradients(loss_fn: Callable[[], Tensor], params: Sequence[Tensor], h: float = 1e-5,
                    richardson: bool = False):
    """Compare backprop against finite differences for every entry of ``params``.

    ``loss_fn`` must rebuild the graph from the current ``params`` data and be
    deterministic.  Returns ``(analytic, numeric)`` lists aligned with ``params``.
    """
    for p in params:
        p.grad = None
    loss_fn().backward()
    analytic = [np.zeros_like(p.data) if p.grad is None else p.grad.copy() for p in params]
    numeric = [numerical_grad(lambda: loss_fn().item(), p.data, h, richardson) for p in params]
    return analytic, numeric
