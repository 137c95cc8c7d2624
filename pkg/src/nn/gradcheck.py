"""Central finite-difference gradient checks."""

from typing import Callable, Dict

import numpy as np

from src.nn.tensor import Tensor


def relative_error(analytic: np.ndarray, numeric: np.ndarray, floor: float = 1e-4) -> np.ndarray:
    """Elementwise |a - n| / max(|a| + |n|, floor)."""
    return np.abs(analytic - numeric) / np.maximum(np.abs(analytic) + np.abs(numeric), floor)


def numerical_gradient(fn: Callable[[], float], array: np.ndarray, h: float = 1e-5) -> np.ndarray:
    """d fn / d array by central differences, perturbing `array` in place."""
    grad = np.zeros_like(array)
    it = np.nditer(array, flags=["multi_index"])
    for _ in it:
        idx = it.multi_index
        original = array[idx]
        array[idx] = original + h
        plus = fn()
        array[idx] = original - h
        minus = fn()
        array[idx] = original
        grad[idx] = (plus - minus) / (2.0 * h)
    return grad


def check_gradients(
    loss_fn: Callable[[], Tensor], params: Dict[str, Tensor], h: float = 1e-5
) -> Dict[str, float]:
    """Largest relative error between backprop and finite differences, per tensor.

    `loss_fn` must rebuild the scalar loss from the current values of
    `params` on every call.
    """
    for p in params.values():
        p.zero_grad()
    loss_fn().backward()
    analytic = {
        name: (p.grad.copy() if p.grad is not None else np.zeros_like(p.data))
        for name, p in params.items()
    }
    errors = {}
    for name, p in params.items():
        numeric = numerical_gradient(lambda: loss_fn().item(), p.data, h)
        errors[name] = float(relative_error(analytic[name], numeric).max(initial=0.0))
    return errors
