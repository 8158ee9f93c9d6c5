"""Central finite differences against hand-written gradients (float64 only)."""

from __future__ import annotations

from typing import Callable, Iterable

import numpy as np

EPS = 1e-5


def numeric_grad(f: Callable[[], float], x: np.ndarray, eps: float = EPS) -> np.ndarray:
    """d f / d x by central differences, perturbing ``x`` in place and restoring it."""
    if x.dtype != np.float64:
        raise TypeError("finite differences need float64 arrays")
    g = np.zeros_like(x)
    it = np.nditer(x, flags=["multi_index"])
    for _ in it:
        i = it.multi_index
        old = x[i]
        x[i] = old + eps
        up = f()
        x[i] = old - eps
        down = f()
        x[i] = old
        g[i] = (up - down) / (2.0 * eps)
    return g


def rel_error(analytic: np.ndarray, numeric: np.ndarray, floor: float = 1e-8) -> float:
    """||a - n|| / max(||a||, ||n||, floor); zero when both vanish."""
    scale = max(np.linalg.norm(analytic), np.linalg.norm(numeric), floor)
    return float(np.linalg.norm(analytic - numeric) / scale)


def check_arrays(f: Callable[[], float], pairs: Iterable[tuple[str, np.ndarray, np.ndarray]],
                 eps: float = EPS) -> dict[str, float]:
    """Relative error per named array; ``pairs`` holds (name, live array, analytic gradient)."""
    return {name: rel_error(g, numeric_grad(f, x, eps)) for name, x, g in pairs}


def check_params(f: Callable[[], float], params, grads, eps: float = EPS) -> dict[str, float]:
    """Same as ``check_arrays`` over two objects exposing ``named_arrays()`` in the same order."""
    return check_arrays(f, ((n, x, g) for (n, x), (_, g) in zip(params.named_arrays(), grads.named_arrays())), eps)
