"""Fourth-order central finite differences.

Used as the independent oracle path for anything that also has an analytic
(jet) path.  Step per axis is ``max(1e-3, 1e-3*|x_a|)``.
"""

from __future__ import annotations

from typing import Callable

import numpy as np

_OFFS = (-2, -1, 1, 2)
_W1 = {-2: 1.0, -1: -8.0, 1: 8.0, 2: -1.0}           # / (12 h)
_W2 = {-2: -1.0, -1: 16.0, 0: -30.0, 1: 16.0, 2: -1.0}  # / (12 h^2)


def steps(x: np.ndarray) -> np.ndarray:
    return np.maximum(1e-3, 1e-3 * np.abs(x))


def fd_derivatives(func: Callable[[np.ndarray], np.ndarray], x: np.ndarray,
                   second: bool = True):
    """Value, first and second partials of ``func`` at points ``x`` (N, n).

    ``func`` maps (M, n) points to (M, *shape).  Returns ``val`` (N, *shape),
    ``d`` (N, n, *shape) with ``d[:, a] = ∂_a func`` and, if requested,
    ``d2`` (N, n, n, *shape).
    """
    x = np.asarray(x, dtype=float)
    N, n = x.shape
    h = steps(x)
    val = np.asarray(func(x))
    shape = val.shape[1:]
    expand = (slice(None),) + (None,) * len(shape)

    def shifted(offsets):
        y = x.copy()
        for a, k in offsets:
            y[:, a] += k * h[:, a]
        return np.asarray(func(y))

    d = np.zeros((N, n) + shape)
    cache = {}
    for a in range(n):
        for k in _OFFS:
            cache[(a, k)] = shifted([(a, k)])
        d[:, a] = sum(_W1[k] * cache[(a, k)] for k in _OFFS) / (12.0 * h[:, a][expand])
    if not second:
        return val, d

    d2 = np.zeros((N, n, n) + shape)
    for a in range(n):
        acc = -30.0 * val + sum(_W2[k] * cache[(a, k)] for k in _OFFS)
        d2[:, a, a] = acc / (12.0 * h[:, a][expand] ** 2)
        for b in range(a + 1, n):
            acc = 0.0
            for ka in _OFFS:
                for kb in _OFFS:
                    acc = acc + _W1[ka] * _W1[kb] * shifted([(a, ka), (b, kb)])
            mixed = acc / (144.0 * (h[:, a] * h[:, b])[expand])
            d2[:, a, b] = mixed
            d2[:, b, a] = mixed
    return val, d, d2
