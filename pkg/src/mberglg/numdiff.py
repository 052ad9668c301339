"""Central finite differences for derivative verification and numeric fitting.

Steps are relative: ``h_k = rel_step * max(1, |x_k|)``, the usual balance of
truncation and roundoff in double precision.
"""

from __future__ import annotations

import numpy as np


def _steps(x: np.ndarray, rel_step: float) -> np.ndarray:
    return rel_step * np.maximum(1.0, np.abs(x))


def central_gradient(f, x, rel_step: float = 1e-5) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    h = _steps(x, rel_step)
    g = np.empty_like(x)
    for k in range(x.size):
        xp, xm = x.copy(), x.copy()
        xp[k] += h[k]
        xm[k] -= h[k]
        g[k] = (f(xp) - f(xm)) / (2.0 * h[k])
    return g


def central_jacobian(f, x, rel_step: float = 1e-5) -> np.ndarray:
    """Jacobian of a vector-valued f by central differences, columns = d/dx_k."""
    x = np.asarray(x, dtype=float)
    h = _steps(x, rel_step)
    cols = []
    for k in range(x.size):
        xp, xm = x.copy(), x.copy()
        xp[k] += h[k]
        xm[k] -= h[k]
        cols.append((np.asarray(f(xp)) - np.asarray(f(xm))) / (2.0 * h[k]))
    return np.stack(cols, axis=1)


def central_hessian(f, x, rel_step: float = 1e-4) -> np.ndarray:
    """Symmetric Hessian of a scalar f via the 4-point central formula."""
    x = np.asarray(x, dtype=float)
    n = x.size
    h = _steps(x, rel_step)
    hess = np.empty((n, n))
    f0 = f(x)
    for k in range(n):
        xp, xm = x.copy(), x.copy()
        xp[k] += h[k]
        xm[k] -= h[k]
        hess[k, k] = (f(xp) - 2.0 * f0 + f(xm)) / h[k] ** 2
    for k in range(n):
        for l in range(k + 1, n):
            xpp, xpm, xmp, xmm = x.copy(), x.copy(), x.copy(), x.copy()
            xpp[[k, l]] += [h[k], h[l]]
            xpm[k] += h[k]
            xpm[l] -= h[l]
            xmp[k] -= h[k]
            xmp[l] += h[l]
            xmm[[k, l]] -= [h[k], h[l]]
            hess[k, l] = hess[l, k] = (f(xpp) - f(xpm) - f(xmp) + f(xmm)) / (
                4.0 * h[k] * h[l]
            )
    return hess
