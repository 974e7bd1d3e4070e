"""Quadrature on the tetrahedron in barycentric form.

Collapsed (conical product) Gauss-Jacobi rules: exact for polynomials of total
degree ``2 * npts - 1`` where ``npts`` is the number of nodes per collapsed axis.
"""

from functools import lru_cache

import numpy as np
from scipy.special import roots_jacobi

MAX_ORDER = 40


def _gauss_jacobi01(n, alpha):
    """Nodes/weights on [0, 1] for the weight ``(1 - t)**alpha``, weights summing to 1/(alpha+1)."""
    x, w = roots_jacobi(n, alpha, 0.0)
    return (1.0 + x) / 2.0, w / 2.0 ** (alpha + 1)


@lru_cache(maxsize=None)
def tet_rule(order: int):
    """Quadrature rule exact for polynomials of degree ``order`` on any tetrahedron.

    Returns
    -------
    bary : ndarray, shape (q, 4)
        Barycentric coordinates of the nodes.
    weights : ndarray, shape (q,)
        Weights summing to one; multiply by the tet volume to integrate.
    """
    if not isinstance(order, (int, np.integer)) or order < 0 or order > MAX_ORDER:
        raise ValueError(f"unsupported quadrature order {order!r} (0..{MAX_ORDER})")
    n = order // 2 + 1
    u, wu = _gauss_jacobi01(n, 2.0)
    v, wv = _gauss_jacobi01(n, 1.0)
    w, ww = _gauss_jacobi01(n, 0.0)
    U, V, W = np.meshgrid(u, v, w, indexing="ij")
    weights = (wu[:, None, None] * wv[None, :, None] * ww[None, None, :]).ravel() * 6.0
    x = U.ravel()
    y = ((1 - U) * V).ravel()
    z = ((1 - U) * (1 - V) * W).ravel()
    bary = np.stack([1 - x - y - z, x, y, z], axis=1)
    bary.setflags(write=False)
    weights.setflags(write=False)
    return bary, weights
