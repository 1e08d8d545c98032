"""Numpy implementations of the hot loops.

These are the reference versions; ``_kernels.pyx`` mirrors them with explicit
loops. Both return the same values to rounding.
"""
import numpy as np


def em_linear(x0, A, v, sig, z, h):
    """Euler-Maruyama for ``dx = A (x + v) dt + sig dW``.

    Parameters
    ----------
    x0 : (m, n) initial states.
    A : (n, n) drift operator.
    v : (N + 1, n) control at the grid nodes.
    sig : (N, n, n) diffusion factor at the left node of each step.
    z : (m, N, n) standard normal draws.
    h : step.

    Returns
    -------
    paths : (m, N + 1, n)
    bad : ``(path, step)`` of the first non-finite state, or ``None``.
    """
    m, n = x0.shape
    steps = z.shape[1]
    out = np.empty((m, steps + 1, n))
    out[:, 0] = x0
    sq = np.sqrt(h)
    x = x0.copy()
    with np.errstate(over="ignore", invalid="ignore"):
        for k in range(steps):
            x = x + ((x + v[k]) @ A.T) * h + sq * (z[:, k] @ sig[k].T)
            out[:, k + 1] = x
            finite = np.isfinite(x).all(axis=1)
            if not finite.all():
                return out, (int(np.argmin(finite)), k + 1)
    return out, None


def ef_path_integrals(a, w, h):
    """Trapezoid integral of ``0.5 * a^T W a`` along each path.

    ``a`` is (m, K, n) drift samples on K uniform nodes, ``w`` is (K, n, n)
    the inverse of ``2b`` at each node.
    """
    q = 0.5 * np.einsum("mki,kij,mkj->mk", a, w, a)
    if q.shape[1] < 2:
        return np.zeros(q.shape[0])
    return h * (q.sum(axis=1) - 0.5 * (q[:, 0] + q[:, -1]))
