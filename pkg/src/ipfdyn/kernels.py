"""Backend selection for the hot loops.

The compiled extension is used when it imports; otherwise the numpy
fallback. Set ``IPFDYN_PURE_PYTHON=1`` to force the fallback.
"""
import os

import numpy as np

from . import _kernels_py

BACKEND = "python"
_impl = _kernels_py

if os.environ.get("IPFDYN_PURE_PYTHON", "") not in ("1", "true", "yes"):
    try:
        from . import _kernels as _compiled
    except ImportError:
        pass
    else:
        _impl = _compiled
        BACKEND = "cython"


def _c(x):
    return np.ascontiguousarray(x, dtype=np.float64)


def em_linear(x0, A, v, sig, z, h, backend=None):
    impl = _pick(backend)
    return impl.em_linear(_c(x0), _c(A), _c(v), _c(sig), _c(z), float(h))


def ef_path_integrals(a, w, h, backend=None):
    impl = _pick(backend)
    return impl.ef_path_integrals(_c(a), _c(w), float(h))


def available_backends():
    names = ["python"]
    if _impl is not _kernels_py:
        names.append("cython")
    return names


def _pick(backend):
    if backend is None:
        return _impl
    if backend == "python":
        return _kernels_py
    if backend == "cython":
        if _impl is _kernels_py:
            raise RuntimeError("compiled kernels are not available")
        return _impl
    raise ValueError(f"unknown backend {backend!r}")
