import os
import subprocess
import sys

import numpy as np
import pytest
from scipy.integrate import trapezoid

from ipfdyn import kernels

needs_compiled = pytest.mark.skipif("cython" not in kernels.available_backends(),
                                    reason="compiled kernels not built")


def _em_inputs(seed=0, m=50, N=40, n=3):
    rng = np.random.default_rng(seed)
    return (rng.normal(size=(m, n)), rng.normal(size=(n, n)), rng.normal(size=(N + 1, n)),
            rng.normal(size=(N, n, n)) * 0.2, rng.standard_normal((m, N, n)), 0.01)


def test_python_em_matches_explicit_loop():
    x0, A, v, sig, z, h = _em_inputs()
    out, bad = kernels.em_linear(x0, A, v, sig, z, h, backend="python")
    assert bad is None
    x = x0.copy()
    for k in range(z.shape[1]):
        x = x + h * (x + v[k]) @ A.T + np.sqrt(h) * z[:, k] @ sig[k].T
    np.testing.assert_allclose(out[:, -1], x, rtol=1e-12, atol=1e-12)


@needs_compiled
@pytest.mark.parametrize("seed", range(5))
def test_backends_agree_on_em(seed):
    args = _em_inputs(seed)
    p, _ = kernels.em_linear(*args, backend="python")
    c, _ = kernels.em_linear(*args, backend="cython")
    np.testing.assert_allclose(c, p, rtol=1e-12, atol=1e-12)


@needs_compiled
def test_backends_agree_on_ef_integrals():
    rng = np.random.default_rng(4)
    a = rng.normal(size=(30, 25, 2))
    L = rng.normal(size=(25, 2, 2))
    w = L @ np.swapaxes(L, 1, 2) + np.eye(2)
    p = kernels.ef_path_integrals(a, w, 0.02, backend="python")
    c = kernels.ef_path_integrals(a, w, 0.02, backend="cython")
    np.testing.assert_allclose(c, p, rtol=1e-12)
    q = 0.5 * np.einsum("mki,kij,mkj->mk", a, w, a)
    np.testing.assert_allclose(p, trapezoid(q, dx=0.02, axis=1), rtol=1e-12)


@needs_compiled
def test_backends_agree_on_overflow_report():
    x0 = np.ones((3, 1))
    A = np.array([[1e4]])
    args = (x0, A, np.zeros((1001, 1)), np.zeros((1000, 1, 1)), np.zeros((3, 1000, 1)), 0.01)
    _, bp = kernels.em_linear(*args, backend="python")
    _, bc = kernels.em_linear(*args, backend="cython")
    assert bp == bc and bp[0] == 0


def test_unknown_backend():
    with pytest.raises(ValueError):
        kernels.em_linear(*_em_inputs(), backend="fortran")


def test_env_forces_fallback():
    env = dict(os.environ, IPFDYN_PURE_PYTHON="1")
    out = subprocess.run([sys.executable, "-c", "import ipfdyn; print(ipfdyn.BACKEND)"],
                         env=env, capture_output=True, text=True, check=True)
    assert out.stdout.strip() == "python"
