import os
import subprocess
import sys

import numpy as np
import pytest

from getral import backend

BOTH = [backend.get_backend(name) for name in backend.available_backends()]


@pytest.mark.skipif(len(BOTH) < 2, reason="numba backend unavailable")
def test_backends_agree_on_cooccurrence():
    gen = np.random.default_rng(0)
    for _ in range(30):
        n_tokens = int(gen.integers(1, 25))
        node_ids = gen.integers(0, max(1, n_tokens // 2 + 1), size=n_tokens).astype(np.int64)
        n_nodes = int(node_ids.max()) + 1
        window = int(gen.integers(2, 6))
        outs = [b.cooccurrence_adjacency(node_ids, n_nodes, window) for b in BOTH]
        np.testing.assert_array_equal(outs[0], outs[1])


@pytest.mark.skipif(len(BOTH) < 2, reason="numba backend unavailable")
def test_backends_agree_on_cosine_rows():
    gen = np.random.default_rng(1)
    for _ in range(15):
        a = gen.normal(size=(6, 5))
        b = gen.normal(size=(4, 5))
        a[0] = 0.0  # degenerate row
        grad = gen.normal(size=(6, 4))
        results = []
        for impl in BOTH:
            m, na, nb = impl.cosine_rows_forward(a, b)
            ga, gb = impl.cosine_rows_backward(a, b, m, na, nb, grad)
            results.append((m, ga, gb))
        for lhs, rhs in zip(results[0], results[1]):
            np.testing.assert_allclose(lhs, rhs, rtol=1e-12, atol=1e-14)


@pytest.mark.skipif(len(BOTH) < 2, reason="numba backend unavailable")
def test_backends_agree_on_kernel_pool():
    gen = np.random.default_rng(2)
    mus = np.array([1.0, -0.5, 0.5])
    sigmas = np.array([1e-3, 0.1, 0.1])
    for _ in range(15):
        m = np.clip(gen.normal(size=(5, 4)), -1.0, 1.0)
        m[0, 0] = 1.0  # make the exact-match kernel live somewhere
        grad = gen.normal(size=(5, 3))
        results = []
        for impl in BOTH:
            k = impl.kernel_pool_forward(m, mus, sigmas)
            gm = impl.kernel_pool_backward(m, mus, sigmas, k, grad)
            results.append((k, gm))
        np.testing.assert_allclose(results[0][0], results[1][0], rtol=1e-12, atol=1e-14)
        np.testing.assert_allclose(results[0][1], results[1][1], rtol=1e-12, atol=1e-14)


def _active_backend_under(env_value):
    env = dict(os.environ)
    if env_value is None:
        env.pop(backend.ENV_VAR, None)
    else:
        env[backend.ENV_VAR] = env_value
    proc = subprocess.run(
        [sys.executable, "-c", "import getral.backend as b; print(b.ACTIVE_BACKEND)"],
        capture_output=True, text=True, env=env,
    )
    return proc


def test_env_flag_selects_numpy():
    proc = _active_backend_under("numpy")
    assert proc.returncode == 0
    assert proc.stdout.strip() == "numpy"


def test_env_flag_rejects_unknown_value():
    proc = _active_backend_under("cuda")
    assert proc.returncode != 0
    assert "cuda" in proc.stderr


def test_get_backend_unknown_name():
    with pytest.raises(backend.BackendError):
        backend.get_backend("fortran")
