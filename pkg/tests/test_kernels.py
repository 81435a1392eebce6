import os
import subprocess
import sys

import numpy as np
import pytest

from spinrisk import kernels
from spinrisk._accel import HAS_NUMBA


def _random_batch(rng, R=7, T=40, N=6, sigma=0.7):
    J = rng.normal(size=(R, N, N))
    theta = rng.normal(size=(R, N))
    noise = sigma * rng.standard_normal((R, T, N))
    s0 = np.where(rng.random((R, N)) < 0.5, 1, -1).astype(np.int8)
    return J, theta, noise, s0


@pytest.mark.skipif(not HAS_NUMBA, reason="numba not installed")
@pytest.mark.parametrize("seed", range(5))
def test_sync_backends_agree(seed):
    J, theta, noise, s0 = _random_batch(np.random.default_rng(seed))
    a = kernels.run_sync(J, theta, noise, s0, record=True, use_numba=True)
    b = kernels.run_sync(J, theta, noise, s0, record=True, use_numba=False)
    for x, y in zip(a, b):
        np.testing.assert_array_equal(x, y)


@pytest.mark.skipif(not HAS_NUMBA, reason="numba not installed")
@pytest.mark.parametrize("seed", range(5))
def test_async_backends_agree(seed):
    rng = np.random.default_rng(100 + seed)
    J, theta, _, s0 = _random_batch(rng)
    sites = rng.integers(0, 6, size=(7, 40))
    noise = rng.standard_normal((7, 40))
    a = kernels.run_async(J, theta, sites, noise, s0, record=True, use_numba=True)
    b = kernels.run_async(J, theta, sites, noise, s0, record=True, use_numba=False)
    for x, y in zip(a, b):
        np.testing.assert_array_equal(x, y)


def test_counts_and_magnetization_consistent():
    J, theta, noise, s0 = _random_batch(np.random.default_rng(9))
    m, z, final, states = kernels.run_sync(J, theta, noise, s0, record=True)
    np.testing.assert_array_equal(states[:, 0], s0)
    np.testing.assert_array_equal(states[:, -1], final)
    np.testing.assert_array_equal(z, (states[:, 1:] > 0).sum(axis=1))
    np.testing.assert_allclose(m, states.mean(axis=2))


def test_zero_steps():
    J, theta, noise, s0 = _random_batch(np.random.default_rng(1), T=0)
    m, z, final, _ = kernels.run_sync(J, theta, noise, s0)
    assert m.shape == (7, 1)
    assert not z.any()
    np.testing.assert_array_equal(final, s0)


def test_env_flag_selects_numpy_backend():
    env = dict(os.environ, SPINRISK_DISABLE_NUMBA="1")
    out = subprocess.run([sys.executable, "-c", "import spinrisk; print(spinrisk.backend_name())"],
                         env=env, capture_output=True, text=True, check=True)
    assert out.stdout.strip() == "numpy"
