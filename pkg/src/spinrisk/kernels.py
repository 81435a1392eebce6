"""Hot loops of the threshold dynamics.

Every kernel exists twice: a numba-compiled loop and a vectorised numpy
version that batches over realizations. Both take the same pre-drawn random
inputs, so they agree on every output (the only possible divergence is a
local field landing within rounding of exactly zero, which has probability
zero under continuous noise). ``run_sync`` / ``run_async`` dispatch on
:data:`spinrisk._accel.USE_NUMBA`.

Array conventions (R realizations, T steps, N sites):

* ``J``      float64 (R, N, N)
* ``theta``  float64 (R, N), effective supports (alpha already added)
* ``s0``     int8 (R, N), entries +-1
* ``states`` int8 (R, T + 1, N) to record configurations, or (R, 0, N) not to

Outputs are ``m`` (R, T + 1), ``z`` (R, N) counting +1 outcomes over
t = 1..T, and the final configuration (R, N).
"""
import numpy as np

from ._accel import USE_NUMBA, njit


@njit(cache=True, nogil=True)
def _sync_numba(J, theta, noise, s0, states):
    R, T, N = noise.shape
    record = states.shape[1] > 0
    m = np.empty((R, T + 1))
    z = np.zeros((R, N), dtype=np.int64)
    final = np.empty((R, N), dtype=np.int8)
    s = np.empty(N, dtype=np.int8)
    nxt = np.empty(N, dtype=np.int8)
    for r in range(R):
        tot = 0
        for i in range(N):
            s[i] = s0[r, i]
            tot += s[i]
        m[r, 0] = tot / N
        if record:
            states[r, 0, :] = s
        for t in range(T):
            tot = 0
            for i in range(N):
                h = 0.0
                for j in range(N):
                    h += J[r, i, j] * s[j]
                h = h - theta[r, i] + noise[r, t, i]
                if h >= 0.0:
                    nxt[i] = 1
                    z[r, i] += 1
                else:
                    nxt[i] = -1
                tot += nxt[i]
            for i in range(N):
                s[i] = nxt[i]
            m[r, t + 1] = tot / N
            if record:
                states[r, t + 1, :] = s
        final[r, :] = s
    return m, z, final


def _sync_numpy(J, theta, noise, s0, states):
    R, T, N = noise.shape
    record = states.shape[1] > 0
    m = np.empty((R, T + 1))
    z = np.zeros((R, N), dtype=np.int64)
    s = s0.astype(np.float64)
    m[:, 0] = s0.sum(axis=1, dtype=np.int64) / N
    if record:
        states[:, 0, :] = s0
    for t in range(T):
        h = np.matmul(J, s[:, :, None])[:, :, 0] - theta + noise[:, t, :]
        up = h >= 0.0
        z += up
        s = np.where(up, 1.0, -1.0)
        m[:, t + 1] = (2 * up.sum(axis=1) - N) / N
        if record:
            states[:, t + 1, :] = s
    return m, z, s.astype(np.int8)


@njit(cache=True, nogil=True)
def _async_numba(J, theta, sites, noise, s0, states):
    R, T = noise.shape
    N = s0.shape[1]
    record = states.shape[1] > 0
    m = np.empty((R, T + 1))
    z = np.zeros((R, N), dtype=np.int64)
    final = np.empty((R, N), dtype=np.int8)
    s = np.empty(N, dtype=np.int8)
    for r in range(R):
        tot = 0
        for i in range(N):
            s[i] = s0[r, i]
            tot += s[i]
        m[r, 0] = tot / N
        if record:
            states[r, 0, :] = s
        for t in range(T):
            k = sites[r, t]
            h = 0.0
            for j in range(N):
                h += J[r, k, j] * s[j]
            h = h - theta[r, k] + noise[r, t]
            new = 1 if h >= 0.0 else -1
            tot += new - s[k]
            s[k] = new
            for i in range(N):
                if s[i] > 0:
                    z[r, i] += 1
            m[r, t + 1] = tot / N
            if record:
                states[r, t + 1, :] = s
        final[r, :] = s
    return m, z, final


def _async_numpy(J, theta, sites, noise, s0, states):
    R, T = noise.shape
    N = s0.shape[1]
    record = states.shape[1] > 0
    m = np.empty((R, T + 1))
    z = np.zeros((R, N), dtype=np.int64)
    s = s0.astype(np.float64)
    rows = np.arange(R)
    m[:, 0] = s0.sum(axis=1, dtype=np.int64) / N
    if record:
        states[:, 0, :] = s0
    for t in range(T):
        k = sites[:, t]
        h = np.matmul(J[rows, k, :][:, None, :], s[:, :, None])[:, 0, 0]
        h = h - theta[rows, k] + noise[:, t]
        s[rows, k] = np.where(h >= 0.0, 1.0, -1.0)
        up = s > 0
        z += up
        m[:, t + 1] = (2 * up.sum(axis=1) - N) / N
        if record:
            states[:, t + 1, :] = s
    return m, z, s.astype(np.int8)


def _prepare(J, theta, s0, T, record):
    J = np.ascontiguousarray(J, dtype=np.float64)
    R, N = J.shape[0], J.shape[1]
    theta = np.ascontiguousarray(np.broadcast_to(theta, (R, N)), dtype=np.float64)
    s0 = np.ascontiguousarray(np.broadcast_to(s0, (R, N)), dtype=np.int8)
    states = np.zeros((R, T + 1 if record else 0, N), dtype=np.int8)
    return J, theta, s0, states


def run_sync(J, theta, noise, s0, record=False, use_numba=None):
    """Synchronous dynamics for a batch of realizations.

    Returns ``(m, z, final, states)``; ``states`` is None unless ``record``.
    """
    noise = np.ascontiguousarray(noise, dtype=np.float64)
    J, theta, s0, states = _prepare(J, theta, s0, noise.shape[1], record)
    fn = _sync_numba if (USE_NUMBA if use_numba is None else use_numba) else _sync_numpy
    m, z, final = fn(J, theta, noise, s0, states)
    return m, z, final, (states if record else None)


def run_async(J, theta, sites, noise, s0, record=False, use_numba=None):
    """Asynchronous dynamics: one site ``sites[r, t]`` is updated per step."""
    noise = np.ascontiguousarray(noise, dtype=np.float64)
    sites = np.ascontiguousarray(sites, dtype=np.int64)
    J, theta, s0, states = _prepare(J, theta, s0, noise.shape[1], record)
    fn = _async_numba if (USE_NUMBA if use_numba is None else use_numba) else _async_numpy
    m, z, final = fn(J, theta, sites, noise, s0, states)
    return m, z, final, (states if record else None)
