"""State, couplings and exact dynamics of the interacting loss processes.

A configuration is a vector ``s`` of N entries in {-1, +1}: -1 is a running
process, +1 a process that produced a loss at that step. One synchronous
step is::

    s_i(t+1) = sign(sum_j J_ij s_j(t) - (theta_i + alpha) + xi_i(t))

with ``sign(0) = +1``. Configurations are plain int8 numpy arrays; use
:func:`as_spins` to validate foreign input.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import kernels


class CouplingVariant(str, enum.Enum):
    ZERO_MEAN = "zero-mean"
    SCALED_ANTIFERRO = "scaled-antiferro"


class UpdateMode(str, enum.Enum):
    SYNCHRONOUS = "sync"
    ASYNCHRONOUS = "async"


def _frozen(a, dtype=np.float64):
    a = np.array(a, dtype=dtype)
    a.setflags(write=False)
    return a


def as_spins(x) -> np.ndarray:
    """Validate and convert to an int8 vector of +-1 entries."""
    a = np.asarray(x)
    if a.ndim != 1 or a.size == 0:
        raise ValueError(f"spin configuration must be a non-empty vector, got shape {a.shape}")
    if not np.all((a == 1) | (a == -1)):
        raise ValueError("spin entries must be exactly -1 or +1")
    return a.astype(np.int8)


def initial_state(n: int, kind: str = "down", rng=None) -> np.ndarray:
    """All running (``down``), all failed (``up``) or uniformly ``random``."""
    if kind == "down":
        return -np.ones(n, dtype=np.int8)
    if kind == "up":
        return np.ones(n, dtype=np.int8)
    if kind == "random":
        rng = np.random.default_rng(rng)
        return np.where(rng.random(n) < 0.5, 1, -1).astype(np.int8)
    raise ValueError(f"unknown initial configuration {kind!r} (expected down, up or random)")


@dataclass(frozen=True)
class SupportVector:
    theta: np.ndarray

    def __post_init__(self):
        theta = _frozen(self.theta)
        if theta.ndim != 1 or theta.size == 0:
            raise ValueError("supports must be a non-empty vector")
        if not np.all(np.isfinite(theta)):
            raise ValueError("supports must be finite")
        object.__setattr__(self, "theta", theta)

    def __len__(self):
        return self.theta.size

    @property
    def mu_theta(self) -> float:
        return float(np.mean(self.theta))

    @property
    def sigma_theta(self) -> float:
        """Sample standard deviation (n - 1 denominator); 0 for a single support."""
        if self.theta.size < 2:
            return 0.0
        return float(np.std(self.theta, ddof=1))


@dataclass(frozen=True)
class CouplingSpec:
    """Gaussian law of the couplings.

    ``ZERO_MEAN`` draws N(0, sigma_j); ``SCALED_ANTIFERRO`` draws
    N(-mu_theta / n, sigma_j / sqrt(n)).
    """
    variant: CouplingVariant = CouplingVariant.ZERO_MEAN
    sigma_j: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "variant", CouplingVariant(self.variant))
        if not (self.sigma_j >= 0 and np.isfinite(self.sigma_j)):
            raise ValueError(f"sigma_j must be a finite non-negative number, got {self.sigma_j}")

    def moments(self, n: int, mu_theta: float = 0.0) -> tuple[float, float]:
        if self.variant is CouplingVariant.ZERO_MEAN:
            return 0.0, float(self.sigma_j)
        return -mu_theta / n, self.sigma_j / np.sqrt(n)


@dataclass(frozen=True)
class CouplingMatrix:
    entries: np.ndarray
    spec: Optional[CouplingSpec] = None
    seed: object = None

    def __post_init__(self):
        J = _frozen(self.entries)
        if J.ndim != 2 or J.shape[0] != J.shape[1] or J.shape[0] == 0:
            raise ValueError(f"coupling matrix must be square and non-empty, got shape {J.shape}")
        if not np.all(np.isfinite(J)):
            raise ValueError("coupling matrix contains NaN or infinite entries")
        object.__setattr__(self, "entries", J)

    @property
    def n(self) -> int:
        return self.entries.shape[0]


def draw_couplings(rng, n, spec, mu_theta=0.0, zero_diagonal=False):
    # One (n, n) block of standard normals is always consumed, whatever the
    # width, so realizations share random numbers across parameter values.
    mean, std = spec.moments(n, mu_theta)
    J = mean + std * rng.standard_normal((n, n))
    if zero_diagonal:
        np.fill_diagonal(J, 0.0)
    return J


def sample_couplings(n: int, spec: CouplingSpec, mu_theta: float = 0.0, seed=None,
                     zero_diagonal: bool = False) -> CouplingMatrix:
    """Draw an n x n matrix of i.i.d. Gaussian couplings.

    Diagonal entries are drawn like the others unless ``zero_diagonal``.
    """
    if n < 1:
        raise ValueError(f"n must be at least 1, got {n}")
    J = draw_couplings(np.random.default_rng(seed), n, spec, mu_theta, zero_diagonal)
    return CouplingMatrix(J, spec=spec, seed=seed)


@dataclass(frozen=True)
class ModelInstance:
    """One quenched realization: couplings, supports, noise width and field."""
    couplings: np.ndarray
    theta: np.ndarray
    sigma_xi: float = 0.0
    alpha: float = 0.0
    update_mode: UpdateMode = UpdateMode.SYNCHRONOUS

    def __post_init__(self):
        J = self.couplings
        J = CouplingMatrix(J).entries if not isinstance(J, CouplingMatrix) else J.entries
        theta = self.theta.theta if isinstance(self.theta, SupportVector) else SupportVector(self.theta).theta
        if J.shape[0] != theta.size:
            raise ValueError(f"dimension mismatch: {J.shape[0]}x{J.shape[0]} couplings, {theta.size} supports")
        if not (self.sigma_xi >= 0 and np.isfinite(self.sigma_xi)):
            raise ValueError(f"sigma_xi must be a finite non-negative number, got {self.sigma_xi}")
        object.__setattr__(self, "couplings", J)
        object.__setattr__(self, "theta", theta)
        object.__setattr__(self, "update_mode", UpdateMode(self.update_mode))

    @property
    def n(self) -> int:
        return self.theta.size

    @property
    def effective_theta(self) -> np.ndarray:
        return self.theta + self.alpha

    @property
    def supports(self) -> SupportVector:
        return SupportVector(self.theta)

    def draw_noise(self, rng, size=None):
        size = self.n if size is None else size
        return self.sigma_xi * rng.standard_normal(size)

    def _check_state(self, state):
        s = as_spins(state)
        if s.size != self.n:
            raise ValueError(f"dimension mismatch: state has {s.size} entries, model has {self.n}")
        return s

    def _check_site(self, site):
        if not 0 <= site < self.n:
            raise IndexError(f"site {site} out of range for n={self.n}")


def _sign(x):
    return np.where(np.asarray(x) >= 0, 1, -1).astype(np.int8)


def local_field(state, model: ModelInstance) -> np.ndarray:
    """Noiseless argument of the sign: J s - (theta + alpha)."""
    s = model._check_state(state)
    return model.couplings @ s - model.effective_theta


def step_synchronous(state, model: ModelInstance, noise_draw) -> np.ndarray:
    s = model._check_state(state)
    xi = np.asarray(noise_draw, dtype=np.float64)
    if xi.shape != (model.n,):
        raise ValueError(f"noise_draw must have length {model.n}, got shape {xi.shape}")
    return _sign(model.couplings @ s - model.effective_theta + xi)


def step_synchronous_noisy(state, model: ModelInstance, rng) -> np.ndarray:
    """Convenience wrapper drawing xi ~ N(0, sigma_xi^2) from ``rng``."""
    return step_synchronous(state, model, model.draw_noise(rng))


def step_asynchronous(state, model: ModelInstance, site: int, noise_value: float = 0.0) -> np.ndarray:
    s = model._check_state(state)
    model._check_site(site)
    out = s.copy()
    h = model.couplings[site] @ s - model.effective_theta[site] + noise_value
    out[site] = 1 if h >= 0 else -1
    return out


def hamiltonian(state, model: ModelInstance) -> float:
    """H = -1/2 sum_ij J_ij s_i s_j + sum_i (theta_i + alpha) s_i."""
    s = model._check_state(state).astype(np.float64)
    return float(-0.5 * s @ model.couplings @ s + model.effective_theta @ s)


def force(state, model: ModelInstance) -> np.ndarray:
    """-dH/ds, i.e. the symmetrised field (J + J^T)/2 s - (theta + alpha)."""
    s = model._check_state(state).astype(np.float64)
    J = model.couplings
    return 0.5 * (J + J.T) @ s - model.effective_theta


def delta_h_condition(state, model: ModelInstance, site: int) -> bool:
    """True when the raw and the symmetrised (j != i) fields agree in sign at ``site``.

    Under this condition an asynchronous noiseless update of ``site`` cannot
    increase the Hamiltonian.
    """
    s = model._check_state(state).astype(np.float64)
    model._check_site(site)
    J = model.couplings
    th = model.effective_theta[site]
    raw = J[site] @ s - th
    sym = 0.5 * (J[site] + J[:, site])
    sym_field = sym @ s - sym[site] * s[site] - th
    return bool((raw >= 0) == (sym_field >= 0))


@dataclass(frozen=True)
class LossLedger:
    """Per-channel loss counts, optionally with the horizon T they cover."""
    counts: np.ndarray
    horizon: Optional[int] = None

    def __post_init__(self):
        raw = np.asarray(self.counts)
        if raw.ndim != 1 or raw.size == 0:
            raise ValueError("ledger must be a non-empty vector of counts")
        if not np.all(np.isfinite(raw)) or np.any(raw != np.round(raw)):
            raise ValueError("ledger counts must be integers")
        c = _frozen(raw, dtype=np.int64)
        if np.any(c < 0):
            raise ValueError("ledger counts must be non-negative")
        if self.horizon is not None:
            if self.horizon < 0:
                raise ValueError("horizon must be non-negative")
            if np.any(c > self.horizon):
                raise ValueError(f"ledger counts exceed the horizon T={self.horizon}")
        object.__setattr__(self, "counts", c)

    def __len__(self):
        return self.counts.size

    @property
    def total(self) -> int:
        return int(self.counts.sum())


@dataclass(frozen=True)
class Trajectory:
    magnetization: np.ndarray
    counts: LossLedger
    steps: int
    seed: object = None
    configs: Optional[np.ndarray] = field(default=None, repr=False)

    @property
    def z_total(self) -> np.ndarray:
        """Cumulative number of losses over all channels, z(t) for t = 0..T."""
        n = self.counts.counts.size
        ups = np.rint(n * (self.magnetization[1:] + 1) / 2).astype(np.int64)
        return np.concatenate([[0], np.cumsum(ups)])


def run_trajectory(model: ModelInstance, initial, steps: int, seed=None,
                   record_configs: bool = False) -> Trajectory:
    """Iterate the dynamics for ``steps`` steps from ``initial``.

    Random draw order from ``default_rng(seed)``: synchronous runs take one
    (steps, n) block of standard normals; asynchronous runs take ``steps``
    site indices, then ``steps`` standard normals.
    """
    if steps < 0:
        raise ValueError(f"steps must be non-negative, got {steps}")
    s0 = model._check_state(initial)
    rng = np.random.default_rng(seed)
    n = model.n
    if model.update_mode is UpdateMode.SYNCHRONOUS:
        noise = model.sigma_xi * rng.standard_normal((steps, n))
        m, z, _, states = kernels.run_sync(model.couplings[None], model.effective_theta[None],
                                           noise[None], s0[None], record=record_configs)
    else:
        sites = rng.integers(0, n, size=steps)
        noise = model.sigma_xi * rng.standard_normal(steps)
        m, z, _, states = kernels.run_async(model.couplings[None], model.effective_theta[None],
                                            sites[None], noise[None], s0[None], record=record_configs)
    return Trajectory(
        magnetization=_frozen(m[0]),
        counts=LossLedger(z[0], horizon=steps),
        steps=steps,
        seed=seed,
        configs=None if states is None else _frozen(states[0], dtype=np.int8),
    )


def map_s_to_eta(state) -> np.ndarray:
    """eta = (s + 1) / 2, in {0, 1}."""
    return ((as_spins(state).astype(np.int16) + 1) // 2).astype(np.int8)


def map_eta_to_s(eta) -> np.ndarray:
    eta = np.asarray(eta)
    if not np.all((eta == 0) | (eta == 1)):
        raise ValueError("eta entries must be 0 or 1")
    return (2 * eta.astype(np.int8) - 1).astype(np.int8)


def transform_model(model: ModelInstance) -> tuple[np.ndarray, np.ndarray]:
    """Couplings and supports of the 0/1 representation: (2 J, theta + alpha + sum_j J_ij)."""
    J = model.couplings
    return 2.0 * J, model.effective_theta + J.sum(axis=1)


def step_eta(eta, J_tilde, theta_tilde, noise_draw) -> np.ndarray:
    """Heaviside dynamics on eta in {0, 1}, with Theta(0) = 1."""
    eta = np.asarray(eta, dtype=np.float64)
    h = J_tilde @ eta - theta_tilde + np.asarray(noise_draw, dtype=np.float64)
    return (h >= 0).astype(np.int8)
