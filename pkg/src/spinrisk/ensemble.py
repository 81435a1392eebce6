"""Families of quenched realizations and their batched simulation.

Seeding scheme: every realization gets its own ``numpy.random.SeedSequence``
whose ``spawn_key`` is the caller's coordinates followed by the realization
index, e.g. ``(row, col, r)`` for a sweep cell. Any single realization can be
re-run in isolation from the master seed and its coordinates.

Per-realization draw order: couplings (one n x n block of standard normals),
then the initial state if it is random, then noise ((steps, n) standard
normals for synchronous runs; ``steps`` site indices followed by ``steps``
standard normals for asynchronous ones).
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np

from . import kernels
from .model import (
    CouplingSpec,
    CouplingVariant,
    ModelInstance,
    SupportVector,
    UpdateMode,
    as_spins,
    draw_couplings,
    initial_state,
)

# Upper bound on pre-drawn noise values held in memory per batch (~32 MB).
_MAX_BATCH_VALUES = 1 << 22


def as_seed_sequence(seed) -> np.random.SeedSequence:
    if isinstance(seed, np.random.SeedSequence):
        return seed
    return np.random.SeedSequence(seed)


def child_seed(seed, *coords: int) -> np.random.SeedSequence:
    """Deterministic child of ``seed`` addressed by integer coordinates."""
    base = as_seed_sequence(seed)
    return np.random.SeedSequence(base.entropy, spawn_key=tuple(base.spawn_key) + tuple(int(c) for c in coords))


def realization_seeds(seed, count: int, *coords: int) -> list[np.random.SeedSequence]:
    return [child_seed(seed, *coords, r) for r in range(count)]


@dataclass(frozen=True)
class ModelFamily:
    """Everything needed to draw a ModelInstance except the random couplings.

    ``mu_theta`` overrides the mean support used by the scaled-antiferro
    coupling law; by default it is the mean of ``supports``.
    """
    supports: SupportVector
    sigma_xi: float = 0.0
    coupling: CouplingSpec = field(default_factory=CouplingSpec)
    alpha: float = 0.0
    mu_theta: Optional[float] = None
    zero_diagonal: bool = False
    update_mode: UpdateMode = UpdateMode.SYNCHRONOUS

    def __post_init__(self):
        if not isinstance(self.supports, SupportVector):
            object.__setattr__(self, "supports", SupportVector(self.supports))
        if not (self.sigma_xi >= 0 and np.isfinite(self.sigma_xi)):
            raise ValueError(f"sigma_xi must be a finite non-negative number, got {self.sigma_xi}")
        object.__setattr__(self, "update_mode", UpdateMode(self.update_mode))

    @classmethod
    def build(cls, theta, sigma_xi=0.0, sigma_j=0.0, variant=CouplingVariant.ZERO_MEAN, **kw):
        return cls(SupportVector(theta), sigma_xi, CouplingSpec(variant, sigma_j), **kw)

    @property
    def n(self) -> int:
        return len(self.supports)

    @property
    def coupling_mu_theta(self) -> float:
        return self.supports.mu_theta if self.mu_theta is None else self.mu_theta

    def with_widths(self, sigma_j=None, sigma_xi=None) -> "ModelFamily":
        coupling = self.coupling if sigma_j is None else CouplingSpec(self.coupling.variant, sigma_j)
        return replace(self, coupling=coupling, sigma_xi=self.sigma_xi if sigma_xi is None else sigma_xi)

    def draw_couplings(self, rng) -> np.ndarray:
        return draw_couplings(rng, self.n, self.coupling, self.coupling_mu_theta, self.zero_diagonal)

    def instance(self, rng) -> ModelInstance:
        return ModelInstance(self.draw_couplings(rng), self.supports, self.sigma_xi, self.alpha, self.update_mode)


@dataclass(frozen=True)
class EnsembleRun:
    magnetization: np.ndarray  # (R, T + 1)
    counts: np.ndarray         # (R, N), +1 outcomes over t = 1..T
    final: np.ndarray          # (R, N)
    configs: Optional[np.ndarray] = None  # (R, T + 1, N)

    @property
    def realizations(self) -> int:
        return self.magnetization.shape[0]


def _initial_for(initial, n, rng):
    if isinstance(initial, str):
        return initial_state(n, initial, rng)
    s = as_spins(initial)
    if s.size != n:
        raise ValueError(f"initial state has {s.size} entries, model has {n}")
    return s


def simulate_ensemble(family: ModelFamily, steps: int, seeds, initial="down",
                      couplings=None, record=False, use_numba=None) -> EnsembleRun:
    """Run one trajectory per seed, each with freshly drawn couplings and noise.

    ``couplings`` (R, N, N) replaces the coupling draw, which lets several
    runs share a quenched realization while keeping independent noise.
    """
    if steps < 0:
        raise ValueError(f"steps must be non-negative, got {steps}")
    seeds = list(seeds)
    R, n = len(seeds), family.n
    if R == 0:
        raise ValueError("at least one realization is required")
    if couplings is not None:
        couplings = np.asarray(couplings, dtype=np.float64)
        if couplings.shape != (R, n, n):
            raise ValueError(f"couplings must have shape {(R, n, n)}, got {couplings.shape}")
    sync = family.update_mode is UpdateMode.SYNCHRONOUS
    theta = family.supports.theta + family.alpha
    per_run = max(1, steps * (n if sync else 2))
    chunk = max(1, _MAX_BATCH_VALUES // per_run)

    m_parts, z_parts, f_parts, c_parts = [], [], [], []
    for lo in range(0, R, chunk):
        hi = min(R, lo + chunk)
        b = hi - lo
        J = np.empty((b, n, n))
        s0 = np.empty((b, n), dtype=np.int8)
        if sync:
            noise = np.empty((b, steps, n))
        else:
            sites = np.empty((b, steps), dtype=np.int64)
            noise = np.empty((b, steps))
        for k in range(b):
            rng = np.random.default_rng(seeds[lo + k])
            if couplings is None:
                J[k] = family.draw_couplings(rng)
            else:
                J[k] = couplings[lo + k]
            s0[k] = _initial_for(initial, n, rng)
            if sync:
                noise[k] = family.sigma_xi * rng.standard_normal((steps, n))
            else:
                sites[k] = rng.integers(0, n, size=steps)
                noise[k] = family.sigma_xi * rng.standard_normal(steps)
        if sync:
            m, z, final, states = kernels.run_sync(J, theta, noise, s0, record, use_numba)
        else:
            m, z, final, states = kernels.run_async(J, theta, sites, noise, s0, record, use_numba)
        m_parts.append(m)
        z_parts.append(z)
        f_parts.append(final)
        if record:
            c_parts.append(states)
    return EnsembleRun(
        magnetization=np.concatenate(m_parts),
        counts=np.concatenate(z_parts),
        final=np.concatenate(f_parts),
        configs=np.concatenate(c_parts) if record else None,
    )
