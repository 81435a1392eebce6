"""Closed-form one-step averages, asymptotic magnetization and limit cycles."""
from __future__ import annotations

import enum
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import NamedTuple, Optional

import numpy as np
from scipy.special import erf

from .ensemble import ModelFamily, child_seed, realization_seeds, simulate_ensemble
from .model import (
    CouplingSpec,
    CouplingVariant,
    ModelInstance,
    SupportVector,
    as_spins,
    initial_state,
)

DEFAULT_BURN_IN = 200
DEFAULT_TAIL = 100
DEFAULT_REALIZATIONS = 100


class DegenerateInputError(ValueError):
    pass


class ThresholdNotFound(RuntimeError):
    def __init__(self, message, bracket=None):
        super().__init__(message)
        self.bracket = bracket


def annealed_step(theta, sigma_xi: float, sigma_j: float, n: int):
    """Average of s_i(t+1) over noise and zero-mean couplings.

    erf(-theta / sqrt(2 (sigma_xi^2 + n sigma_j^2))); independent of s(t).
    Accepts scalar or array ``theta``.
    """
    k = sigma_xi**2 + n * sigma_j**2
    if not k > 0:
        raise DegenerateInputError("sigma_xi and sigma_j are both zero; the noiseless limit is sign(-theta)")
    out = erf(-np.asarray(theta, dtype=np.float64) / np.sqrt(2.0 * k))
    return float(out) if np.ndim(out) == 0 else out


class QuenchedStep(NamedTuple):
    value: float
    noiseless: bool  # True when sigma_xi = 0 and value is the deterministic sign


def quenched_expectation(state, model: ModelInstance) -> np.ndarray:
    """Noise average of s(t+1) at fixed couplings: erf(h / sqrt(2 sigma_xi^2)).

    With sigma_xi = 0 this is the deterministic sign(h).
    """
    s = model._check_state(state).astype(np.float64)
    h = model.couplings @ s - model.effective_theta
    if model.sigma_xi == 0:
        return np.where(h >= 0, 1.0, -1.0)
    return erf(h / np.sqrt(2.0 * model.sigma_xi**2))


def quenched_step(state, model: ModelInstance, site: int) -> QuenchedStep:
    model._check_site(site)
    return QuenchedStep(float(quenched_expectation(state, model)[site]), model.sigma_xi == 0)


class Scheme(str, enum.Enum):
    ANNEALED = "annealed"
    QUENCHED_MARKOV = "quenched-markov"


def iterate_approximation(family: ModelFamily, steps: int, scheme: Scheme = Scheme.ANNEALED,
                          initial="down", realizations: int = DEFAULT_REALIZATIONS, seed=None) -> np.ndarray:
    """Magnetization m(0..steps) predicted by a one-step approximation.

    ``ANNEALED`` averages every step over noise and couplings afresh. For
    coupling laws with mean mu_J the field sum_j J_ij s_j has mean
    mu_J * n * m(t), so the prediction only depends on m(t); for zero-mean
    couplings it is constant from t = 1.

    ``QUENCHED_MARKOV`` keeps each coupling realization fixed, replaces every
    spin by its noise average, then thresholds that average at 0 to get the
    next state (a heuristic Markov closure). The result is averaged over
    ``realizations`` coupling draws (realization r uses child seed (r,)).
    """
    scheme = Scheme(scheme)
    if steps < 1:
        raise ValueError(f"steps must be at least 1, got {steps}")
    n = family.n
    s0 = initial_state(n, initial, child_seed(seed, 1 << 20)) if isinstance(initial, str) else as_spins(initial)
    if s0.size != n:
        raise ValueError(f"initial state has {s0.size} entries, model has {n}")
    theta = family.supports.theta + family.alpha
    m = np.empty(steps + 1)
    m[0] = s0.mean()

    if scheme is Scheme.ANNEALED:
        mean_j, std_j = family.coupling.moments(n, family.coupling_mu_theta)
        k = family.sigma_xi**2 + n * std_j**2
        for t in range(steps):
            drift = mean_j * n * m[t]
            if k > 0:
                m[t + 1] = np.mean(erf((drift - theta) / np.sqrt(2.0 * k)))
            else:
                m[t + 1] = np.mean(np.where(drift - theta >= 0, 1.0, -1.0))
        return m

    J = np.stack([family.draw_couplings(np.random.default_rng(sd))
                  for sd in realization_seeds(seed, realizations)])
    s = np.broadcast_to(s0.astype(np.float64), (realizations, n)).copy()
    for t in range(steps):
        h = np.matmul(J, s[:, :, None])[:, :, 0] - theta
        q = erf(h / np.sqrt(2.0 * family.sigma_xi**2)) if family.sigma_xi > 0 else np.where(h >= 0, 1.0, -1.0)
        m[t + 1] = q.mean()
        s = np.where(q >= 0, 1.0, -1.0)
    return m


@dataclass(frozen=True)
class AsymptoticEstimate:
    m_mean: float
    m_even: float
    m_odd: float
    radius: float
    burn_in: int
    tail: int
    realizations: int
    std_error: float


def _check_window(burn_in, tail):
    if burn_in < 0:
        raise ValueError(f"burn_in must be non-negative, got {burn_in}")
    if tail < 2 or tail % 2:
        raise ValueError(f"tail must be an even number >= 2, got {tail}")


def asymptotic_from_magnetization(m, burn_in: int, tail: int) -> AsymptoticEstimate:
    """Even/odd tail averages over t = burn_in+1 .. burn_in+tail of m (R, T+1)."""
    _check_window(burn_in, tail)
    m = np.atleast_2d(np.asarray(m, dtype=np.float64))
    R = m.shape[0]
    t = np.arange(burn_in + 1, burn_in + tail + 1)
    if t[-1] >= m.shape[1]:
        raise ValueError(f"need {t[-1] + 1} magnetization samples, got {m.shape[1]}")
    # Exactly rounded sums keep a constant leaf (e.g. -3/5) exact.
    even, odd = m[:, t[t % 2 == 0]], m[:, t[t % 2 == 1]]
    m_even = math.fsum(even.ravel()) / even.size
    m_odd = math.fsum(odd.ravel()) / odd.size
    per_run = m[:, t].mean(axis=1)
    se = float(per_run.std(ddof=1) / np.sqrt(R)) if R > 1 else float("nan")
    return AsymptoticEstimate(
        m_mean=0.5 * (m_even + m_odd),
        m_even=m_even,
        m_odd=m_odd,
        radius=abs(m_even - m_odd),
        burn_in=burn_in,
        tail=tail,
        realizations=R,
        std_error=se,
    )


def estimate_asymptotic(family: ModelFamily, burn_in: int = DEFAULT_BURN_IN, tail: int = DEFAULT_TAIL,
                        realizations: int = DEFAULT_REALIZATIONS, seed=None, initial="down") -> AsymptoticEstimate:
    """Asymptotic magnetization over independent (couplings, noise) realizations.

    ``m_even`` and ``m_odd`` are the leaves of a possible period-2 cycle; their
    distance is the cycle radius. ``std_error`` is the standard error of
    ``m_mean`` across realizations.
    """
    _check_window(burn_in, tail)
    if realizations < 1:
        raise ValueError("at least one realization is required")
    run = simulate_ensemble(family, burn_in + tail, realization_seeds(seed, realizations), initial=initial)
    return asymptotic_from_magnetization(run.magnetization, burn_in, tail)


@dataclass(frozen=True)
class InitialConditionResult:
    traces: dict
    tail_means: dict
    std_errors: dict
    agreement_time: Optional[int]
    band: float


def _tail_se(m_tail):
    R, L = m_tail.shape
    if R > 1:
        return float(m_tail.mean(axis=1).std(ddof=1) / np.sqrt(R))
    batches = m_tail[0, : L - L % 10].reshape(10, -1).mean(axis=1)
    return float(batches.std(ddof=1) / np.sqrt(10))


def initial_condition_independence(family: ModelFamily, seed=None, steps: int = 100, tail: int = 50,
                                   realizations: int = 1, band: float = 0.1,
                                   initials=("up", "down", "random")) -> InitialConditionResult:
    """Magnetization traces from several initial states under shared couplings.

    The k-th initial state draws its noise (and a random start) from child
    seeds (1, k, r); couplings come from (0, r) and are shared. Traces are
    averaged over realizations; ``agreement_time`` is the first t at which all
    traces lie within ``band`` of each other.
    """
    if tail > steps or tail < 10:
        raise ValueError("tail must be between 10 and steps")
    J = np.stack([family.draw_couplings(np.random.default_rng(child_seed(seed, 0, r)))
                  for r in range(realizations)])
    traces, tail_means, ses = {}, {}, {}
    for k, name in enumerate(initials):
        run = simulate_ensemble(family, steps, realization_seeds(seed, realizations, 1, k),
                                initial=name, couplings=J)
        m = run.magnetization
        traces[name] = m.mean(axis=0)
        tail_means[name] = float(m[:, -tail:].mean())
        ses[name] = _tail_se(m[:, -tail:])
    stacked = np.stack(list(traces.values()))
    spread = stacked.max(axis=0) - stacked.min(axis=0)
    hits = np.nonzero(spread <= band)[0]
    return InitialConditionResult(traces, tail_means, ses, int(hits[0]) if hits.size else None, band)


@dataclass(frozen=True)
class Orbit:
    transient: int  # steps before the first state that recurs
    period: int
    cycle: np.ndarray  # (period, N) states of the cycle, starting at t = transient


def noiseless_orbit(model: ModelInstance, initial, max_steps: int = 10_000) -> Orbit:
    """Iterate the noiseless synchronous map until a configuration repeats."""
    s = model._check_state(initial)
    J, theta = model.couplings, model.effective_theta
    seen = {s.tobytes(): 0}
    history = [s]
    for t in range(1, max_steps + 1):
        s = np.where(J @ s - theta >= 0, 1, -1).astype(np.int8)
        key = s.tobytes()
        if key in seen:
            start = seen[key]
            return Orbit(start, t - start, np.stack(history[start:]))
        seen[key] = t
        history.append(s)
    raise RuntimeError(f"no repeated configuration within {max_steps} steps")


class Direction(str, enum.Enum):
    DIAGONAL = "diagonal"   # sigma_j = sigma_xi = sigma
    NOISE_AXIS = "noise"    # sigma_j = 0, sigma_xi = sigma
    COUPLING_AXIS = "coupling"  # sigma_xi = 0, sigma_j = sigma

    def widths(self, sigma):
        if self is Direction.DIAGONAL:
            return sigma, sigma
        if self is Direction.NOISE_AXIS:
            return 0.0, sigma
        return sigma, 0.0


def uniform_family(theta_common: float, n: int, direction: Direction, sigma: float) -> ModelFamily:
    sigma_j, sigma_xi = Direction(direction).widths(sigma)
    return ModelFamily(SupportVector(np.full(n, float(theta_common))), sigma_xi,
                       CouplingSpec(CouplingVariant.SCALED_ANTIFERRO, sigma_j))


def radius_along(theta_common, direction, sigma, n=10, burn_in=DEFAULT_BURN_IN, tail=DEFAULT_TAIL,
                 realizations=DEFAULT_REALIZATIONS, seed=0) -> float:
    family = uniform_family(theta_common, n, direction, sigma)
    return estimate_asymptotic(family, burn_in, tail, realizations, seed).radius


def cycle_radius_threshold(theta_common: float, direction: Direction = Direction.DIAGONAL,
                           target_radius: float = 0.25, tolerance: float = 1e-2, n: int = 10,
                           burn_in: int = DEFAULT_BURN_IN, tail: int = DEFAULT_TAIL,
                           realizations: int = DEFAULT_REALIZATIONS, seed=0,
                           sigma_max: Optional[float] = None) -> float:
    """Width sigma* at which the period-2 radius falls to ``target_radius``.

    Uniform supports and scaled-antiferro couplings. The radius is bracketed
    between a small positive width and a width doubled from |theta| until the
    radius drops below target, then bisected down to ``tolerance``.
    Every probe reuses the same realization seeds, so probes differ only
    through sigma.
    """
    if target_radius <= 0:
        raise ValueError(f"target_radius must be positive, got {target_radius}")
    if tolerance <= 0:
        raise ValueError("tolerance must be positive")
    direction = Direction(direction)

    def radius(sigma):
        return radius_along(theta_common, direction, sigma, n, burn_in, tail, realizations, seed)

    # sigma = 0 itself is a tie of the sign function for uniform supports; start just above it.
    lo = 1e-3 * max(abs(theta_common), tolerance)
    r_lo = radius(lo)
    if not r_lo > target_radius:
        raise ThresholdNotFound(f"radius at sigma={lo:g} is {r_lo:g}, not above target {target_radius:g}",
                                bracket=(lo, None, r_lo, None))
    sigma_max = 100.0 * max(abs(theta_common), 1.0) if sigma_max is None else sigma_max
    hi = min(max(abs(theta_common), tolerance), sigma_max)
    r_hi = radius(hi)
    while r_hi > target_radius:
        if hi >= sigma_max:
            raise ThresholdNotFound(f"radius still {r_hi:g} at sigma_max={sigma_max:g}",
                                    bracket=(lo, hi, r_lo, r_hi))
        lo, r_lo = hi, r_hi
        hi = min(2.0 * hi, sigma_max)
        r_hi = radius(hi)
    while hi - lo > tolerance:
        mid = 0.5 * (lo + hi)
        r_mid = radius(mid)
        if r_mid > target_radius:
            lo, r_lo = mid, r_mid
        else:
            hi, r_hi = mid, r_mid
    return 0.5 * (lo + hi)


@dataclass(frozen=True)
class LinearFitResult:
    slope: float
    intercept: float
    rho_squared: float
    points: tuple


def linear_fit(points) -> LinearFitResult:
    """Ordinary least squares y = a x + b.

    ``rho_squared`` is the squared correlation coefficient; a fit with zero
    residuals reports 1 even when y is constant.
    """
    pts = np.asarray(points, dtype=np.float64)
    if pts.ndim != 2 or pts.shape[1] != 2 or pts.shape[0] < 2:
        raise ValueError("need at least two (x, y) points")
    x, y = pts[:, 0], pts[:, 1]
    dx = x - x.mean()
    sxx = dx @ dx
    if sxx == 0:
        raise ValueError("degenerate fit: all x values are equal")
    a = float(dx @ (y - y.mean()) / sxx)
    b = float(y.mean() - a * x.mean())
    ss_res = float(np.sum((y - (a * x + b)) ** 2))
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    if ss_tot == 0 or ss_res <= 1e-15 * max(ss_tot, 1e-300):
        rho2 = 1.0
    else:
        rho2 = min(1.0, max(0.0, 1.0 - ss_res / ss_tot))
    return LinearFitResult(a, b, rho2, tuple(map(tuple, pts)))


def threshold_law(thetas, direction=Direction.DIAGONAL, target_radius=0.25, threads=1, **kw):
    """Radius thresholds for several uniform supports and their linear fit."""
    thetas = [float(t) for t in thetas]

    def one(theta):
        return cycle_radius_threshold(theta, direction, target_radius, **kw)

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            sigmas = list(pool.map(one, thetas))
    else:
        sigmas = [one(t) for t in thetas]
    return sigmas, linear_fit(list(zip(thetas, sigmas)))
