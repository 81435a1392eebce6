"""From loss ledgers to supports, and the distance between simulated and target ledgers."""
from __future__ import annotations

import csv
import enum
import io
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.special import erfinv

from .ensemble import ModelFamily, realization_seeds, simulate_ensemble
from .model import CouplingSpec, CouplingVariant, LossLedger, SupportVector

__all__ = [
    "CalibrationResult", "Convention", "LedgerFormatError", "LossLedger", "RobustnessRecord",
    "SaturationError", "calibrate", "distance_delta", "expected_counts", "probabilities_from_ledger",
    "read_ledger", "read_supports", "robustness_sweep", "supports_from_probabilities", "write_supports",
]

HALF_QUANTILE_SIGMA = 0.5


class Convention(str, enum.Enum):
    """How the noise width enters the support formula.

    ``SELF_CONSISTENT`` uses the caller's sigma_xi, so that P(xi > theta_i) = p_i
    holds exactly. ``HALF_QUANTILE`` always uses sigma_xi = 0.5, giving
    theta_i = Phi^-1(1 - p_i) / 2, which is how the reference Tables I and II
    were tabulated.
    """
    SELF_CONSISTENT = "self-consistent"
    HALF_QUANTILE = "half-quantile"


class SaturationError(ValueError):
    """A channel with probability 0 or 1 would need an infinite support."""

    def __init__(self, channel, p):
        self.channel = channel
        self.p = p
        super().__init__(f"channel {channel} is saturated (p={p:g}); its support would be infinite")


class LedgerFormatError(ValueError):
    pass


@dataclass(frozen=True)
class CalibrationResult:
    probabilities: np.ndarray
    supports: SupportVector
    sigma_xi: float
    convention: Convention


def probabilities_from_ledger(ledger: LossLedger) -> np.ndarray:
    """Ledger shares p_i = z_i / sum_j z_j."""
    if not isinstance(ledger, LossLedger):
        ledger = LossLedger(ledger)
    total = ledger.total
    if total <= 0:
        raise ValueError("all-zero ledger: probabilities are undefined")
    return ledger.counts / total


def supports_from_probabilities(p, sigma_xi: float = 1.0,
                                convention: Convention = Convention.SELF_CONSISTENT) -> SupportVector:
    """theta_i = -sqrt(2 sigma^2) erfinv(2 p_i - 1)."""
    convention = Convention(convention)
    p = np.asarray(p, dtype=np.float64)
    if p.ndim != 1 or p.size == 0:
        raise ValueError("probabilities must be a non-empty vector")
    for i, pi in enumerate(p):
        if not 0.0 < pi < 1.0:
            if pi in (0.0, 1.0):
                raise SaturationError(i, pi)
            raise ValueError(f"probability of channel {i} is outside [0, 1]: {pi}")
    if convention is Convention.HALF_QUANTILE:
        sigma = HALF_QUANTILE_SIGMA
    else:
        if not sigma_xi > 0:
            raise ValueError(f"sigma_xi must be positive for calibration, got {sigma_xi}")
        sigma = sigma_xi
    return SupportVector(-np.sqrt(2.0 * sigma**2) * erfinv(2.0 * p - 1.0))


def calibrate(ledger: LossLedger, sigma_xi: float = 1.0,
              convention: Convention = Convention.SELF_CONSISTENT) -> CalibrationResult:
    p = probabilities_from_ledger(ledger)
    convention = Convention(convention)
    supports = supports_from_probabilities(p, sigma_xi, convention)
    used = HALF_QUANTILE_SIGMA if convention is Convention.HALF_QUANTILE else sigma_xi
    return CalibrationResult(p, supports, used, convention)


def expected_counts(p, steps: int) -> np.ndarray:
    """Mean counts T p_i of decoupled processes."""
    if steps < 0:
        raise ValueError(f"steps must be non-negative, got {steps}")
    return steps * np.asarray(p, dtype=np.float64)


def distance_delta(mean_counts, reference, steps: int) -> float:
    """||mean_counts - z*|| / (T sqrt(N)), which lies in [0, 1]."""
    ref = reference.counts if isinstance(reference, LossLedger) else np.asarray(reference)
    mean_counts = np.asarray(mean_counts, dtype=np.float64)
    if steps <= 0:
        raise ValueError("distance is undefined for T = 0")
    if mean_counts.shape != ref.shape:
        raise ValueError(f"dimension mismatch: {mean_counts.shape} vs {ref.shape}")
    return float(np.linalg.norm(mean_counts - ref) / (steps * np.sqrt(ref.size)))


def _delta_std_error(counts, ref, steps):
    # Delta method on the norm; falls back to the Lipschitz bound at the origin.
    R, n = counts.shape
    if R < 2:
        return float("nan")
    diff = counts.mean(axis=0) - ref
    cov = np.atleast_2d(np.cov(counts, rowvar=False))
    norm = np.linalg.norm(diff)
    scale = steps * np.sqrt(n)
    if norm == 0:
        return float(np.sqrt(np.trace(cov) / R) / scale)
    g = diff / norm
    return float(np.sqrt(max(g @ cov @ g, 0.0) / R) / scale)


@dataclass(frozen=True)
class RobustnessRecord:
    sigma_j: float
    alpha: float
    delta: float
    std_error: float
    realizations: int


def _robustness_point(family, reference, steps, realizations, seed, index):
    run = simulate_ensemble(family, steps, realization_seeds(seed, realizations, index))
    ref = reference.counts.astype(np.float64)
    mean = run.counts.mean(axis=0)
    return RobustnessRecord(
        sigma_j=family.coupling.sigma_j,
        alpha=family.alpha,
        delta=distance_delta(mean, ref, steps),
        std_error=_delta_std_error(run.counts.astype(np.float64), ref, steps),
        realizations=realizations,
    )


def robustness_sweep(reference: LossLedger, sigma_xi: float, alpha: float, sigma_j_grid,
                     realizations: int = 100, seed=None, threads: int = 1) -> list[RobustnessRecord]:
    """Distance delta vs coupling width for supports calibrated on ``reference``.

    Supports are calibrated self-consistently at ``sigma_xi`` and shifted by
    ``alpha``; each grid point runs T = sum(z*) steps from the all-running
    state with zero-mean couplings, averages the counts over all realizations,
    then takes the distance. Realization r of grid point g uses the seed
    child (g, r) of ``seed``.
    """
    if not isinstance(reference, LossLedger):
        reference = LossLedger(reference)
    grid = [float(s) for s in sigma_j_grid]
    if not grid:
        raise ValueError("sigma_j grid is empty")
    if realizations < 1:
        raise ValueError("at least one realization is required")
    supports = calibrate(reference, sigma_xi, Convention.SELF_CONSISTENT).supports
    steps = reference.total
    families = [ModelFamily(supports, sigma_xi, CouplingSpec(CouplingVariant.ZERO_MEAN, s), alpha=alpha)
                for s in grid]

    def work(g):
        return _robustness_point(families[g], reference, steps, realizations, seed, g)

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            return list(pool.map(work, range(len(grid))))
    return [work(g) for g in range(len(grid))]


def _is_number(token):
    try:
        float(token)
    except ValueError:
        return False
    return True


def _parse_int(token, lineno):
    try:
        value = float(token)
    except ValueError:
        raise LedgerFormatError(f"line {lineno}: not a number: {token!r}") from None
    if value != int(value) or value < 0:
        raise LedgerFormatError(f"line {lineno}: counts must be non-negative integers, got {token!r}")
    return int(value)


def parse_ledger(text: str) -> LossLedger:
    """Parse a ledger: one count per line, or ``channel,count`` CSV rows.

    Blank lines and ``#`` comments are skipped; a non-numeric first CSV row is
    treated as a header.
    """
    lines = [(i + 1, ln.split("#", 1)[0].strip()) for i, ln in enumerate(text.splitlines())]
    lines = [(i, ln) for i, ln in lines if ln]
    if not lines:
        raise LedgerFormatError("empty ledger")
    counts = []
    if any("," in ln for _, ln in lines):
        rows = list(csv.reader(io.StringIO("\n".join(ln for _, ln in lines))))
        numbers = [i for i, _ in lines]
        for k, (lineno, row) in enumerate(zip(numbers, rows)):
            if len(row) != 2:
                raise LedgerFormatError(f"line {lineno}: expected 'channel,count', got {len(row)} fields")
            if k == 0 and not _is_number(row[1]):
                continue
            counts.append(_parse_int(row[1].strip(), lineno))
        if not counts:
            raise LedgerFormatError("empty ledger")
    else:
        counts = [_parse_int(ln, i) for i, ln in lines]
    return LossLedger(counts)


def read_ledger(path) -> LossLedger:
    return parse_ledger(Path(path).read_text())


def write_supports(path, supports: SupportVector) -> None:
    """One support per line, 9 significant digits."""
    theta = supports.theta if isinstance(supports, SupportVector) else np.asarray(supports)
    Path(path).write_text("".join(f"{x:.9g}\n" for x in theta))


def read_supports(path) -> SupportVector:
    values = []
    for lineno, ln in enumerate(Path(path).read_text().splitlines(), 1):
        ln = ln.split("#", 1)[0].strip()
        if not ln:
            continue
        try:
            values.append(float(ln))
        except ValueError:
            raise LedgerFormatError(f"line {lineno}: not a number: {ln!r}") from None
    if not values:
        raise LedgerFormatError("empty supports file")
    return SupportVector(values)
