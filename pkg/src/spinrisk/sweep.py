"""Parameter sweeps over (sigma_j, sigma_xi) and their CSV / JSON persistence.

Cell (i, j) of a surface (i indexes sigma_j, j indexes sigma_xi) runs its
realization r from the seed child (i, j, r) of the master seed, so a single
cell can be recomputed with :func:`run_cell` without running the sweep.
"""
from __future__ import annotations

import csv
import json
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from datetime import datetime, timezone
from pathlib import Path
from typing import Optional

import numpy as np

from . import __version__
from .analytics import (
    DEFAULT_BURN_IN,
    DEFAULT_REALIZATIONS,
    DEFAULT_TAIL,
    AsymptoticEstimate,
    estimate_asymptotic,
)
from .ensemble import ModelFamily, child_seed
from .model import CouplingSpec, CouplingVariant, SupportVector

log = logging.getLogger(__name__)

SURFACE_HEADER = ["sigma_j", "sigma_xi", "m_mean", "m_even", "m_odd", "radius", "std_error",
                  "realizations", "burn_in", "tail", "status"]
ROBUSTNESS_HEADER = ["sigma_j", "alpha", "delta", "realizations"]
THRESHOLD_HEADER = ["direction", "theta", "sigma_star", "target_radius"]
TRAJECTORY_HEADER = ["t", "m", "z_total"]
COMPARE_HEADER = ["t", "m_sim", "m_annealed", "m_quenched"]


def fmt(x) -> str:
    """Nine significant digits for floats, plain text for everything else."""
    if x is None:
        return ""
    if isinstance(x, (bool, np.bool_)):
        return str(bool(x)).lower()
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, (float, np.floating)):
        return f"{float(x):.9g}"
    return str(x)


def _check_axis(name, values):
    values = [float(v) for v in values]
    if not values:
        raise ValueError(f"{name} grid is empty")
    if any(not np.isfinite(v) or v < 0 for v in values):
        raise ValueError(f"{name} grid values must be finite and non-negative")
    if any(b <= a for a, b in zip(values, values[1:])):
        raise ValueError(f"{name} grid must be strictly increasing")
    return tuple(values)


@dataclass(frozen=True)
class SweepGrid:
    sigma_j_values: tuple
    sigma_xi_values: tuple
    burn_in: int = DEFAULT_BURN_IN
    tail: int = DEFAULT_TAIL
    realizations: int = DEFAULT_REALIZATIONS
    coupling_variant: CouplingVariant = CouplingVariant.ZERO_MEAN
    supports_source: str = ""
    alpha: float = 0.0
    mu_theta: Optional[float] = None

    def __post_init__(self):
        object.__setattr__(self, "sigma_j_values", _check_axis("sigma_j", self.sigma_j_values))
        object.__setattr__(self, "sigma_xi_values", _check_axis("sigma_xi", self.sigma_xi_values))
        object.__setattr__(self, "coupling_variant", CouplingVariant(self.coupling_variant))
        if self.realizations < 1:
            raise ValueError("at least one realization is required")
        if self.tail < 2 or self.tail % 2 or self.burn_in < 0:
            raise ValueError("tail must be even and >= 2, burn_in non-negative")

    @property
    def shape(self):
        return len(self.sigma_j_values), len(self.sigma_xi_values)

    def family(self, supports, i, j) -> ModelFamily:
        return ModelFamily(supports, self.sigma_xi_values[j],
                           CouplingSpec(self.coupling_variant, self.sigma_j_values[i]),
                           alpha=self.alpha, mu_theta=self.mu_theta)

    def to_dict(self):
        d = asdict(self)
        d["sigma_j_values"] = list(self.sigma_j_values)
        d["sigma_xi_values"] = list(self.sigma_xi_values)
        d["coupling_variant"] = self.coupling_variant.value
        return d


@dataclass(frozen=True)
class SweepRecord:
    sigma_j: float
    sigma_xi: float
    estimate: Optional[AsymptoticEstimate]
    realizations: int
    burn_in: int
    tail: int
    status: str = "ok"
    error: str = ""

    def row(self):
        e = self.estimate
        vals = [None] * 5 if e is None else [e.m_mean, e.m_even, e.m_odd, e.radius, e.std_error]
        return [fmt(v) for v in [self.sigma_j, self.sigma_xi, *vals,
                                 self.realizations, self.burn_in, self.tail, self.status]]


def run_cell(grid: SweepGrid, supports: SupportVector, seed, i: int, j: int) -> SweepRecord:
    sj, sx = grid.sigma_j_values[i], grid.sigma_xi_values[j]
    try:
        est = estimate_asymptotic(grid.family(supports, i, j), grid.burn_in, grid.tail,
                                  grid.realizations, child_seed(seed, i, j))
    except Exception as exc:  # a failed cell must not abort the sweep
        log.warning("cell sigma_j=%g sigma_xi=%g failed: %s", sj, sx, exc)
        return SweepRecord(sj, sx, None, grid.realizations, grid.burn_in, grid.tail, "failed", str(exc))
    return SweepRecord(sj, sx, est, grid.realizations, grid.burn_in, grid.tail)


def sweep_surface(grid: SweepGrid, supports, seed, threads: int = 1) -> list[SweepRecord]:
    """One record per grid point, sigma_j major, sigma_xi minor."""
    if not isinstance(supports, SupportVector):
        supports = SupportVector(supports)
    cells = [(i, j) for i in range(grid.shape[0]) for j in range(grid.shape[1])]

    def work(cell):
        return run_cell(grid, supports, seed, *cell)

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            return list(pool.map(work, cells))
    return [work(c) for c in cells]


@dataclass
class RunManifest:
    master_seed: object
    n: int
    supports: list
    mu_theta: float
    sigma_theta: float
    grid: dict
    version: str = __version__
    timestamp: str = field(default_factory=lambda: datetime.now(timezone.utc).isoformat(timespec="seconds"))

    @classmethod
    def build(cls, seed, supports, grid: dict):
        sv = supports if isinstance(supports, SupportVector) else SupportVector(supports)
        return cls(seed, len(sv), [float(x) for x in sv.theta], sv.mu_theta, sv.sigma_theta, grid)

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=2, sort_keys=False, default=_json_default)


def _json_default(o):
    if isinstance(o, (np.integer,)):
        return int(o)
    if isinstance(o, (np.floating,)):
        return float(o)
    if isinstance(o, np.ndarray):
        return o.tolist()
    if hasattr(o, "value"):
        return o.value
    raise TypeError(f"cannot serialise {type(o).__name__}")


def manifest_path(path) -> Path:
    path = Path(path)
    return path.with_name(path.stem + ".manifest.json")


def write_manifest(manifest: RunManifest, path) -> Path:
    target = manifest_path(path)
    try:
        target.write_text(manifest.to_json() + "\n")
    except OSError as exc:
        raise OSError(f"cannot write manifest {target}: {exc.strerror or exc}") from exc
    return target


def write_rows(path, header, rows) -> Path:
    path = Path(path)
    try:
        with path.open("w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(header)
            w.writerows(rows)
    except OSError as exc:
        raise OSError(f"cannot write {path}: {exc.strerror or exc}") from exc
    return path


def export_csv(records, manifest: Optional[RunManifest], path) -> Path:
    """Surface CSV in grid order plus ``<stem>.manifest.json`` next to it."""
    records = list(records)
    if not records:
        raise ValueError("no records to export")
    write_rows(path, SURFACE_HEADER, [r.row() for r in records])
    if manifest is not None:
        write_manifest(manifest, path)
    return Path(path)


def export_robustness_csv(records, path) -> Path:
    return write_rows(path, ROBUSTNESS_HEADER,
                      [[fmt(r.sigma_j), fmt(r.alpha), fmt(r.delta), fmt(r.realizations)] for r in records])


def export_threshold_csv(rows, path) -> Path:
    """``rows`` are (direction, theta, sigma_star, target_radius) tuples."""
    return write_rows(path, THRESHOLD_HEADER,
                      [[getattr(d, "value", d), fmt(t), fmt(s), fmt(r)] for d, t, s, r in rows])
