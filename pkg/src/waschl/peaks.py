"""Pseudospectra on the circular azimuth grid and greedy peak extraction."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .solver import SparseSolution, pseudospectrum_values

__all__ = [
    "Pseudospectrum",
    "DoaEstimate",
    "pseudospectrum_from_solution",
    "circular_distance_deg",
    "local_maxima",
    "find_peaks",
]

METHODS = ("waschl", "chb", "l1svd")


@dataclass
class Pseudospectrum:
    """Nonnegative response over the azimuth grid.

    ``solves`` counts sparse-coding problems solved to produce it and
    ``meta`` carries method-specific bookkeeping (normalization, ...).
    """

    values: np.ndarray
    grid: np.ndarray
    method: str = "waschl"
    solves: int = 0
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.shape != np.shape(self.grid):
            raise ValueError("pseudospectrum values and grid differ in length")
        if not np.all(np.isfinite(self.values)) or np.any(self.values < 0):
            raise ValueError("pseudospectrum values must be finite and nonnegative")

    @property
    def grid_deg(self) -> np.ndarray:
        return np.degrees(self.grid)

    def argmax_deg(self) -> float:
        return float(self.grid_deg[int(np.argmax(self.values))])


@dataclass
class DoaEstimate:
    angles_deg: list
    peak_values: list
    method: str
    block_index: int = 0

    def to_dict(self) -> dict:
        return {
            "block": self.block_index,
            "method": self.method,
            "angles_deg": [float(a) for a in self.angles_deg],
            "peak_values": [float(v) for v in self.peak_values],
        }


def pseudospectrum_from_solution(sol: SparseSolution, grid: Optional[np.ndarray] = None, method: str = "waschl") -> Pseudospectrum:
    """Sum of ``|S|`` over columns, one value per grid angle."""
    values = pseudospectrum_values(sol.S)
    if grid is None:
        grid = 2.0 * np.pi * np.arange(len(values)) / len(values)
    return Pseudospectrum(values, np.asarray(grid), method, solves=1)


def circular_distance_deg(a, b):
    d = np.abs(np.asarray(a, dtype=float) - np.asarray(b, dtype=float)) % 360.0
    return np.minimum(d, 360.0 - d)


def local_maxima(values: np.ndarray) -> np.ndarray:
    """Indices of strict local maxima on a circular grid.

    A plateau counts once, at its lowest index, if both values flanking it
    are strictly smaller. Zero values are never peaks.
    """
    v = np.asarray(values, dtype=float)
    n = v.size
    if n == 0 or np.all(v == v[0]):
        return np.array([], dtype=int)
    # rotate so index 0 starts a new run (v[-1] != v[0])
    shift = int(np.flatnonzero(v != np.roll(v, 1))[0])
    r = np.roll(v, -shift)
    starts = np.flatnonzero(r != np.roll(r, 1))
    ends = np.append(starts[1:], n) - 1
    peaks = []
    for s, e in zip(starts, ends):
        val = r[s]
        if val > 0 and val > r[s - 1] and val > r[(e + 1) % n]:
            idx = (np.arange(s, e + 1) + shift) % n
            peaks.append(int(idx.min()))
    return np.array(sorted(peaks), dtype=int)


def find_peaks(spec: Pseudospectrum, count: int = 3, min_separation: float = 25.0, block_index: int = 0) -> DoaEstimate:
    """Greedy selection of the ``count`` strongest local maxima.

    Each selected angle is at least ``min_separation`` degrees (circular
    distance) away from every previously selected one. Fewer than ``count``
    angles come back when the spectrum runs out of admissible maxima.
    """
    if count < 1:
        raise ValueError("count must be at least 1")
    grid_deg = spec.grid_deg
    idx = local_maxima(spec.values)
    # stable sort keeps the lower index first among equal heights
    idx = idx[np.argsort(-spec.values[idx], kind="stable")]
    angles, vals = [], []
    for i in idx:
        if len(angles) == count:
            break
        a = float(grid_deg[i])
        if angles and np.min(circular_distance_deg(angles, a)) < min_separation:
            continue
        angles.append(a)
        vals.append(float(spec.values[i]))
    return DoaEstimate(angles, vals, spec.method, block_index)
