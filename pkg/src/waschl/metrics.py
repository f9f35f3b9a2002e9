"""Matching estimated directions to ground truth and accuracy tables."""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Dict, List, Sequence

import numpy as np

from .peaks import DoaEstimate, circular_distance_deg

__all__ = ["EvalReport", "match_deviations", "evaluate"]

MAX_TRUTH = 5


@dataclass
class EvalReport:
    per_block_deviation: List[List[float]]
    accuracy_at: Dict[float, float]
    wall_time: Dict[str, float] = field(default_factory=dict)
    meta: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "per_block_deviation_deg": [
                [None if math.isinf(d) else float(d) for d in row] for row in self.per_block_deviation
            ],
            "accuracy_at": {f"{t:g}": float(a) for t, a in sorted(self.accuracy_at.items())},
            "wall_time_s": dict(self.wall_time),
            **self.meta,
        }


def match_deviations(estimates: Sequence[float], truth: Sequence[float]) -> List[float]:
    """Per-truth absolute circular deviation under the best assignment.

    Estimates are assigned to distinct truth angles so that the summed
    deviation is minimal (brute force). Unassigned truth angles are misses
    and get ``inf``. Surplus estimates are ignored.
    """
    truth = list(truth)
    if not truth:
        raise ValueError("empty ground truth")
    if len(truth) > MAX_TRUTH:
        raise ValueError(f"at most {MAX_TRUTH} truth angles supported")
    est = list(estimates)
    n_used = min(len(est), len(truth))
    best, best_cost = None, math.inf
    for truth_slots in itertools.combinations(range(len(truth)), n_used):
        for est_pick in itertools.permutations(range(len(est)), n_used):
            devs = circular_distance_deg([est[i] for i in est_pick], [truth[j] for j in truth_slots])
            cost = float(np.sum(devs))
            if cost < best_cost:
                best_cost = cost
                best = dict(zip(truth_slots, devs))
    out = [math.inf] * len(truth)
    if best:
        for j, d in best.items():
            out[j] = float(d)
    return out


def evaluate(estimates: Sequence[DoaEstimate], truth: Sequence[float], thresholds: Sequence[float] = (2.0, 5.0, 10.0)) -> EvalReport:
    """Accuracy of per-block estimates against fixed ground-truth azimuths (degrees).

    ``accuracy_at[t]`` is the fraction of (block, source) pairs whose
    deviation is at most ``t`` degrees; misses fail every threshold.
    """
    if len(truth) == 0:
        raise ValueError("empty ground truth")
    rows = [match_deviations(e.angles_deg, truth) for e in estimates]
    flat = np.array([d for row in rows for d in row], dtype=float)
    acc = {}
    for t in thresholds:
        acc[float(t)] = float(np.mean(flat <= t)) if flat.size else 0.0
    return EvalReport(rows, acc)
