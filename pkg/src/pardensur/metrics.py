"""Dominance machinery and solution-set indicators.

Objective points are handled as ``(risk_pct, return_pct)`` pairs unless a
function is told the input is already in minimization form.  Every dominance
computation runs on the minimization pair ``(risk, -return)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import NamedTuple, Sequence

import numpy as np

DEFAULT_HV_REF = (40.0, 0.0)


class ObjectivePoint(NamedTuple):
    risk_pct: float
    return_pct: float


def as_points(points) -> np.ndarray:
    """Coerce risk/return pairs to a finite ``(n, 2)`` float array."""
    arr = np.asarray(points, dtype=float)
    if arr.ndim == 1:
        arr = arr.reshape(1, -1)
    if arr.size == 0:
        return arr.reshape(0, 2)
    if not np.all(np.isfinite(arr)):
        raise ValueError("objective points must be finite")
    return arr


def to_min_form(points) -> np.ndarray:
    """Map ``(risk, return)`` rows to the minimization pair ``(risk, -return)``."""
    arr = as_points(points).copy()
    arr[:, 1] = -arr[:, 1]
    return arr


def _min_form(points, minimize: bool) -> np.ndarray:
    if minimize:
        arr = np.atleast_2d(np.asarray(points, dtype=float))
        if not np.all(np.isfinite(arr)):
            raise ValueError("objective vectors must be finite")
        return arr
    return to_min_form(points)


def dominates(a, b, minimize: bool = False) -> bool:
    """True iff ``a`` is no worse than ``b`` everywhere and better somewhere."""
    fa = _min_form(a, minimize)[0]
    fb = _min_form(b, minimize)[0]
    return bool(np.all(fa <= fb) and np.any(fa < fb))


def domination_matrix(F: np.ndarray) -> np.ndarray:
    """``D[i, j]`` is True when row ``i`` dominates row ``j`` (minimization)."""
    le = np.all(F[:, None, :] <= F[None, :, :], axis=2)
    lt = np.any(F[:, None, :] < F[None, :, :], axis=2)
    return le & lt


def nd_rank(F: np.ndarray) -> np.ndarray:
    """Non-dominating rank of every row of a minimization matrix."""
    F = np.asarray(F, dtype=float)
    n = len(F)
    if n == 0:
        raise ValueError("cannot rank an empty set")
    dom = domination_matrix(F)
    counts = dom.sum(axis=0)
    ranks = np.full(n, -1, dtype=int)
    current = np.flatnonzero(counts == 0)
    level = 0
    while current.size:
        ranks[current] = level
        counts = counts - dom[current].sum(axis=0)
        counts[ranks >= 0] = -1
        current = np.flatnonzero(counts == 0)
        level += 1
    return ranks


def nondominated_sort(points, minimize: bool = False) -> np.ndarray:
    """Rank 0 is the non-dominated set; rank k is non-dominated once ranks < k are removed."""
    return nd_rank(_min_form(points, minimize))


def nondominated_mask(points, minimize: bool = False) -> np.ndarray:
    F = _min_form(points, minimize)
    if len(F) == 0:
        return np.zeros(0, dtype=bool)
    return ~domination_matrix(F).any(axis=0)


def pareto_front(points, minimize: bool = False) -> np.ndarray:
    """Non-dominated subset with exact duplicates removed, sorted by the first objective."""
    arr = as_points(points) if not minimize else np.atleast_2d(np.asarray(points, float))
    if len(arr) == 0:
        return arr
    front = arr[nondominated_mask(arr, minimize)]
    front = np.unique(front, axis=0)
    return front[np.lexsort(front.T[::-1])]


def crowding_distance(front, minimize: bool = False) -> np.ndarray:
    """Normalized neighbour-gap crowding; extremes in any objective get +inf."""
    F = _min_form(front, minimize) if len(front) else np.zeros((0, 2))
    n, m = F.shape
    if n <= 2:
        return np.full(n, np.inf)
    dist = np.zeros(n)
    for j in range(m):
        order = np.argsort(F[:, j], kind="stable")
        col = F[order, j]
        span = col[-1] - col[0]
        dist[order[0]] = np.inf
        dist[order[-1]] = np.inf
        if span > 0:
            dist[order[1:-1]] += (col[2:] - col[:-2]) / span
    return dist


def hypervolume(points, ref=DEFAULT_HV_REF) -> float:
    """Exact 2-D hypervolume of risk/return points bounded by ``ref``."""
    ref_min = to_min_form([ref])[0]
    F = to_min_form(points) if len(points) else np.zeros((0, 2))
    F = F[np.all(F < ref_min, axis=1)]
    if len(F) == 0:
        return 0.0
    F = F[nondominated_mask(F, minimize=True)]
    F = F[np.lexsort((F[:, 1], F[:, 0]))]
    widths = np.diff(np.append(F[:, 0], ref_min[0]))
    heights = ref_min[1] - F[:, 1]
    return float(np.sum(widths * heights))


def _plus_distances(A: np.ndarray, Z: np.ndarray) -> np.ndarray:
    """``d+(a, z)`` for every pair; rows index ``A``, columns index ``Z``."""
    diff = np.maximum(A[:, None, :] - Z[None, :, :], 0.0)
    return np.sqrt(np.sum(diff * diff, axis=2))


def gd_plus(A, Z, minimize: bool = False) -> float:
    """Mean over ``A`` of the smallest d+ toward the target frontier ``Z``."""
    FA, FZ = _min_form(A, minimize), _min_form(Z, minimize)
    if len(FA) == 0 or len(FZ) == 0:
        raise ValueError("GD+ needs two nonempty sets")
    return float(np.mean(_plus_distances(FA, FZ).min(axis=1)))


def igd_plus(A, Z, minimize: bool = False) -> float:
    """Mean over the target ``Z`` of the smallest d+ from ``A``."""
    FA, FZ = _min_form(A, minimize), _min_form(Z, minimize)
    if len(FA) == 0 or len(FZ) == 0:
        raise ValueError("IGD+ needs two nonempty sets")
    return float(np.mean(_plus_distances(FA, FZ).min(axis=0)))


@dataclass
class RunHistory:
    """Per-generation (cumulative evaluations, hypervolume) trace of one run."""

    seed: int
    generations: list[int] = field(default_factory=list)
    evaluations: list[int] = field(default_factory=list)
    hypervolume: list[float] = field(default_factory=list)

    def record(self, generation: int, evaluations: int, hv: float) -> None:
        if self.evaluations and evaluations <= self.evaluations[-1]:
            raise ValueError("evaluation counts must strictly increase")
        self.generations.append(int(generation))
        self.evaluations.append(int(evaluations))
        self.hypervolume.append(float(hv))

    def __len__(self) -> int:
        return len(self.evaluations)

    @property
    def best_hv(self) -> float:
        return max(self.hypervolume) if self.hypervolume else 0.0

    def first_crossing(self, target: float):
        """``(generation, evaluations)`` of the first record with HV >= target, else None."""
        for g, e, hv in zip(self.generations, self.evaluations, self.hypervolume):
            if hv >= target:
                return g, e
        return None


class QualityIndicators(NamedTuple):
    sr: float
    aesr: float | None
    agsr: float | None


def quality_indicators(
    histories: Sequence[RunHistory], ref_hv: float, threshold: float
) -> QualityIndicators:
    """Success rate (percent) and mean evaluations/generations to success.

    Runs that never reach ``threshold * ref_hv`` count against SR and are
    ignored by AESR/AGSR, which are None when no run succeeds.
    """
    if not 0.0 < threshold <= 1.0:
        raise ValueError("threshold must lie in (0, 1]")
    if ref_hv <= 0:
        raise ValueError("reference hypervolume must be positive")
    if not histories:
        raise ValueError("no run histories given")
    target = threshold * ref_hv
    hits = []
    for h in histories:
        if len(h) == 0:
            raise ValueError("empty run history")
        hit = h.first_crossing(target)
        if hit is not None:
            hits.append(hit)
    sr = 100.0 * len(hits) / len(histories)
    if not hits:
        return QualityIndicators(sr, None, None)
    agsr = float(np.mean([g for g, _ in hits]))
    aesr = float(np.mean([e for _, e in hits]))
    return QualityIndicators(sr, aesr, agsr)


def evaluations_to_success(history: RunHistory, target: float) -> float:
    """Evaluations at the first crossing of ``target``; inf if never reached."""
    hit = history.first_crossing(target)
    return math.inf if hit is None else float(hit[1])
