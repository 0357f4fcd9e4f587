"""Surrogate-assisted search loop with acceptance sampling and reservoir look-ahead.

The live EA only ever sees simulator-evaluated candidates.  The surrogate is
used two ways: to screen the EA's infill (acceptance sampling) and to run a
disposable copy of the EA forward on predicted fitness, harvesting predicted
non-dominated candidates into a fixed-size uniform reservoir (look-ahead).
"""

from __future__ import annotations

import copy
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .evo import NSGA2, Candidate, Individual
from .metrics import (
    ObjectivePoint,
    RunHistory,
    hypervolume,
    igd_plus,
    nondominated_mask,
    pareto_front,
)
from .surrogate import SurrogateModel, nd_score


@dataclass(frozen=True)
class SearchConfig:
    budget: int = 510
    pop_size: int = 60
    offspring: int = 30
    acceptance: bool = False
    look_ahead: bool = False
    look_ahead_tolerance: float = 1e-4
    look_ahead_window: int = 5
    look_ahead_max_generations: int = 100
    acceptance_draw_cap_factor: int = 10
    k_folds: int = 5
    n_trees: int = 100
    seed: int = 0

    def __post_init__(self):
        if self.budget < self.pop_size:
            raise ValueError("budget must cover the warm start")
        if self.look_ahead_tolerance <= 0:
            raise ValueError("look_ahead_tolerance must be positive")
        if self.pop_size < 1 or self.offspring < 1:
            raise ValueError("population and offspring sizes must be positive")


class SearchAborted(RuntimeError):
    """The evaluator failed; the partially filled archive is attached."""

    def __init__(self, message, archive, candidate=None):
        super().__init__(message)
        self.archive = archive
        self.candidate = candidate


class BudgetExhausted(RuntimeError):
    pass


class GroundTruthArchive:
    """Simulator-evaluated candidates keyed by identity, with an insertion log.

    ``evaluate`` serves repeats from the cache for free and never calls the
    simulator more than ``budget`` times.
    """

    def __init__(self, budget: int):
        if budget < 1:
            raise ValueError("budget must be positive")
        self.budget = budget
        self.entries: dict[bytes, tuple[Candidate, ObjectivePoint]] = {}
        self.log: list[bytes] = []
        self.calls = 0

    def __len__(self):
        return len(self.entries)

    def __contains__(self, cand: Candidate):
        return cand.key in self.entries

    @property
    def remaining(self) -> int:
        return self.budget - self.calls

    def add(self, cand: Candidate, point) -> None:
        if cand.key in self.entries:
            raise ValueError("candidate already archived")
        if len(self.entries) >= self.budget:
            raise BudgetExhausted("archive is full")
        self.entries[cand.key] = (cand, ObjectivePoint(*map(float, point)))
        self.log.append(cand.key)

    def lookup(self, cand: Candidate) -> ObjectivePoint | None:
        hit = self.entries.get(cand.key)
        return None if hit is None else hit[1]

    def evaluate(self, candidates, evaluator) -> list[Individual]:
        """Evaluate in order, stopping once the budget is spent; returns min-form individuals."""
        out = []
        for cand in candidates:
            point = self.lookup(cand)
            if point is None:
                if self.remaining <= 0:
                    break
                try:
                    point = ObjectivePoint(*map(float, evaluator(cand.genes)))
                except Exception as exc:
                    raise SearchAborted(f"evaluator failed on {cand!r}: {exc}", self, cand) from exc
                self.calls += 1
                self.add(cand, point)
            out.append(Individual(cand, np.array([point.risk_pct, -point.return_pct])))
        return out

    def genes(self) -> np.ndarray:
        return np.array([self.entries[k][0].genes for k in self.log])

    def points(self) -> np.ndarray:
        """Risk/return rows in log order."""
        return np.array([tuple(self.entries[k][1]) for k in self.log]).reshape(-1, 2)

    def min_objectives(self) -> np.ndarray:
        P = self.points()
        return np.column_stack([P[:, 0], -P[:, 1]]) if len(P) else P

    def pareto(self) -> np.ndarray:
        return pareto_front(self.points())

    def copy(self) -> "GroundTruthArchive":
        dup = GroundTruthArchive(self.budget)
        dup.entries = dict(self.entries)
        dup.log = list(self.log)
        dup.calls = self.calls
        return dup


@dataclass
class Reservoir:
    capacity: int
    rng: np.random.Generator = field(default_factory=np.random.default_rng, repr=False)
    items: list = field(default_factory=list)
    seen: int = 0

    def __post_init__(self):
        if self.capacity < 1:
            raise ValueError("reservoir capacity must be at least 1")


def reservoir_update(res: Reservoir, item) -> Reservoir:
    """Algorithm R: keep the first ``capacity`` items, then replace a random slot w.p. r/n."""
    res.seen += 1
    if len(res.items) < res.capacity:
        res.items.append(item)
    else:
        j = int(res.rng.integers(res.seen))
        if j < res.capacity:
            res.items[j] = item
    return res


def reservoir_capacity(n_candidates: int, score: float) -> int:
    return max(1, int(round(n_candidates * score)))


def moo_space_termination(front_history, tolerance: float, window: int = 5,
                          minimize: bool = True) -> bool:
    """True once consecutive fronts in the last ``window`` entries all move less than ``tolerance``.

    Movement is the larger of the two IGD+ directions between consecutive
    fronts, after min-max normalizing over the union of the window.
    """
    if tolerance <= 0:
        raise ValueError("tolerance must be positive")
    if window < 2:
        raise ValueError("window must be at least 2")
    if len(front_history) < window:
        return False
    fronts = [np.atleast_2d(np.asarray(f, dtype=float)) for f in front_history[-window:]]
    if not minimize:
        fronts = [np.column_stack([f[:, 0], -f[:, 1]]) for f in fronts]
    union = np.vstack(fronts)
    lo, hi = union.min(axis=0), union.max(axis=0)
    span = np.where(hi > lo, hi - lo, 1.0)
    fronts = [(f - lo) / span for f in fronts]
    for a, b in zip(fronts[:-1], fronts[1:]):
        move = max(igd_plus(a, b, minimize=True), igd_plus(b, a, minimize=True))
        if move >= tolerance:
            return False
    return True


def _not_dominated_by(Fc: np.ndarray, front: np.ndarray) -> np.ndarray:
    """Per row of ``Fc``: True if no row of ``front`` dominates it."""
    if len(front) == 0:
        return np.ones(len(Fc), dtype=bool)
    le = np.all(front[:, None, :] <= Fc[None, :, :], axis=2)
    lt = np.any(front[:, None, :] < Fc[None, :, :], axis=2)
    return ~(le & lt).any(axis=0)


def look_ahead(model, archive: GroundTruthArchive, ea: NSGA2, config: SearchConfig,
               score: float, rng) -> list[Candidate]:
    """Run a throw-away EA copy on predicted fitness and reservoir-sample its predicted front."""
    m = config.offspring
    res = Reservoir(reservoir_capacity(m, score), rng)
    ghost = copy.deepcopy(ea)
    ghost.rng = np.random.default_rng(rng.integers(2**63))
    front = archive.min_objectives()
    if len(front):
        front = front[nondominated_mask(front, minimize=True)]
    streamed: set[bytes] = set()
    history = []
    for _ in range(config.look_ahead_max_generations):
        batch = ghost.infill(m)
        pred = model.predict(np.array([c.genes for c in batch]))
        ghost.advance([Individual(c, p) for c, p in zip(batch, pred)])
        merged = np.vstack([front, pred]) if len(front) else pred
        keep = nondominated_mask(merged, minimize=True)
        front = merged[keep]
        for c, kept in zip(batch, keep[len(merged) - len(pred):]):
            if kept and c.key not in streamed:
                streamed.add(c.key)
                reservoir_update(res, c)
        history.append(front)
        if moo_space_termination(history, config.look_ahead_tolerance, config.look_ahead_window):
            break
    return list(res.items)


def predicted_front_candidates(model, archive: GroundTruthArchive, ea: NSGA2,
                               m: int) -> list[Candidate]:
    """Infill ``m`` and keep those predicted non-dominated against the archive and each other."""
    batch = ea.infill(m)
    pred = model.predict(np.array([c.genes for c in batch]))
    truth = archive.min_objectives()
    merged = np.vstack([truth, pred]) if len(truth) else pred
    keep = nondominated_mask(merged, minimize=True)[len(merged) - len(pred):]
    return [c for c, k in zip(batch, keep) if k]


def acceptance_fill(ea: NSGA2, model, archive: GroundTruthArchive, slots: int, score: float,
                    config: SearchConfig, rng) -> list[Candidate]:
    """Screen infill with the surrogate; dominated predictions survive with probability 1 - score."""
    if slots <= 0:
        return []
    front = archive.min_objectives()
    accepted: list[Candidate] = []
    keys = set()
    draws = 0
    cap = config.acceptance_draw_cap_factor * slots
    while len(accepted) < slots and draws < cap:
        batch = ea.infill(slots)
        pred = model.predict(np.array([c.genes for c in batch]))
        for c, p in zip(batch, pred):
            if draws >= cap or len(accepted) >= slots:
                break
            draws += 1
            if c.key in keys or c in archive:
                continue
            ok = bool(_not_dominated_by(p[None, :], front)[0])
            if ok or rng.random() < 1.0 - score:
                accepted.append(c)
                keys.add(c.key)
                front = np.vstack([front, p]) if len(front) else p[None, :]
    if len(accepted) < slots:
        accepted.extend(ea.infill(slots - len(accepted)))
    return accepted


@dataclass(eq=False)
class SearchResult:
    pareto: np.ndarray
    archive: GroundTruthArchive
    history: RunHistory
    nd_scores: list = field(default_factory=list)


def _dedupe(cands, archive: GroundTruthArchive) -> list[Candidate]:
    seen, out = set(), []
    for c in cands:
        if c.key in seen or c in archive:
            continue
        seen.add(c.key)
        out.append(c)
    return out


def run(config: SearchConfig, ea: NSGA2, evaluator: Callable,
        callback: Callable | None = None, model_factory=None) -> SearchResult:
    """Drive ``ea`` until the evaluation budget is spent.

    With both surrogate features off this is exactly the plain EA loop.
    ``callback(generation, evaluations, hypervolume)`` fires after each
    generation that consumed budget.
    """
    if model_factory is None:
        def model_factory(seed):
            return SurrogateModel(config.n_trees, True, seed)
    use_model = config.acceptance or config.look_ahead
    rng = np.random.default_rng([config.seed, 0x5EED])
    archive = GroundTruthArchive(config.budget)
    history = RunHistory(config.seed)
    scores = []
    pretenders = ea.infill(config.pop_size)
    generation = 0
    stalled = 0
    while True:
        before = archive.calls
        evaluated = archive.evaluate(pretenders, evaluator)
        if archive.calls > before:
            stalled = 0
            hv = hypervolume(archive.points())
            history.record(generation, archive.calls, hv)
            if callback is not None:
                callback(generation, archive.calls, hv)
        else:
            stalled += 1
        if archive.remaining <= 0 or stalled > 100:
            break
        if evaluated:
            ea.advance(evaluated)
        generation += 1
        if use_model:
            X, Y = archive.genes(), archive.min_objectives()
            model = model_factory(int(rng.integers(2**31 - 1))).fit(X, Y)
            k = config.k_folds if len(X) >= 2 * config.k_folds else 1
            score = nd_score(X, Y, k, rng=rng, model_factory=model_factory)
            scores.append(score)
        if config.look_ahead:
            pretenders = _dedupe(look_ahead(model, archive, ea, config, score, rng), archive)
        elif config.acceptance:
            pretenders = _dedupe(
                predicted_front_candidates(model, archive, ea, config.offspring), archive)
        else:
            pretenders = []
        pretenders = pretenders[: config.offspring]
        slots = config.offspring - len(pretenders)
        if config.acceptance:
            pretenders += acceptance_fill(ea, model, archive, slots, score, config, rng)
        elif slots > 0:
            pretenders += ea.infill(slots)
    return SearchResult(archive.pareto(), archive, history, scores)
