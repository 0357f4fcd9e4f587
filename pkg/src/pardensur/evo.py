"""Ask/tell NSGA-II and R-NSGA-II over box-bounded genes in [0, 1].

The engines never evaluate anything themselves: ``infill`` proposes
candidates and ``advance`` consumes evaluated individuals.  Objectives are
minimization vectors throughout this module.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from .metrics import crowding_distance, nd_rank

QUANTUM = 1e-12


@dataclass(frozen=True, eq=False)
class Candidate:
    genes: np.ndarray

    def __post_init__(self):
        genes = np.array(self.genes, dtype=float).ravel()
        if np.any(genes < 0.0) or np.any(genes > 1.0) or not np.all(np.isfinite(genes)):
            raise ValueError("genes must lie in [0, 1]")
        genes.setflags(write=False)
        object.__setattr__(self, "genes", genes)

    @cached_property
    def key(self) -> bytes:
        return np.round(self.genes / QUANTUM).astype(np.int64).tobytes()

    @property
    def identity(self) -> str:
        """Stable hex digest of the quantized genes."""
        return hashlib.sha1(self.key).hexdigest()

    def __eq__(self, other):
        return isinstance(other, Candidate) and self.key == other.key

    def __hash__(self):
        return hash(self.key)

    def __repr__(self):
        return f"Candidate({np.array2string(self.genes, precision=4)})"


@dataclass
class Individual:
    candidate: Candidate
    objectives: np.ndarray | None = None
    rank: int | None = None
    crowding: float | None = None

    @property
    def key(self) -> bytes:
        return self.candidate.key


def _check_rate(rate: float, name: str) -> None:
    if not 0.0 <= rate <= 1.0:
        raise ValueError(f"{name} must lie in [0, 1], got {rate}")


def lhs_init(m: int, d: int, rng: np.random.Generator) -> list[Candidate]:
    """Latin hypercube: one sample per stratum of [0, 1] in every dimension."""
    if m < 1 or d < 1:
        raise ValueError("need m >= 1 and d >= 1")
    u = rng.random((m, d))
    strata = np.column_stack([rng.permutation(m) for _ in range(d)])
    X = (strata + u) / m
    return [Candidate(x) for x in X]


def uniform_crossover(p1: Candidate, p2: Candidate, crossover_rate: float, rng):
    _check_rate(crossover_rate, "crossover_rate")
    if p1.genes.shape != p2.genes.shape:
        raise ValueError("parents differ in dimension")
    a, b = p1.genes.copy(), p2.genes.copy()
    if rng.random() < crossover_rate:
        swap = rng.random(a.size) < 0.5
        a[swap], b[swap] = p2.genes[swap], p1.genes[swap]
    return Candidate(a), Candidate(b)


def polynomial_mutation(c: Candidate, mutation_rate: float, eta: float, rng) -> Candidate:
    """Bounded polynomial mutation on [0, 1], applied gene-wise with ``mutation_rate``."""
    _check_rate(mutation_rate, "mutation_rate")
    if eta <= 0:
        raise ValueError("eta must be positive")
    x = c.genes.copy()
    mask = rng.random(x.size) < mutation_rate
    u = rng.random(x.size)
    if not mask.any():
        return Candidate(x)
    pw = 1.0 / (eta + 1.0)
    xm, um = x[mask], u[mask]
    lower = um < 0.5
    dq = np.empty_like(xm)
    xy = 1.0 - xm[lower]
    val = 2.0 * um[lower] + (1.0 - 2.0 * um[lower]) * xy ** (eta + 1.0)
    dq[lower] = val**pw - 1.0
    xy = xm[~lower]
    val = 2.0 * (1.0 - um[~lower]) + 2.0 * (um[~lower] - 0.5) * (1.0 - xy) ** (eta + 1.0)
    dq[~lower] = 1.0 - val**pw
    x[mask] = np.clip(xm + dq, 0.0, 1.0)
    return Candidate(x)


def tournament_select(pool: list[Individual], rng) -> Individual:
    """Binary tournament on (rank, then larger crowding, then a coin flip)."""
    if not pool:
        raise ValueError("empty selection pool")
    if any(p.rank is None or p.crowding is None for p in pool):
        raise ValueError("tournament needs ranked individuals")
    if len(pool) == 1:
        return pool[0]
    i, j = rng.integers(len(pool), size=2)
    a, b = pool[i], pool[j]
    if a.rank != b.rank:
        return a if a.rank < b.rank else b
    if a.crowding != b.crowding:
        return a if a.crowding > b.crowding else b
    return a if rng.random() < 0.5 else b


def _objective_matrix(inds: list[Individual]) -> np.ndarray:
    return np.array([ind.objectives for ind in inds], dtype=float)


def nsga2_survival(merged: list[Individual], n_survive: int) -> list[Individual]:
    """Front-wise survival, splitting the last front by descending crowding."""
    if not merged:
        return []
    F = _objective_matrix(merged)
    ranks = nd_rank(F)
    survivors: list[Individual] = []
    for level in range(ranks.max() + 1):
        idx = np.flatnonzero(ranks == level)
        cd = crowding_distance(F[idx], minimize=True)
        for i, c in zip(idx, cd):
            merged[i].rank, merged[i].crowding = int(level), float(c)
        room = n_survive - len(survivors)
        if room <= 0:
            break
        if len(idx) <= room:
            survivors.extend(merged[i] for i in idx)
        else:
            order = np.argsort(-cd, kind="stable")[:room]
            survivors.extend(merged[idx[k]] for k in order)
    return survivors


def rnsga2_survival(
    merged: list[Individual],
    n_survive: int,
    ref_points=None,
    epsilon: float = 0.1,
) -> list[Individual]:
    """Reference-point survival with epsilon clearing on the splitting front.

    ``ref_points`` are minimization vectors in raw objective units; when None,
    the single-objective ideal corners of the min-max normalized space are
    used.  Distances are Euclidean in that normalized space.
    """
    if epsilon <= 0:
        raise ValueError("epsilon must be positive")
    if not merged:
        return []
    F = _objective_matrix(merged)
    ranks = nd_rank(F)
    lo, hi = F.min(axis=0), F.max(axis=0)
    span = np.where(hi > lo, hi - lo, 1.0)
    N = (F - lo) / span
    if ref_points is None:
        # corner j: objective j at its minimum, every other objective at its maximum
        R = 1.0 - np.eye(F.shape[1])
    else:
        R = (np.atleast_2d(np.asarray(ref_points, dtype=float)) - lo) / span
        if len(R) == 0:
            raise ValueError("need at least one reference point")

    survivors: list[Individual] = []
    for level in range(ranks.max() + 1):
        idx = np.flatnonzero(ranks == level)
        cd = crowding_distance(F[idx], minimize=True)
        for i, c in zip(idx, cd):
            merged[i].rank, merged[i].crowding = int(level), float(c)
        room = n_survive - len(survivors)
        if room <= 0:
            break
        if len(idx) <= room:
            survivors.extend(merged[i] for i in idx)
            continue
        chosen = _reference_split(N[idx], R, epsilon, room)
        survivors.extend(merged[idx[k]] for k in chosen)
    return survivors


def _reference_split(N: np.ndarray, R: np.ndarray, epsilon: float, room: int) -> list[int]:
    dist = np.linalg.norm(N[:, None, :] - R[None, :, :], axis=2)
    # per reference point, members ordered nearest first
    queues = [list(np.argsort(dist[:, j], kind="stable")) for j in range(len(R))]
    pool = set(range(len(N)))
    chosen: list[int] = []
    while len(chosen) < room and pool:
        active = set(pool)
        while len(chosen) < room and active:
            picked = []
            for q in queues:
                for k in q:
                    if k in active and k not in picked:
                        picked.append(k)
                        break
                if len(chosen) + len(picked) >= room:
                    break
            if not picked:
                break
            for k in picked:
                chosen.append(k)
                pool.discard(k)
                active.discard(k)
            sel = N[picked]
            for k in list(active):
                if np.min(np.linalg.norm(sel - N[k], axis=1)) <= epsilon:
                    active.discard(k)
    return chosen


@dataclass
class NSGA2:
    """Ask/tell NSGA-II state.  ``infill`` asks, ``advance`` tells."""

    n_var: int = 3
    pop_size: int = 60
    offspring_size: int = 30
    crossover_rate: float = 0.9
    mutation_rate: float = 0.3
    eta: float = 20.0
    seed: int | None = None
    population: list[Individual] = field(default_factory=list)
    generation: int = 0
    rng: np.random.Generator = field(default=None, repr=False)

    def __post_init__(self):
        _check_rate(self.crossover_rate, "crossover_rate")
        _check_rate(self.mutation_rate, "mutation_rate")
        if self.rng is None:
            self.rng = np.random.default_rng(self.seed)

    def infill(self, m: int | None = None) -> list[Candidate]:
        """Propose ``m`` candidates; an empty population yields an LHS warm start."""
        m = self.offspring_size if m is None else m
        if m < 1:
            raise ValueError("infill needs m >= 1")
        if not self.population:
            return lhs_init(m, self.n_var, self.rng)
        seen = {ind.key for ind in self.population}
        out: list[Candidate] = []
        attempts = 0
        while len(out) < m:
            p1 = tournament_select(self.population, self.rng)
            p2 = tournament_select(self.population, self.rng)
            kids = uniform_crossover(p1.candidate, p2.candidate, self.crossover_rate, self.rng)
            for kid in kids:
                kid = polynomial_mutation(kid, self.mutation_rate, self.eta, self.rng)
                attempts += 1
                if kid.key in seen and attempts <= 10 * m:
                    continue
                seen.add(kid.key)
                out.append(kid)
                if len(out) == m:
                    break
        return out

    def survive(self, merged: list[Individual]) -> list[Individual]:
        return nsga2_survival(merged, self.pop_size)

    def advance(self, evaluated: list[Individual]) -> "NSGA2":
        if any(ind.objectives is None for ind in evaluated):
            raise ValueError("advance needs evaluated individuals")
        merged, seen = [], set()
        for ind in list(self.population) + list(evaluated):
            if ind.key in seen:
                continue
            seen.add(ind.key)
            merged.append(Individual(ind.candidate, np.asarray(ind.objectives, dtype=float)))
        self.population = self.survive(merged)
        self.generation += 1
        return self


@dataclass
class RNSGA2(NSGA2):
    ref_points: np.ndarray | None = None
    epsilon: float = 0.1

    def survive(self, merged: list[Individual]) -> list[Individual]:
        return rnsga2_survival(merged, self.pop_size, self.ref_points, self.epsilon)


def evaluate_batch(candidates: list[Candidate], fn) -> list[Individual]:
    return [Individual(c, np.asarray(fn(c.genes), dtype=float)) for c in candidates]


def minimize(ea: NSGA2, fn, n_gen: int) -> NSGA2:
    """Plain generational loop: warm start plus ``n_gen`` offspring generations."""
    ea.advance(evaluate_batch(ea.infill(ea.pop_size), fn))
    for _ in range(n_gen):
        ea.advance(evaluate_batch(ea.infill(ea.offspring_size), fn))
    return ea
