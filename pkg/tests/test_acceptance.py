"""One test per acceptance criterion, each reporting a PASS/FAIL line."""

import time

import numpy as np
import pytest
from scipy import stats

from pardensur.bench import (
    CountingEvaluator,
    DataSource,
    ExperimentSpec,
    compare_methods,
    hochberg_adjust,
    mann_whitney_one_sided,
    run_bare_ea,
    run_experiment,
    run_method,
)
from pardensur.backtest import BacktestConfig
from pardensur.cvxport import ConstraintSet, CostParams, TradeOffParams, solve_mpo, solve_spo
from pardensur.evo import NSGA2
from pardensur.metrics import DEFAULT_HV_REF, hypervolume, nondominated_sort
from pardensur.search import Reservoir, SearchConfig, reservoir_update, run
from pardensur.surrogate import DegenerateFold, kendall_tau_b

from .oracles import (
    brute_ranks,
    enumerate_mann_whitney,
    grid_hypervolume,
    hochberg_ladder,
    pair_count_tau_b,
)
from .test_bench import _snapshot, tiny_spec
from .test_cvxport import (
    FULLY_INVESTED,
    NO_COST,
    markowitz_kkt,
    random_instance,
    random_weights,
    unit_instance,
)
from .test_evo import zdt1_igd
from .test_search import Counting

TRIALS = 1000


def test_criterion_1_oracle_equivalence(verdict):
    rng = np.random.default_rng(2024)
    start = time.perf_counter()
    bad = {"sort": 0, "hv": 0, "tau": 0, "mw": 0, "hochberg": 0}
    for _ in range(TRIALS):
        n = int(rng.integers(1, 25))
        pts = rng.integers(0, 8, size=(n, 2)).astype(float)
        bad["sort"] += list(nondominated_sort(pts)) != brute_ranks(pts)

        cont = np.column_stack([rng.uniform(0, 45, n), rng.uniform(-5, 30, n)])
        bad["hv"] += bool(abs(hypervolume(cont) - grid_hypervolume(cont, DEFAULT_HV_REF)) > 1e-9)

        m = int(rng.integers(2, 40))
        x, y = rng.integers(0, 5, m).tolist(), rng.integers(0, 5, m).tolist()
        try:
            want = pair_count_tau_b(x, y)
        except ZeroDivisionError:
            try:
                kendall_tau_b(x, y)
                bad["tau"] += 1
            except DegenerateFold:
                pass
        else:
            bad["tau"] += kendall_tau_b(x, y) != want

        nx, ny = int(rng.integers(1, 6)), int(rng.integers(1, 6))
        a, b = rng.integers(0, 6, nx).tolist(), rng.integers(0, 6, ny).tolist()
        bad["mw"] += abs(mann_whitney_one_sided(a, b) - enumerate_mann_whitney(a, b)) > 1e-12

        p = rng.choice([0.001, 0.01, 0.04, 0.3], size=int(rng.integers(1, 9))) \
            if rng.random() < 0.3 else rng.random(int(rng.integers(1, 9)))
        bad["hochberg"] += hochberg_adjust(p) != hochberg_ladder(list(p))
    elapsed = time.perf_counter() - start
    ok = not any(bad.values()) and elapsed < 30
    verdict(1, "oracle equivalence", ok,
            f"{TRIALS} trials each, mismatches {bad}, {elapsed:.1f} s")


def test_criterion_2_solver_correctness(verdict):
    rng = np.random.default_rng(7)
    start = time.perf_counter()
    kkt_err = 0.0
    for _ in range(100):
        n = int(rng.integers(1, 7))
        f = unit_instance(rng, n)
        gamma = float(10 ** rng.uniform(0, 1.5))
        w = solve_spo(f, TradeOffParams(gamma), NO_COST, FULLY_INVESTED,
                      np.append(np.full(n, 1 / n), 0.0))
        kkt_err = max(kkt_err, np.max(np.abs(w[:n] - markowitz_kkt(f.mu[:n], f.sigma[:n, :n], gamma))))
    mpo_err = 0.0
    for _ in range(25):
        n = int(rng.integers(1, 7))
        f = random_instance(rng, n)
        params = TradeOffParams(float(10 ** rng.uniform(-1, 3)), 3.0, 2.0)
        prev = random_weights(rng, n)
        a = solve_spo(f, params, CostParams(), ConstraintSet(), prev, 1e6)
        (b,) = solve_mpo([f], params, CostParams(), ConstraintSet(), prev, 1e6)
        mpo_err = max(mpo_err, np.max(np.abs(a - b)))
    limit_err = 0.0
    for _ in range(10):
        f = random_instance(rng, 4)
        prev = random_weights(rng, 4)
        w = solve_spo(f, TradeOffParams(1.0, 1e6, 1.0), CostParams(), ConstraintSet(), prev)
        limit_err = max(limit_err, np.max(np.abs(w - prev)))
    elapsed = time.perf_counter() - start
    ok = kkt_err <= 1e-6 and mpo_err <= 1e-9 and limit_err <= 1e-6 and elapsed < 60
    verdict(2, "solver correctness", ok,
            f"KKT {kkt_err:.1e}, MPO(H=1) vs SPO {mpo_err:.1e}, cost limit {limit_err:.1e}, "
            f"{elapsed:.1f} s")


def test_criterion_3_plain_equals_bare_ea(verdict):
    start = time.perf_counter()
    same = True
    for seed in range(3):
        cfg = SearchConfig(budget=510, seed=seed)
        a, b = Counting(), Counting()
        ra = run(cfg, NSGA2(seed=seed), a)
        rb = run_bare_ea(NSGA2(seed=seed), b, cfg)
        same &= ra.archive.log == rb.archive.log and len(a.seen) == len(b.seen)
        same &= all(np.array_equal(x, y) for x, y in zip(a.seen, b.seen))
    elapsed = time.perf_counter() - start
    verdict(3, "plain pardensur reproduces bare NSGA-II", same and elapsed < 60,
            f"3 seeds x 510 evaluations, {elapsed:.1f} s")


def test_criterion_4_zdt1(verdict):
    start = time.perf_counter()
    igds = [zdt1_igd(seed) for seed in range(5)]
    elapsed = time.perf_counter() - start
    med = float(np.median(igds))
    verdict(4, "NSGA-II on ZDT1", med < 0.01 and elapsed < 120,
            f"median IGD+ {med:.5f} over 5 seeds, {elapsed:.1f} s")


@pytest.mark.slow
def test_criterion_5_directional_speedup(verdict, tmp_path):
    start = time.perf_counter()
    spec = ExperimentSpec(
        methods=("nsga2", "pardensur-lookahead"),
        repeats=10,
        search=SearchConfig(budget=510),
        backtest=BacktestConfig(horizon=1),
        data=DataSource(n_assets=10, n_days=750),
        reference_count=2000,
        out_dir=str(tmp_path),
    )
    res = run_experiment(spec)
    rows = res["rows"]
    cmp = compare_methods(rows, "pardensur-lookahead", "nsga2", 95)["tests"]
    p_adj = cmp["aesr95"]["p_adjusted"]
    ours = {r["seed"]: r for r in rows if r["method"] == "pardensur-lookahead"}
    base = {r["seed"]: r for r in rows if r["method"] == "nsga2"}
    med_ours = float(np.median([r["evals_to_95"] for r in ours.values()]))
    med_base = float(np.median([r["evals_to_95"] for r in base.values()]))
    hv_wins = sum(ours[s]["hv"] >= base[s]["hv"] for s in base if s in ours)
    elapsed = time.perf_counter() - start
    ok = med_ours < med_base and p_adj < 0.05 and hv_wins >= 7
    verdict(5, "look-ahead speeds up exploration", ok,
            f"median AESR95 {med_ours:g} vs {med_base:g}, adjusted p {p_adj:.3f} "
            f"(HV p {cmp['hv']['p_adjusted']:.3f}), best HV >= baseline in {hv_wins}/10 seeds, "
            f"{elapsed:.0f} s")


def test_criterion_6_budget_and_determinism(verdict, tmp_path):
    problems = []
    for method in ("nsga2", "rnsga2", "pardensur-plain", "pardensur-acceptance",
                   "pardensur-lookahead", "pardensur-both", "random-search"):
        cfg = SearchConfig(budget=150, seed=1, n_trees=10, look_ahead_max_generations=10)
        ev = Counting()
        run_method(method, CountingEvaluator(ev), cfg)
        keys = {tuple(np.round(g, 12)) for g in ev.seen}
        if ev.calls > cfg.budget:
            problems.append(f"{method} used {ev.calls}")
        if len(keys) != ev.calls:
            problems.append(f"{method} re-evaluated a duplicate")
    spec = tiny_spec(tmp_path)
    run_experiment(spec)
    first = _snapshot(tmp_path)
    run_experiment(spec)
    if _snapshot(tmp_path) != first:
        problems.append("experiment outputs changed on re-run")
    verdict(6, "budget and determinism invariants", not problems,
            "; ".join(problems) or f"7 methods within budget, {len(first)} files byte-identical")


def test_criterion_7_reservoir_uniformity(verdict):
    start = time.perf_counter()
    rng = np.random.default_rng(99)
    counts = np.zeros(100)
    for _ in range(10_000):
        res = Reservoir(10, rng)
        for i in range(100):
            reservoir_update(res, i)
        counts[res.items] += 1
    p = stats.chisquare(counts).pvalue
    elapsed = time.perf_counter() - start
    verdict(7, "reservoir uniformity", p > 0.001 and elapsed < 30,
            f"chi-square p {p:.3f} over 10^4 streams, {elapsed:.1f} s")
