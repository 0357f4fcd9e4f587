"""Baselines, repeated trials, rank tests and reproducible result files."""

from __future__ import annotations

import csv
import io
import itertools
import json
import math
import sys
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np

from . import __version__
from .backtest import (
    BacktestConfig,
    DecodeBounds,
    PortfolioBacktest,
    SyntheticSpec,
    gen_synthetic,
    load_csv,
)
from .evo import NSGA2, RNSGA2, Candidate, lhs_init
from .metrics import (
    RunHistory,
    evaluations_to_success,
    gd_plus,
    hypervolume,
    igd_plus,
    quality_indicators,
)
from .search import GroundTruthArchive, SearchConfig, SearchResult, run

if sys.version_info >= (3, 11):
    import tomllib
else:  # pragma: no cover
    import tomli as tomllib

# method -> (EA class, acceptance, look-ahead); None marks a non-evolutionary baseline
METHODS = {
    "nsga2": (NSGA2, False, False),
    "rnsga2": (RNSGA2, False, False),
    "pardensur-plain": (NSGA2, False, False),
    "pardensur-acceptance": (NSGA2, True, False),
    "pardensur-lookahead": (NSGA2, False, True),
    "pardensur-both": (NSGA2, True, True),
    "random-search": None,
    "grid-search": None,
}


class CountingEvaluator:
    """Wraps an evaluator and counts simulator calls."""

    def __init__(self, fn):
        self.fn = fn
        self.calls = 0

    def __call__(self, genes):
        self.calls += 1
        return self.fn(genes)


# --- baselines ---------------------------------------------------------------


def _chunked_history(archive: GroundTruthArchive, seed: int, first: int, step: int) -> RunHistory:
    hist = RunHistory(seed)
    pts = archive.points()
    marks = list(range(min(first, len(pts)), len(pts), step)) + [len(pts)]
    gen = 0
    for k in sorted(set(marks)):
        if k == 0:
            continue
        hist.record(gen, k, hypervolume(pts[:k]))
        gen += 1
    return hist


def random_search(count: int, evaluator, rng) -> GroundTruthArchive:
    """Evaluate ``count`` Latin-hypercube samples of the unit gene box."""
    if count < 1:
        raise ValueError("count must be at least 1")
    rng = np.random.default_rng(rng)
    archive = GroundTruthArchive(count)
    archive.evaluate(lhs_init(count, 3, rng), evaluator)
    return archive


def grid_lattice(shape=(8, 8, 8), drop: int = 2) -> list[Candidate]:
    """Even lattice over the gene box (log-spaced in the decoded parameters).

    The ``drop`` points with the largest gene sum (the largest-parameter
    corners, ties broken lexicographically) are removed.
    """
    axes = [np.linspace(0.0, 1.0, k) for k in shape]
    pts = [np.array(p) for p in itertools.product(*axes)]
    order = sorted(range(len(pts)), key=lambda i: (-pts[i].sum(), tuple(-pts[i])))
    dropped = set(order[:drop])
    return [Candidate(p) for i, p in enumerate(pts) if i not in dropped]


def grid_search(evaluator, shape=(8, 8, 8), drop: int = 2) -> GroundTruthArchive:
    lattice = grid_lattice(shape, drop)
    archive = GroundTruthArchive(len(lattice))
    archive.evaluate(lattice, evaluator)
    return archive


def run_bare_ea(ea: NSGA2, evaluator, config: SearchConfig, callback=None) -> SearchResult:
    """Generational EA driver with the same evaluation cache and budget rules as ``run``."""
    archive = GroundTruthArchive(config.budget)
    history = RunHistory(config.seed)
    batch = ea.infill(config.pop_size)
    generation = 0
    stalled = 0
    while True:
        before = archive.calls
        evaluated = archive.evaluate(batch, evaluator)
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
        batch = ea.infill(config.offspring)
    return SearchResult(archive.pareto(), archive, history)


def run_method(method: str, evaluator, config: SearchConfig) -> SearchResult:
    """One seeded run of ``method`` under ``config`` (seed, budget, sizes)."""
    if method not in METHODS:
        raise ValueError(f"unknown method {method!r}; choose from {sorted(METHODS)}")
    seed = config.seed
    if method == "random-search":
        archive = random_search(config.budget, evaluator, seed)
        hist = _chunked_history(archive, seed, config.pop_size, config.offspring)
        return SearchResult(archive.pareto(), archive, hist)
    if method == "grid-search":
        archive = grid_search(evaluator)
        hist = _chunked_history(archive, seed, config.pop_size, config.offspring)
        return SearchResult(archive.pareto(), archive, hist)
    cls, acceptance, look = METHODS[method]
    ea = cls(pop_size=config.pop_size, offspring_size=config.offspring, seed=seed)
    if method in ("nsga2", "rnsga2"):
        return run_bare_ea(ea, evaluator, config)
    return run(replace(config, acceptance=acceptance, look_ahead=look), ea, evaluator)


# --- rank statistics ---------------------------------------------------------


def midranks(values) -> np.ndarray:
    """1-based ranks with ties sharing their average rank."""
    v = np.asarray(values, dtype=float)
    order = np.argsort(v, kind="mergesort")
    ranks = np.empty(len(v))
    sv = v[order]
    i = 0
    while i < len(v):
        j = i
        while j + 1 < len(v) and sv[j + 1] == sv[i]:
            j += 1
        ranks[order[i : j + 1]] = 0.5 * (i + j) + 1.0
        i = j + 1
    return ranks


def _exact_rank_sum_cdf(ranks2: np.ndarray, n_x: int, observed2: int) -> float:
    """P(sum of a random n_x-subset of doubled ranks <= observed2)."""
    total = int(ranks2.sum())
    ways = np.zeros((n_x + 1, total + 1), dtype=np.int64)
    ways[0, 0] = 1
    for r in ranks2.astype(int):
        for k in range(n_x, 0, -1):
            ways[k, r:] = ways[k, r:] + ways[k - 1, : total + 1 - r]
    dist = ways[n_x]
    return float(sum(dist[: observed2 + 1]) / math.comb(len(ranks2), n_x))


def mann_whitney_one_sided(x, y, alternative: str = "x_less") -> float:
    """One-sided Mann-Whitney U p-value.

    ``x_less`` tests whether x tends to be smaller than y.  Exact
    permutation distribution of the midrank sum for ``len(x) + len(y) <= 20``,
    otherwise the tie-corrected normal approximation with continuity
    correction.  Infinite values rank last.
    """
    x = np.asarray(x, dtype=float).ravel()
    y = np.asarray(y, dtype=float).ravel()
    if x.size == 0 or y.size == 0:
        raise ValueError("both samples must be nonempty")
    if alternative not in ("x_less", "x_greater"):
        raise ValueError("alternative must be 'x_less' or 'x_greater'")
    if np.any(np.isnan(x)) or np.any(np.isnan(y)):
        raise ValueError("samples must not contain NaN")
    if alternative == "x_greater":
        return mann_whitney_one_sided(y, x, "x_less")
    n_x, n_y = x.size, y.size
    ranks = midranks(np.concatenate([x, y]))
    rx = ranks[:n_x].sum()
    if n_x + n_y <= 20:
        ranks2 = np.rint(2 * ranks).astype(int)
        return min(1.0, _exact_rank_sum_cdf(ranks2, n_x, int(round(2 * rx))))
    N = n_x + n_y
    u = rx - n_x * (n_x + 1) / 2.0
    mean = n_x * n_y / 2.0
    _, counts = np.unique(ranks, return_counts=True)
    tie = np.sum(counts**3 - counts) / (N * (N - 1))
    var = n_x * n_y / 12.0 * ((N + 1) - tie)
    if var <= 0:
        return 1.0
    z = (u - mean + 0.5) / math.sqrt(var)
    return float(0.5 * math.erfc(-z / math.sqrt(2.0)))


def hochberg_adjust(pvalues) -> list[float]:
    """Step-up adjusted p-values, returned in input order."""
    p = np.asarray(pvalues, dtype=float).ravel()
    if np.any(~np.isfinite(p)) or np.any(p < 0) or np.any(p > 1):
        raise ValueError("p-values must lie in [0, 1]")
    m = p.size
    order = np.argsort(p, kind="stable")
    adj = np.empty(m)
    running = 1.0
    for pos in range(m - 1, -1, -1):
        i = order[pos]
        running = min(running, (m - pos) * p[i])
        adj[i] = min(running, 1.0)
    return [float(a) for a in adj]


# --- experiment harness ------------------------------------------------------


@dataclass(frozen=True)
class DataSource:
    csv_path: str | None = None
    n_assets: int = 10
    n_days: int = 750
    seed: int = 0

    def load(self):
        if self.csv_path:
            return load_csv(self.csv_path)
        return gen_synthetic(self.n_assets, self.n_days, self.seed, SyntheticSpec())


@dataclass(frozen=True)
class ExperimentSpec:
    methods: tuple = ("nsga2", "pardensur-lookahead")
    repeats: int = 10
    base_seed: int = 0
    search: SearchConfig = field(default_factory=SearchConfig)
    backtest: BacktestConfig = field(default_factory=BacktestConfig)
    data: DataSource = field(default_factory=DataSource)
    reference_count: int = 2000
    reference_seed: int = 12345
    evaluation_seed: int = 0
    thresholds: tuple = (0.95, 0.99)
    out_dir: str = "results"

    def __post_init__(self):
        if self.repeats < 1:
            raise ValueError("repeats must be at least 1")
        bad = [m for m in self.methods if m not in METHODS]
        if bad:
            raise ValueError(f"unknown methods {bad}")


def _fmt(x: float) -> str:
    return f"{x:.6f}"


def frontier_csv(front) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["Risk", "Return"])
    for r, ret in np.asarray(front, dtype=float).reshape(-1, 2):
        w.writerow([_fmt(r), _fmt(ret)])
    return buf.getvalue()


def read_frontier(path) -> np.ndarray:
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    if not rows or [h.strip() for h in rows[0]] != ["Risk", "Return"]:
        raise ValueError(f"{path}: expected header Risk,Return")
    return np.array([[float(a), float(b)] for a, b in rows[1:]]).reshape(-1, 2)


def history_csv(hist: RunHistory) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["generation", "evaluations", "hypervolume"])
    for g, e, hv in zip(hist.generations, hist.evaluations, hist.hypervolume):
        w.writerow([g, e, _fmt(hv)])
    return buf.getvalue()


def read_history(path, seed: int = 0) -> RunHistory:
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.DictReader(fh))
    hist = RunHistory(seed=seed)
    for r in rows:
        hist.record(int(r["generation"]), int(r["evaluations"]), float(r["hypervolume"]))
    return hist


def _write(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(text)


def _dump_json(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True, allow_nan=False, default=str) + "\n"


def _clean(x):
    if x is None:
        return None
    if isinstance(x, float) and not math.isfinite(x):
        return None
    return round(float(x), 6)


def indicator_row(method: str, seed: int, front, hist: RunHistory, ref_front, ref_hv: float,
                  thresholds) -> dict:
    row = {
        "method": method,
        "seed": seed,
        "hv": hypervolume(front),
        "gd_plus": gd_plus(front, ref_front),
        "igd_plus": igd_plus(front, ref_front),
        "evaluations": hist.evaluations[-1] if len(hist) else 0,
    }
    for t in thresholds:
        row[f"evals_to_{round(100 * t)}"] = evaluations_to_success(hist, t * ref_hv)
    return row


INDICATOR_FIELDS = ["method", "seed", "hv", "gd_plus", "igd_plus", "evaluations"]


def indicators_csv(rows, thresholds) -> str:
    fields = INDICATOR_FIELDS + [f"evals_to_{round(100 * t)}" for t in thresholds]
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(fields)
    for r in rows:
        w.writerow([_cell(f, r[f]) for f in fields])
    return buf.getvalue()


def _cell(name: str, v) -> str:
    if isinstance(v, (str, int)):
        return str(v)
    if math.isinf(v):
        return "inf"
    # evaluation counts are whole numbers
    if name.startswith("evals_to_") and float(v).is_integer():
        return str(int(v))
    return _fmt(v)


def read_indicators(path) -> list[dict]:
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.DictReader(fh))
    out = []
    for r in rows:
        d = {"method": r["method"], "seed": int(r["seed"])}
        for k, v in r.items():
            if k not in ("method", "seed"):
                d[k] = float(v)
        out.append(d)
    return out


def compare_methods(rows, treatment: str, baseline: str, threshold: int = 95) -> dict:
    """One-sided tests that ``treatment`` beats ``baseline`` on HV and AESR, Hochberg-adjusted."""
    a = [r for r in rows if r["method"] == treatment]
    b = [r for r in rows if r["method"] == baseline]
    key = f"evals_to_{threshold}"
    p_hv = mann_whitney_one_sided([r["hv"] for r in a], [r["hv"] for r in b], "x_greater")
    p_ae = mann_whitney_one_sided([r[key] for r in a], [r[key] for r in b], "x_less")
    adj = hochberg_adjust([p_hv, p_ae])
    return {
        "treatment": treatment,
        "baseline": baseline,
        "tests": {
            "hv": {"direction": "treatment_greater", "p": p_hv, "p_adjusted": adj[0]},
            f"aesr{threshold}": {"direction": "treatment_less", "p": p_ae, "p_adjusted": adj[1]},
        },
    }


def stats_report(rows, thresholds=(0.95,)) -> list[dict]:
    methods = sorted({r["method"] for r in rows})
    treat = [m for m in methods if m.startswith("pardensur")]
    base = [m for m in methods if not m.startswith("pardensur")]
    thr = round(100 * thresholds[0])
    return [compare_methods(rows, t, b, thr) for t in treat for b in base]


def reference_frontier(evaluator, count: int, seed: int):
    archive = random_search(count, evaluator, seed)
    front = archive.pareto()
    return front, hypervolume(front), archive


def run_experiment(spec: ExperimentSpec, log=None) -> dict:
    """Run every method ``spec.repeats`` times and write all artifacts under ``spec.out_dir``."""
    out = Path(spec.out_dir)
    data = spec.data.load()
    simulator = PortfolioBacktest(data, spec.backtest, seed=spec.evaluation_seed)
    ref_eval = CountingEvaluator(simulator)
    ref_front, _, _ = reference_frontier(ref_eval, spec.reference_count, spec.reference_seed)
    if ref_eval.calls > spec.reference_count:
        raise AssertionError("reference search exceeded its budget")
    _write(out / "reference" / "frontier.csv", frontier_csv(ref_front))
    # indicators are computed from the files as written, so they can be recomputed exactly
    ref_front = read_frontier(out / "reference" / "frontier.csv")
    ref_hv = hypervolume(ref_front)
    rows, histories, failures = [], {}, []
    seeds = [spec.base_seed + i for i in range(spec.repeats)]
    for method in spec.methods:
        for seed in seeds:
            counter = CountingEvaluator(simulator)
            cfg = replace(spec.search, seed=seed)
            try:
                res = run_method(method, counter, cfg)
            except Exception as exc:  # recorded, experiment continues
                failures.append({"method": method, "seed": seed, "error": str(exc)})
                continue
            budget = cfg.budget if method != "grid-search" else len(grid_lattice())
            if counter.calls > budget:
                raise AssertionError(f"{method} seed {seed} exceeded its budget")
            run_dir = out / method / f"seed_{seed}"
            _write(run_dir / "frontier.csv", frontier_csv(res.pareto))
            _write(run_dir / "history.csv", history_csv(res.history))
            front = read_frontier(run_dir / "frontier.csv")
            hist = read_history(run_dir / "history.csv", seed)
            histories.setdefault(method, []).append(hist)
            rows.append(indicator_row(method, seed, front, hist, ref_front, ref_hv,
                                      spec.thresholds))
            if log:
                log(f"{method} seed={seed} hv={rows[-1]['hv']:.3f} calls={counter.calls}")
    _write(out / "indicators.csv", indicators_csv(rows, spec.thresholds))
    report = stats_report(rows, spec.thresholds)
    _write(out / "stats.json", _dump_json(report))
    table = {}
    for method, hs in histories.items():
        mrows = [r for r in rows if r["method"] == method]
        entry = {
            "runs": len(hs),
            "hv_mean": _clean(np.mean([r["hv"] for r in mrows])),
            "gd_plus_mean": _clean(np.mean([r["gd_plus"] for r in mrows])),
            "igd_plus_mean": _clean(np.mean([r["igd_plus"] for r in mrows])),
        }
        for t in spec.thresholds:
            q = quality_indicators(hs, ref_hv, t)
            pct = round(100 * t)
            entry[f"sr{pct}"] = _clean(q.sr)
            entry[f"aesr{pct}"] = _clean(q.aesr)
            entry[f"agsr{pct}"] = _clean(q.agsr)
        table[method] = entry
    summary = {
        "config": _spec_dict(spec),
        "reference": {"count": spec.reference_count, "seed": spec.reference_seed,
                      "hypervolume": _clean(ref_hv), "points": len(ref_front)},
        "indicators": table,
        "failures": failures,
        "incomplete": sorted({f["method"] for f in failures}),
        "provenance": {"seeds": seeds, "base_seed": spec.base_seed,
                       "version": f"v{__version__}",
                       "grid_search": "8x8x8 lattice minus two largest corners (approximation)"},
    }
    _write(out / "summary.json", _dump_json(summary))
    return {"rows": rows, "stats": report, "summary": summary, "reference_hv": ref_hv,
            "histories": histories}


def _spec_dict(spec: ExperimentSpec) -> dict:
    d = asdict(spec)
    d["methods"] = list(spec.methods)
    d["thresholds"] = list(spec.thresholds)
    return d


def load_spec(path, **overrides) -> ExperimentSpec:
    """Read a TOML experiment file; keyword overrides win over file values.

    Sections: top-level keys of ``ExperimentSpec`` plus ``[search]``,
    ``[backtest]`` and ``[data]`` tables.
    """
    with open(path, "rb") as fh:
        raw = tomllib.load(fh)
    return spec_from_dict(raw, **overrides)


def spec_from_dict(raw: dict, **overrides) -> ExperimentSpec:
    raw = dict(raw)
    search = SearchConfig(**raw.pop("search", {}))
    bt_raw = dict(raw.pop("backtest", {}))
    if isinstance(bt_raw.get("bounds"), dict):
        bt_raw["bounds"] = DecodeBounds(**{k: tuple(v) for k, v in bt_raw["bounds"].items()})
    backtest = BacktestConfig(**bt_raw)
    data = DataSource(**raw.pop("data", {}))
    for key in ("methods", "thresholds"):
        if key in raw:
            raw[key] = tuple(raw[key])
    unknown = set(raw) - {f for f in ExperimentSpec.__dataclass_fields__}
    if unknown:
        raise ValueError(f"unknown experiment keys {sorted(unknown)}")
    spec = ExperimentSpec(search=search, backtest=backtest, data=data, **raw)
    search_over = {k[7:]: v for k, v in overrides.items() if k.startswith("search_") and v is not None}
    bt_over = {k[9:]: v for k, v in overrides.items() if k.startswith("backtest_") and v is not None}
    top = {k: v for k, v in overrides.items()
           if v is not None and not k.startswith(("search_", "backtest_"))}
    if search_over:
        spec = replace(spec, search=replace(spec.search, **search_over))
    if bt_over:
        spec = replace(spec, backtest=replace(spec.backtest, **bt_over))
    if "data_csv" in top:
        spec = replace(spec, data=replace(spec.data, csv_path=top.pop("data_csv")))
    return replace(spec, **top) if top else spec
