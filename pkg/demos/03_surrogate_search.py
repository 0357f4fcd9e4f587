"""Bare NSGA-II against the surrogate look-ahead variant on one seed.

Both searches get the same small simulator budget on a small synthetic
market.  The hypervolume of the evaluated archive is printed after each
generation, so the two trajectories can be compared by evaluation count.
"""

from dataclasses import replace

from pardensur.backtest import BacktestConfig, PortfolioBacktest, gen_synthetic
from pardensur.bench import CountingEvaluator, run_method
from pardensur.search import SearchConfig

market = gen_synthetic(n_assets=5, n_days=400, seed=11)
sim = PortfolioBacktest(market, BacktestConfig(horizon=1), seed=0)
config = SearchConfig(budget=210, seed=4, n_trees=50)

results = {}
for method in ("nsga2", "pardensur-lookahead"):
    counter = CountingEvaluator(sim)
    res = run_method(method, counter, replace(config))
    results[method] = res
    print(f"{method}: {counter.calls} simulator calls, {len(res.pareto)} frontier points")

print("\nevaluations  " + "  ".join(f"{m:>20s}" for m in results))
hv = {m: dict(zip(r.history.evaluations, r.history.hypervolume)) for m, r in results.items()}
for e in sorted(set().union(*hv.values())):
    cells = []
    for m in results:
        known = [v for k, v in hv[m].items() if k <= e]
        cells.append(f"{max(known):20.3f}" if known else " " * 20)
    print(f"{e:11d}  " + "  ".join(cells))

scores = results["pardensur-lookahead"].nd_scores
if scores:
    print(f"\nsurrogate NDScore per generation: {', '.join(f'{s:.2f}' for s in scores)}")
