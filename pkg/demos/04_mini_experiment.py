"""A scaled-down repeated-runs experiment with rank tests.

Runs three methods for four seeds each on a small market, writes every
artifact under ./mini_experiment, and prints the indicator table and the
Hochberg-adjusted one-sided tests.
"""

import sys
from pathlib import Path

from pardensur.backtest import BacktestConfig
from pardensur.bench import DataSource, ExperimentSpec, run_experiment
from pardensur.search import SearchConfig

out = Path(sys.argv[1] if len(sys.argv) > 1 else "mini_experiment")
spec = ExperimentSpec(
    methods=("nsga2", "random-search", "pardensur-lookahead"),
    repeats=4,
    search=SearchConfig(budget=150, n_trees=30),
    backtest=BacktestConfig(horizon=1),
    data=DataSource(n_assets=5, n_days=400, seed=2),
    reference_count=300,
    out_dir=str(out),
)
res = run_experiment(spec, log=print)

print(f"\nreference HV {res['reference_hv']:.3f}")
print((out / "indicators.csv").read_text())
for entry in res["stats"]:
    for name, t in entry["tests"].items():
        print(f"{entry['treatment']} vs {entry['baseline']} on {name}: "
              f"p = {t['p']:.3f}, adjusted {t['p_adjusted']:.3f}")
