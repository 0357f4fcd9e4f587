"""How the three trade-off parameters move a backtest in (risk, return).

A synthetic 10-asset market is simulated, then the same backtest is run
for a sweep over the risk-aversion gene with the cost genes held fixed.
Larger risk aversion should pull realized risk down.
"""

import numpy as np

from pardensur.backtest import BacktestConfig, PortfolioBacktest, gen_synthetic

market = gen_synthetic(n_assets=10, n_days=500, seed=3)
sim = PortfolioBacktest(market, BacktestConfig(horizon=1), seed=0)
print(f"market: {market.n_assets} assets, {market.n_days} days; "
      f"{sim.cfg.burn_in} burn-in days before trading\n")

print("gene(risk)  gamma_risk  risk %   return %")
for g in np.linspace(0.0, 1.0, 6):
    genes = np.array([g, 0.3, 0.3])
    hp = sim.decode(genes)
    res = sim.run(genes)
    print(f"{g:10.1f}  {hp.gamma_risk:10.2f}  {res.objectives.risk_pct:6.2f}  "
          f"{res.objectives.return_pct:8.2f}")

# a longer planning horizon on the same candidate
mpo = PortfolioBacktest(market, BacktestConfig(horizon=2), seed=0)
res = mpo.run(np.array([0.5, 0.3, 0.3]))
print(f"\nhorizon 2 at gene 0.5: risk {res.objectives.risk_pct:.2f} %, "
      f"return {res.objectives.return_pct:.2f} %")
