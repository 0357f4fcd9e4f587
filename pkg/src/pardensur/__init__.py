"""Surrogate-assisted multi-objective search over portfolio trade-off parameters."""

__version__ = "0.1.0"

from .metrics import (  # noqa: E402
    DEFAULT_HV_REF,
    ObjectivePoint,
    RunHistory,
    crowding_distance,
    dominates,
    gd_plus,
    hypervolume,
    igd_plus,
    nondominated_sort,
    pareto_front,
    quality_indicators,
)
from .evo import NSGA2, RNSGA2, Candidate, Individual  # noqa: E402
from .surrogate import SurrogateModel, kendall_tau_b, nd_score  # noqa: E402
from .search import (  # noqa: E402
    GroundTruthArchive,
    Reservoir,
    SearchConfig,
    acceptance_fill,
    look_ahead,
    moo_space_termination,
    reservoir_update,
    run,
)
from .cvxport import (  # noqa: E402
    ConstraintSet,
    CostParams,
    PeriodForecast,
    TradeOffParams,
    solve_mpo,
    solve_spo,
)
from .backtest import (  # noqa: E402
    BacktestConfig,
    MarketData,
    PortfolioBacktest,
    gen_synthetic,
    load_csv,
    run_backtest,
    save_csv,
)

__all__ = [
    "DEFAULT_HV_REF",
    "ObjectivePoint",
    "RunHistory",
    "crowding_distance",
    "dominates",
    "gd_plus",
    "hypervolume",
    "igd_plus",
    "nondominated_sort",
    "pareto_front",
    "quality_indicators",
    "NSGA2",
    "RNSGA2",
    "Candidate",
    "Individual",
    "SurrogateModel",
    "kendall_tau_b",
    "nd_score",
    "GroundTruthArchive",
    "Reservoir",
    "SearchConfig",
    "acceptance_fill",
    "look_ahead",
    "moo_space_termination",
    "reservoir_update",
    "run",
    "ConstraintSet",
    "CostParams",
    "PeriodForecast",
    "TradeOffParams",
    "solve_mpo",
    "solve_spo",
    "BacktestConfig",
    "MarketData",
    "PortfolioBacktest",
    "gen_synthetic",
    "load_csv",
    "run_backtest",
    "save_csv",
]
