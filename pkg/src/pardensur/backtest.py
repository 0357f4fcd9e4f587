"""Market data, forecast construction and the rolling-horizon backtest.

A backtest starts all-cash, re-optimizes at every close after the burn-in,
trades the first period of the plan, and books the next day's realized
return net of trading and holding costs.  Forecasts do not depend on the
trade-off parameters, so they are built once per (data, config, seed) and
shared by every candidate evaluated against that market.
"""

from __future__ import annotations

import csv
import math
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from numba import njit

from .cvxport import (
    KKT_TOL,
    MAX_ITER,
    OBJ_TOL,
    OBJ_WINDOW,
    ConstraintSet,
    DUAL_STEP,
    CostParams,
    _condat_vu,
    _fista,
    _metric_steps,
    scaled_lmax,
)
from .metrics import ObjectivePoint


@dataclass(frozen=True, eq=False)
class MarketData:
    dates: np.ndarray
    assets: tuple
    open: np.ndarray
    close: np.ndarray
    volume: np.ndarray

    def __post_init__(self):
        dates = np.asarray(self.dates, dtype="datetime64[D]")
        object.__setattr__(self, "dates", dates)
        object.__setattr__(self, "assets", tuple(str(a) for a in self.assets))
        for name in ("open", "close", "volume"):
            arr = np.asarray(getattr(self, name), dtype=float)
            if arr.ndim == 1:
                arr = arr[:, None]
            if arr.shape != (len(dates), len(self.assets)):
                raise ValueError(f"{name} has shape {arr.shape}, expected "
                                 f"{(len(dates), len(self.assets))}")
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        if len(dates) > 1 and np.any(np.diff(dates) <= np.timedelta64(0, "D")):
            raise ValueError("dates must be strictly increasing")
        if np.any(self.open <= 0) or np.any(self.close <= 0):
            raise ValueError("prices must be positive")
        if np.any(self.volume < 0):
            raise ValueError("volumes must be non-negative")

    @property
    def n_days(self) -> int:
        return len(self.dates)

    @property
    def n_assets(self) -> int:
        return len(self.assets)

    def returns(self) -> np.ndarray:
        """Close-to-close simple returns; row 0 is NaN."""
        r = np.full(self.close.shape, np.nan)
        r[1:] = self.close[1:] / self.close[:-1] - 1.0
        return r


@dataclass(frozen=True)
class DecodeBounds:
    gamma_risk: tuple = (0.1, 1000.0)
    gamma_trade: tuple = (0.5, 100.0)
    gamma_hold: tuple = (0.1, 100.0)

    def decode(self, genes) -> "HyperParams":
        g = np.asarray(genes, dtype=float)
        if g.shape != (3,) or np.any(g < 0) or np.any(g > 1):
            raise ValueError("expected three genes in [0, 1]")
        vals = [
            10.0 ** (math.log10(lo) + gi * (math.log10(hi) - math.log10(lo)))
            for gi, (lo, hi) in zip(g, (self.gamma_risk, self.gamma_trade, self.gamma_hold))
        ]
        return HyperParams(*vals)


@dataclass(frozen=True)
class HyperParams:
    gamma_risk: float
    gamma_trade: float
    gamma_hold: float


@dataclass(frozen=True)
class BacktestConfig:
    horizon: int = 2
    burn_in: int = 250
    noise_scale: float = 1.0
    cov_window: int = 250
    ma_window: int = 10
    annualization_days: int = 250
    initial_value: float = 1e6
    shrinkage: float = 0.1
    kkt_tol: float = KKT_TOL
    bounds: DecodeBounds = field(default_factory=DecodeBounds)

    def __post_init__(self):
        if self.horizon < 1:
            raise ValueError("horizon must be at least 1")
        if self.burn_in < max(self.cov_window, self.ma_window):
            raise ValueError("burn_in must cover the estimator windows")


@dataclass(eq=False)
class BacktestResult:
    daily_returns: np.ndarray
    objectives: ObjectivePoint
    trades_executed: np.ndarray
    evaluation_seed: int
    values: np.ndarray = field(repr=False, default=None)
    weights: np.ndarray = field(repr=False, default=None)


def annualize(daily_returns, days: int = 250) -> ObjectivePoint:
    """(annualized std %, annualized mean %) of a daily return series."""
    r = np.asarray(daily_returns, dtype=float)
    if r.size < 2:
        raise ValueError("need at least two daily returns")
    risk = float(np.std(r, ddof=1) * math.sqrt(days) * 100.0)
    ret = float(np.mean(r) * days * 100.0)
    return ObjectivePoint(risk, ret)


# --- forecasts ---------------------------------------------------------------


def estimate_volatility(open_price, close_price):
    """Daily volatility proxy |ln close - ln open|."""
    o = np.asarray(open_price, dtype=float)
    c = np.asarray(close_price, dtype=float)
    if np.any(o <= 0) or np.any(c <= 0):
        raise ValueError("prices must be positive")
    out = np.abs(np.log(c) - np.log(o))
    return float(out) if out.ndim == 0 else out


def moving_average(series, window: int) -> np.ndarray:
    """Trailing mean; the first ``window - 1`` entries average the available prefix."""
    x = np.asarray(series, dtype=float)
    if window < 1:
        raise ValueError("window must be at least 1")
    if x.shape[0] == 0:
        raise ValueError("empty series")
    csum = np.cumsum(x, axis=0)
    out = np.empty_like(csum)
    k = min(window, len(x))
    counts = np.arange(1, k + 1).reshape((-1,) + (1,) * (x.ndim - 1))
    out[:k] = csum[:k] / counts
    out[k:] = (csum[k:] - csum[:-k]) / window
    return out


def forecast_returns(realized, rolling_vol, c: float, rng) -> np.ndarray:
    """Realized returns plus zero-mean Gaussian noise with std ``c * rolling_vol``."""
    realized = np.asarray(realized, dtype=float)
    rolling_vol = np.asarray(rolling_vol, dtype=float)
    if realized.shape != rolling_vol.shape:
        raise ValueError("realized and rolling_vol must align")
    eps = np.random.default_rng(rng).standard_normal(realized.shape)
    return realized + c * rolling_vol * eps


def forecast_covariance(returns, window: int, shrinkage: float = 0.1) -> np.ndarray:
    """Trailing sample covariance shrunk toward its diagonal, PSD-clipped, with a zero cash row."""
    R = np.asarray(returns, dtype=float)
    if R.ndim != 2 or len(R) < window or window < 2:
        raise ValueError(f"need at least {window} rows of history")
    W = R[-window:]
    # shifting by a sample row keeps constant columns exactly zero
    C = np.cov(W - W[0], rowvar=False).reshape(R.shape[1], R.shape[1])
    C = (1.0 - shrinkage) * C + shrinkage * np.diag(np.diag(C))
    C = 0.5 * (C + C.T)
    vals, vecs = np.linalg.eigh(C)
    if vals.min() < 0:
        C = (vecs * np.clip(vals, 0, None)) @ vecs.T
    n = R.shape[1]
    out = np.zeros((n + 1, n + 1))
    out[:n, :n] = C
    return out


@dataclass(eq=False)
class ForecastBundle:
    """Everything a backtest needs that does not depend on the trade-off parameters."""

    mu: np.ndarray          # (days, n+1) return forecasts, cash last
    sigma: np.ndarray       # (days, n+1, n+1)
    lam_max: np.ndarray     # (days,) largest covariance eigenvalue
    lam_scaled: np.ndarray  # (days,) largest correlation eigenvalue
    vol_fc: np.ndarray      # (days, n)
    volume_fc: np.ndarray   # (days, n)
    realized: np.ndarray    # (days, n) next-day returns booked after trading
    day_vol: np.ndarray     # (days, n) realized vol on the trading day
    day_volume: np.ndarray  # (days, n)
    seed: int


def build_forecasts(data: MarketData, cfg: BacktestConfig, seed: int) -> ForecastBundle:
    if data.n_days <= cfg.burn_in + 1:
        raise ValueError("market history too short for the burn-in")
    R = data.returns()
    dv = estimate_volatility(data.open, data.close)
    vol_ma = moving_average(dv, cfg.ma_window)
    volu_ma = moving_average(data.volume, cfg.ma_window)
    days = np.arange(cfg.burn_in, data.n_days - 1)
    n = data.n_assets
    mu = np.zeros((len(days), n + 1))
    sigma = np.empty((len(days), n + 1, n + 1))
    lam = np.empty(len(days))
    lam_c = np.empty(len(days))
    for k, t in enumerate(days):
        mu[k, :n] = forecast_returns(R[t + 1], vol_ma[t], cfg.noise_scale, [seed, int(t)])
        sigma[k] = forecast_covariance(R[1 : t + 1], cfg.cov_window, cfg.shrinkage)
        lam[k] = max(np.linalg.eigvalsh(sigma[k]).max(), 0.0)
        lam_c[k] = scaled_lmax(sigma[k])
    return ForecastBundle(
        mu=mu,
        sigma=sigma,
        lam_max=lam,
        lam_scaled=lam_c,
        vol_fc=vol_ma[days].copy(),
        volume_fc=volu_ma[days].copy(),
        realized=R[days + 1].copy(),
        day_vol=dv[days].copy(),
        day_volume=np.asarray(data.volume)[days].copy(),
        seed=int(seed),
    )


# --- simulation kernel -------------------------------------------------------


@njit(cache=True, error_model="numpy")
def _simulate(mu, sigma, lam_max, lam_scaled, vol_fc, volume_fc, realized, day_vol, day_volume,
              g_risk, g_trade, g_hold, half_spread, impact, borrow, lo, hi,
              horizon, value0, kkt_tol, max_iter):
    days, n1 = mu.shape
    n = n1 - 1
    daily = np.empty(days)
    turnover = np.empty(days)
    values = np.empty(days + 1)
    weights = np.empty((days, n1))
    w = np.zeros(n1)
    w[n] = 1.0
    x_warm = w.copy()
    X_warm = np.zeros((horizon, n1))
    for k in range(horizon):
        X_warm[k] = w
    value = value0
    values[0] = value
    a = np.zeros(n1)
    c = np.zeros(n1)
    hb = np.zeros(n1)
    tvec = np.empty(n1)
    status = 0
    for d in range(days):
        for i in range(n):
            vol = max(volume_fc[d, i], 1e-6 * value)
            a[i] = g_trade * half_spread
            c[i] = g_trade * impact * vol_fc[d, i] * math.sqrt(value / vol)
            hb[i] = g_hold * borrow
        L = g_risk * lam_max[d]
        if horizon == 1:
            _metric_steps(sigma[d], g_risk, lam_scaled[d], tvec)
            x, res, it = _fista(mu[d], sigma[d], g_risk, tvec, w, a, c, hb, lo, hi, x_warm,
                                kkt_tol, OBJ_TOL, OBJ_WINDOW, max_iter)
            if it >= max_iter and res > kkt_tol:
                status = -(d + 1)
                break
            x_warm[:] = x
        else:
            MU = np.empty((horizon, n1))
            SG = np.empty((horizon, n1, n1))
            for k in range(horizon):
                MU[k] = mu[d]
                SG[k] = sigma[d]
            X, res, it = _condat_vu(MU, SG, g_risk, L, w, a, c, hb, lo, hi, X_warm,
                                    kkt_tol, OBJ_TOL, OBJ_WINDOW, max_iter, DUAL_STEP)
            if it >= max_iter and res > kkt_tol:
                status = -(d + 1)
                break
            X_warm[:, :] = X
            x = X[0].copy()
        if not np.all(np.isfinite(x)):
            status = -(d + 1)
            break
        tc = 0.0
        hc = 0.0
        turn = 0.0
        for i in range(n):
            u = abs(x[i] - w[i])
            turn += u
            vol = max(day_volume[d, i], 1e-6 * value)
            tc += half_spread * u + impact * day_vol[d, i] * u * math.sqrt(u) * math.sqrt(value / vol)
            if x[i] < 0.0:
                hc -= borrow * x[i]
        gross = 0.0
        for i in range(n):
            gross += x[i] * realized[d, i]
        net = gross - tc - hc
        daily[d] = net
        turnover[d] = turn
        weights[d] = x
        # drift holdings; costs are paid out of cash
        denom = 1.0 + net
        if not denom > 0.0:
            status = days + d + 1
            break
        for i in range(n):
            w[i] = x[i] * (1.0 + realized[d, i]) / denom
        w[n] = (x[n] - tc - hc) / denom
        value = value * denom
        values[d + 1] = value
    return daily, turnover, values, weights, status


class BacktestError(RuntimeError):
    def __init__(self, message, day_index):
        super().__init__(message)
        self.day_index = day_index


def run_backtest(data_or_bundle, hp: HyperParams, cfg: BacktestConfig = BacktestConfig(),
                 costs: CostParams = CostParams(), cons: ConstraintSet = ConstraintSet(),
                 seed: int = 0) -> BacktestResult:
    """Simulate one set of trade-off parameters; ``data_or_bundle`` may be precomputed."""
    if isinstance(data_or_bundle, ForecastBundle):
        bundle = data_or_bundle
    else:
        bundle = build_forecasts(data_or_bundle, cfg, seed)
    n = bundle.vol_fc.shape[1]
    lo, hi = cons.bounds(n)
    daily, turnover, values, weights, status = _simulate(
        bundle.mu, bundle.sigma, bundle.lam_max, bundle.lam_scaled, bundle.vol_fc, bundle.volume_fc,
        bundle.realized, bundle.day_vol, bundle.day_volume,
        float(hp.gamma_risk), float(hp.gamma_trade), float(hp.gamma_hold),
        costs.half_spread, costs.impact_coeff, costs.borrow_cost, lo, hi,
        int(cfg.horizon), float(cfg.initial_value), float(cfg.kkt_tol), MAX_ITER,
    )
    if status < 0:
        raise BacktestError(f"solver failed on trading day {-status - 1}", -status - 1)
    if status > 0:
        day = status - len(daily) - 1
        raise BacktestError(f"portfolio value wiped out on trading day {day}", day)
    return BacktestResult(
        daily_returns=daily,
        objectives=annualize(daily, cfg.annualization_days),
        trades_executed=turnover,
        evaluation_seed=bundle.seed,
        values=values,
        weights=weights,
    )


class PortfolioBacktest:
    """Candidate genes -> (risk %, return %) through a full backtest.

    Counts simulator calls in ``calls``; forecasts are built once.
    """

    def __init__(self, data: MarketData, cfg: BacktestConfig = BacktestConfig(),
                 costs: CostParams = CostParams(), cons: ConstraintSet = ConstraintSet(),
                 seed: int = 0):
        self.cfg, self.costs, self.cons, self.seed = cfg, costs, cons, seed
        self.bundle = build_forecasts(data, cfg, seed)
        self.calls = 0

    def decode(self, genes) -> HyperParams:
        return self.cfg.bounds.decode(genes)

    def run(self, genes) -> BacktestResult:
        return run_backtest(self.bundle, self.decode(genes), self.cfg, self.costs, self.cons)

    def __call__(self, genes) -> ObjectivePoint:
        self.calls += 1
        return self.run(genes).objectives


# --- data sources ------------------------------------------------------------


@dataclass(frozen=True)
class SyntheticSpec:
    drift: tuple = (0.02, 0.15)
    vol: tuple = (0.15, 0.35)
    correlation: float = 0.3
    intraday: float = 0.6
    volume_mean: float = 5e7
    volume_sigma: float = 0.5
    start_price: float = 100.0


def gen_synthetic(n_assets: int, n_days: int, seed: int,
                  spec: SyntheticSpec = SyntheticSpec()) -> MarketData:
    """Correlated geometric Brownian closes with perturbed opens and log-normal volumes."""
    if n_assets < 1 or n_days < 2:
        raise ValueError("need n_assets >= 1 and n_days >= 2")
    rng = np.random.default_rng(seed)
    drift = rng.uniform(*spec.drift, size=n_assets)
    vol = rng.uniform(*spec.vol, size=n_assets)
    corr = np.full((n_assets, n_assets), spec.correlation)
    np.fill_diagonal(corr, 1.0)
    chol = np.linalg.cholesky(corr)
    dt = 1.0 / 250.0
    z = rng.standard_normal((n_days, n_assets)) @ chol.T
    log_ret = (drift - 0.5 * vol**2) * dt + vol * math.sqrt(dt) * z
    log_ret[0] = 0.0
    close = spec.start_price * np.exp(np.cumsum(log_ret, axis=0))
    gap = spec.intraday * vol * math.sqrt(dt) * rng.standard_normal((n_days, n_assets))
    prev = np.vstack([np.full(n_assets, spec.start_price), close[:-1]])
    open_ = prev * np.exp(gap)
    volume = spec.volume_mean * np.exp(
        spec.volume_sigma * rng.standard_normal((n_days, n_assets)) - 0.5 * spec.volume_sigma**2
    )
    dates = np.busday_offset(np.datetime64("2012-01-02"), np.arange(n_days), roll="forward")
    assets = tuple(f"A{i:02d}" for i in range(n_assets))
    return MarketData(dates, assets, open_, close, volume)


CSV_HEADER = ["date", "asset", "open", "close", "volume"]


class CSVFormatError(ValueError):
    pass


def save_csv(data: MarketData, path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(CSV_HEADER)
        for t, day in enumerate(data.dates):
            for j, asset in enumerate(data.assets):
                w.writerow([str(day), asset, repr(float(data.open[t, j])),
                            repr(float(data.close[t, j])), repr(float(data.volume[t, j]))])


def load_csv(path) -> MarketData:
    """Read ``date,asset,open,close,volume`` rows; assets missing any date are dropped."""
    rows: dict[str, dict[np.datetime64, tuple]] = {}
    with open(Path(path), newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or [h.strip().lower() for h in header] != CSV_HEADER:
            raise CSVFormatError(f"line 1: expected header {','.join(CSV_HEADER)}")
        for lineno, rec in enumerate(reader, start=2):
            if not rec:
                continue
            if len(rec) != 5:
                raise CSVFormatError(f"line {lineno}: expected 5 fields, got {len(rec)}")
            try:
                day = np.datetime64(rec[0].strip(), "D")
            except ValueError:
                raise CSVFormatError(f"line {lineno}, column date: bad date {rec[0]!r}") from None
            vals = []
            for col, cell in zip(CSV_HEADER[2:], rec[2:]):
                try:
                    vals.append(float(cell))
                except ValueError:
                    raise CSVFormatError(
                        f"line {lineno}, column {col}: not a number {cell!r}") from None
            asset = rec[1].strip()
            if day in rows.setdefault(asset, {}):
                raise CSVFormatError(f"line {lineno}: duplicate row for {asset} on {day}")
            rows[asset][day] = tuple(vals)
    if not rows:
        raise CSVFormatError("no data rows")
    all_dates = sorted(set().union(*[set(v) for v in rows.values()]))
    keep = []
    for asset in sorted(rows):
        if len(rows[asset]) == len(all_dates):
            keep.append(asset)
        else:
            warnings.warn(f"dropping {asset}: missing {len(all_dates) - len(rows[asset])} dates")
    if not keep:
        raise CSVFormatError("no asset covers the full date range")
    arr = np.array([[rows[a][d] for a in keep] for d in all_dates])
    return MarketData(np.array(all_dates), tuple(keep), arr[:, :, 0], arr[:, :, 1], arr[:, :, 2])
