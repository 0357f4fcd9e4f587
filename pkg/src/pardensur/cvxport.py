"""Single- and multi-period mean-variance optimization with trading/holding costs.

Weights carry the risky assets first and cash last.  The problem solved each
period is

    maximise  mu'w - gamma/2 w'Sigma w - gamma_trade * phi_trade(w - w_prev)
              - gamma_hold * phi_hold(w)
    s.t.      1'w = 1,  lo <= w <= hi

with a linear half-spread plus 3/2-power impact trading cost and a linear
borrow cost on short positions.  H = 1 runs accelerated proximal gradient
with an exact proximal step (per-coordinate closed form plus a scalar root
search on the budget multiplier).  H >= 2 couples periods through the trade
costs and runs a primal-dual (Condat-Vu) splitting instead.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from numba import njit

MAX_ITER = 100_000
KKT_TOL = 1e-8
OBJ_TOL = 1e-10
OBJ_WINDOW = 50
DUAL_STEP = 0.1  # initial dual step of the multi-period splitting


@dataclass(frozen=True)
class PeriodForecast:
    """Per-period forecasts; ``mu``/``sigma`` include the cash entry last."""

    mu: np.ndarray
    sigma: np.ndarray
    day_vol: np.ndarray
    volume: np.ndarray

    @property
    def n_assets(self) -> int:
        return len(self.mu) - 1


@dataclass(frozen=True)
class TradeOffParams:
    gamma_risk: float
    gamma_trade: float = 0.0
    gamma_hold: float = 0.0

    def __post_init__(self):
        vals = (self.gamma_risk, self.gamma_trade, self.gamma_hold)
        if not all(math.isfinite(v) for v in vals):
            raise ValueError("trade-off parameters must be finite")
        if self.gamma_risk < 0 or self.gamma_trade < 0 or self.gamma_hold < 0:
            raise ValueError("trade-off parameters must be non-negative")


@dataclass(frozen=True)
class CostParams:
    half_spread: float = 0.00025
    impact_coeff: float = 1.0
    borrow_cost: float = 0.0001

    def __post_init__(self):
        if min(self.half_spread, self.impact_coeff, self.borrow_cost) < 0:
            raise ValueError("cost parameters must be non-negative")


@dataclass(frozen=True)
class ConstraintSet:
    long_only: bool = True
    max_weight: float | None = None
    max_cash: float | None = None
    min_cash: float | None = None

    def bounds(self, n_assets: int) -> tuple[np.ndarray, np.ndarray]:
        lo = np.full(n_assets + 1, 0.0 if self.long_only else -np.inf)
        hi = np.full(n_assets + 1, np.inf)
        if self.max_weight is not None:
            hi[:-1] = self.max_weight
        if self.max_cash is not None:
            hi[-1] = self.max_cash
        if self.min_cash is not None:
            lo[-1] = self.min_cash
        if lo.sum() > 1.0 or hi.sum() < 1.0 or np.any(lo > hi):
            raise ValueError("constraint set admits no fully invested portfolio")
        return lo, hi


class SolverError(RuntimeError):
    """Raised when the iteration cap is hit; carries the best iterate."""

    def __init__(self, message, weights=None, residual=None):
        super().__init__(message)
        self.weights = weights
        self.residual = residual


def repair_psd(sigma: np.ndarray) -> np.ndarray:
    """Symmetrize and clip negative eigenvalues to zero."""
    S = 0.5 * (np.asarray(sigma, dtype=float) + np.asarray(sigma, dtype=float).T)
    vals, vecs = np.linalg.eigh(S)
    if vals.min() >= 0:
        return S
    vals = np.clip(vals, 0.0, None)
    return (vecs * vals) @ vecs.T


def _volume_floor(volume, portfolio_value):
    volume = np.asarray(volume, dtype=float)
    if np.any(volume < 0):
        raise ValueError("volumes must be non-negative")
    return np.maximum(volume, 1e-6 * portfolio_value)


def phi_trade(u, day_vol, volume, portfolio_value, costs: CostParams = CostParams()) -> float:
    """Trading cost as a fraction of portfolio value for asset trades ``u``.

    ``u`` may include a trailing cash entry, which costs nothing.
    """
    day_vol = np.asarray(day_vol, dtype=float)
    n = len(day_vol)
    ua = np.abs(np.asarray(u, dtype=float)[:n])
    vol = _volume_floor(volume, portfolio_value)
    impact = costs.impact_coeff * day_vol * ua**1.5 * np.sqrt(portfolio_value / vol)
    return float(np.sum(costs.half_spread * ua + impact))


def phi_hold(w, costs: CostParams = CostParams(), n_assets: int | None = None) -> float:
    """Borrow cost on short asset exposure; cash (last entry) is exempt."""
    w = np.asarray(w, dtype=float)
    assets = w[:-1] if n_assets is None else w[:n_assets]
    return float(costs.borrow_cost * np.sum(np.maximum(-assets, 0.0)))


def cost_coefficients(forecast: PeriodForecast, params: TradeOffParams, costs: CostParams,
                      portfolio_value: float):
    """Scaled per-coordinate (spread, impact, borrow) coefficients, cash zeroed."""
    n = forecast.n_assets
    vol = _volume_floor(forecast.volume, portfolio_value)
    a = np.zeros(n + 1)
    c = np.zeros(n + 1)
    hb = np.zeros(n + 1)
    a[:n] = params.gamma_trade * costs.half_spread
    c[:n] = (params.gamma_trade * costs.impact_coeff * np.asarray(forecast.day_vol, float)
             * np.sqrt(portfolio_value / vol))
    hb[:n] = params.gamma_hold * costs.borrow_cost
    return a, c, hb


# --- compiled kernels --------------------------------------------------------


@njit(cache=True, error_model="numpy")
def _stationary(v, t, p, a, c, hb, s, left_of_zero):
    """Stationary point of the prox objective on the piece where sign(x-p)=s."""
    h = -hb if left_of_zero else 0.0
    C = s * (p - v) / t + a + s * h
    if C >= 0.0:
        return p
    beta = 1.5 * c
    if beta == 0.0:
        z = math.sqrt(-C * t)
    else:
        z = -2.0 * C / (beta + math.sqrt(beta * beta - 4.0 * C / t))
    return p + s * z * z


@njit(cache=True, error_model="numpy")
def _slope(q, v, t, p, a, c, hb, side):
    """One-sided derivative (side=-1 left, +1 right) of the prox objective at q."""
    g = (q - v) / t
    if q > p:
        g += a + 1.5 * c * math.sqrt(q - p)
    elif q < p:
        g -= a + 1.5 * c * math.sqrt(p - q)
    else:
        g += side * a
    if q < 0.0 or (q == 0.0 and side < 0):
        g -= hb
    return g


@njit(cache=True, error_model="numpy")
def _prox_coord(v, t, p, a, c, hb, lo, hi):
    """argmin_x (x-v)^2/(2t) + a|x-p| + c|x-p|^1.5 + hb*max(-x,0) on [lo, hi]."""
    k1 = min(p, 0.0)
    k2 = max(p, 0.0)
    if _slope(k2, v, t, p, a, c, hb, 1) < 0.0:
        x = _stationary(v, t, p, a, c, hb, 1.0, False)
    elif _slope(k1, v, t, p, a, c, hb, -1) > 0.0:
        x = _stationary(v, t, p, a, c, hb, -1.0, True)
    elif _slope(k2, v, t, p, a, c, hb, -1) <= 0.0:
        x = k2
    elif _slope(k1, v, t, p, a, c, hb, 1) >= 0.0:
        x = k1
    elif p > 0.0:
        # strictly inside (0, p)
        x = _stationary(v, t, p, a, c, hb, -1.0, False)
    else:
        # strictly inside (p, 0)
        x = _stationary(v, t, p, a, c, hb, 1.0, True)
    if x < lo:
        x = lo
    elif x > hi:
        x = hi
    return x


@njit(cache=True, error_model="numpy")
def _prox_shifted(v, shift, t, p, a, c, hb, lo, hi, out):
    total = 0.0
    for i in range(v.size):
        out[i] = _prox_coord(v[i] - t[i] * shift, t[i], p[i], a[i], c[i], hb[i], lo[i], hi[i])
        total += out[i]
    return total - 1.0


@njit(cache=True, error_model="numpy")
def _prox_budget(v, t, p, a, c, hb, lo, hi, shift0, out):
    """Exact prox in the diagonal metric ``t`` including the budget row.

    Returns the budget multiplier, reusable as the next call's warm start.
    """
    s0 = _prox_shifted(v, shift0, t, p, a, c, hb, lo, hi, out)
    if s0 == 0.0:
        return shift0
    step = max(abs(s0) / t.sum(), 1e-300)
    xa, sa = shift0, s0
    xb = shift0 + step if s0 > 0 else shift0 - step
    sb = _prox_shifted(v, xb, t, p, a, c, hb, lo, hi, out)
    while (sb > 0.0) == (sa > 0.0) and sb != 0.0:
        xa, sa = xb, sb
        step *= 4.0
        xb = xb + step if s0 > 0 else xb - step
        sb = _prox_shifted(v, xb, t, p, a, c, hb, lo, hi, out)
        if step > 1e30:
            break
    if sb == 0.0:
        return xb
    # Illinois regula falsi on the sign change between xa and xb
    side = 0
    for _ in range(200):
        den = sb - sa
        xm = (xa * sb - xb * sa) / den if den != 0.0 else 0.5 * (xa + xb)
        if not (min(xa, xb) < xm < max(xa, xb)):
            xm = 0.5 * (xa + xb)
        sm = _prox_shifted(v, xm, t, p, a, c, hb, lo, hi, out)
        if sm == 0.0 or abs(xb - xa) <= 1e-15 * (1.0 + abs(xm)):
            return xm
        if (sm > 0.0) != (sb > 0.0):
            xa, sa = xb, sb
            xb, sb = xm, sm
            side = 0
        else:
            xb, sb = xm, sm
            if side == 1:
                sa *= 0.5
            side = 1
        if abs(sm) <= 1e-15:
            return xm
    return xb


@njit(cache=True, error_model="numpy")
def _objective(w, mu, S, gamma, p, a, c, hb):
    """Minimization objective (negated utility) of one period."""
    val = 0.0
    n = w.size
    for i in range(n):
        si = 0.0
        for j in range(n):
            si += S[i, j] * w[j]
        val += 0.5 * gamma * w[i] * si - mu[i] * w[i]
        d = abs(w[i] - p[i])
        val += a[i] * d + c[i] * d * math.sqrt(d)
        if w[i] < 0.0:
            val -= hb[i] * w[i]
    return val


def scaled_lmax(S) -> float:
    """Largest eigenvalue of ``S`` after unit-diagonal scaling (zero-variance rows dropped)."""
    S = np.asarray(S, dtype=float)
    d = np.diag(S).copy()
    keep = d > 0
    if not keep.any():
        return 0.0
    r = 1.0 / np.sqrt(d[keep])
    C = S[np.ix_(keep, keep)] * r[:, None] * r[None, :]
    return float(max(np.linalg.eigvalsh(0.5 * (C + C.T)).max(), 0.0))


@njit(cache=True, error_model="numpy")
def _metric_steps(S, gamma, lmax_scaled, out):
    """Jacobi-metric steps ``1 / (lmax * gamma * S_ii)``; zero-variance rows get the mean."""
    n = out.size
    total = 0.0
    count = 0
    for i in range(n):
        if S[i, i] > 0.0:
            total += S[i, i]
            count += 1
    fill = total / count if count > 0 else 0.0
    for i in range(n):
        d = gamma * (S[i, i] if S[i, i] > 0.0 else fill) * lmax_scaled
        out[i] = 1.0 / d if d > 1e-10 else 1e10
    return out


@njit(cache=True, error_model="numpy")
def _fista(mu, S, gamma, t, p, a, c, hb, lo, hi, x0, kkt_tol, obj_tol, obj_window, max_iter):
    """Accelerated proximal gradient in the diagonal metric with per-coordinate steps ``t``."""
    n = mu.size
    x = x0.copy()
    y = x0.copy()
    xn = np.empty(n)
    v = np.empty(n)
    shift = 0.0
    mom = 1.0
    res = np.inf
    last_obj = np.inf
    it = 0
    for it in range(1, max_iter + 1):
        for i in range(n):
            g = -mu[i]
            for j in range(n):
                g += gamma * S[i, j] * y[j]
            v[i] = y[i] - t[i] * g
        shift = _prox_budget(v, t, p, a, c, hb, lo, hi, shift, xn)
        res = 0.0
        restart = 0.0
        for i in range(n):
            d = abs(xn[i] - y[i]) / t[i]
            if d > res:
                res = d
            restart += (y[i] - xn[i]) * (xn[i] - x[i]) / t[i]
        if res <= kkt_tol:
            x[:] = xn
            break
        if restart > 0.0:
            mom = 1.0
            y[:] = xn
        else:
            mom_n = 0.5 * (1.0 + math.sqrt(1.0 + 4.0 * mom * mom))
            beta = (mom - 1.0) / mom_n
            for i in range(n):
                y[i] = xn[i] + beta * (xn[i] - x[i])
            mom = mom_n
        x[:] = xn
        if it % obj_window == 0:
            obj = _objective(x, mu, S, gamma, p, a, c, hb)
            if abs(last_obj - obj) <= obj_tol:
                break
            last_obj = obj
    return x, res, it


@njit(cache=True, error_model="numpy")
def _box_budget_project(v, lo, hi, out):
    n = v.size
    z = np.zeros(n)
    return _prox_budget(v, np.ones(n), z, z, z, z, lo, hi, 0.0, out)


@njit(cache=True, error_model="numpy")
def _condat_vu(mu, S, gamma, L, p, a, c, hb, lo, hi, X0, kkt_tol, obj_tol, obj_window,
               max_iter, dual_step):
    """Primal-dual splitting for the H-period plan.

    f = quadratic terms, g = hold cost + box + budget per period,
    h(DW) = trade costs on consecutive differences (first against ``p``).
    """
    H, n = mu.shape
    norm_d2 = 4.0
    sigma = dual_step
    tau = 0.99 / (0.5 * L + sigma * norm_d2)
    adapt = 0.5
    balance = 5.0
    X = X0.copy()
    Y = np.zeros((H, n))
    Xn = np.empty((H, n))
    U = np.empty((H, n))
    v = np.empty(n)
    row = np.empty(n)
    zeros = np.zeros(n)
    tvec = np.empty(n)
    shifts = np.zeros(H)
    res = np.inf
    last_obj = np.inf
    it = 0
    for it in range(1, max_iter + 1):
        # primal step
        for k in range(H):
            for i in range(n):
                g = -mu[k, i]
                for j in range(n):
                    g += gamma * S[k, i, j] * X[k, j]
                dty = Y[k, i] - (Y[k + 1, i] if k + 1 < H else 0.0)
                v[i] = X[k, i] - tau * (g + dty)
            tvec[:] = tau
            shifts[k] = _prox_budget(v, tvec, zeros, zeros, zeros, hb, lo, hi, shifts[k], row)
            Xn[k] = row
        # dual step on trades of the extrapolated point
        for k in range(H):
            for i in range(n):
                cur = 2.0 * Xn[k, i] - X[k, i]
                prev = p[i] if k == 0 else 2.0 * Xn[k - 1, i] - X[k - 1, i]
                U[k, i] = Y[k, i] + sigma * (cur - prev)
        res_p = 0.0
        res_d = 0.0
        for k in range(H):
            for i in range(n):
                # Moreau: prox_{sigma h*}(u) = u - sigma prox_{h/sigma}(u/sigma)
                w = _prox_coord(U[k, i] / sigma, 1.0 / sigma, 0.0, a[i], c[i], 0.0,
                                -np.inf, np.inf)
                yn = U[k, i] - sigma * w
                res_d = max(res_d, abs(yn - Y[k, i]))
                Y[k, i] = yn
                res_p = max(res_p, abs(Xn[k, i] - X[k, i]))
        X[:, :] = Xn
        res = max(res_p / tau, res_d / sigma)
        if res <= kkt_tol:
            break
        if it % obj_window == 0:
            obj = 0.0
            for k in range(H):
                prev = p if k == 0 else X[k - 1]
                obj += _objective(X[k], mu[k], S[k], gamma, prev, a, c, hb)
            if abs(last_obj - obj) <= obj_tol:
                break
            last_obj = obj
            # residual balancing with a decaying adaptation factor
            rp = res_p / tau
            rd = res_d / sigma
            if rp > balance * rd:
                sigma *= 1.0 - adapt
            elif rd > balance * rp:
                sigma /= 1.0 - adapt
            adapt *= 0.95
            tau = 0.99 / (0.5 * L + sigma * norm_d2)
    return X, res, it


# --- public surface ----------------------------------------------------------


def _prepare(forecast: PeriodForecast):
    mu = np.ascontiguousarray(forecast.mu, dtype=float)
    n = mu.size
    if np.shape(forecast.sigma) != (n, n):
        raise ValueError(f"sigma must be {n}x{n}")
    if not (np.all(np.isfinite(mu)) and np.all(np.isfinite(forecast.sigma))):
        raise ValueError("forecasts must be finite")
    S = repair_psd(forecast.sigma)
    return mu, np.ascontiguousarray(S)


def solve_spo(forecast: PeriodForecast, params: TradeOffParams, costs: CostParams,
              cons: ConstraintSet, w_prev, portfolio_value: float = 1.0,
              kkt_tol: float = KKT_TOL, max_iter: int = MAX_ITER) -> np.ndarray:
    """Optimal single-period weights (cash last)."""
    return solve_mpo([forecast], params, costs, cons, w_prev, portfolio_value,
                     kkt_tol=kkt_tol, max_iter=max_iter)[0]


def solve_mpo(forecasts, params: TradeOffParams, costs: CostParams, cons: ConstraintSet,
              w_prev, portfolio_value: float = 1.0, kkt_tol: float = KKT_TOL,
              max_iter: int = MAX_ITER) -> list[np.ndarray]:
    """Plan of H weight vectors; MPC callers trade only the first."""
    forecasts = list(forecasts)
    if not forecasts:
        raise ValueError("need at least one period forecast")
    if not (math.isfinite(portfolio_value) and portfolio_value > 0):
        raise ValueError("portfolio value must be positive")
    n = forecasts[0].n_assets
    lo, hi = cons.bounds(n)
    p = np.ascontiguousarray(w_prev, dtype=float)
    if p.shape != (n + 1,):
        raise ValueError(f"w_prev must have {n + 1} entries")
    if not np.all(np.isfinite(p)):
        raise ValueError("w_prev must be finite")
    # trading cost coefficients come from the first period's vol/volume forecasts
    a, c, hb = cost_coefficients(forecasts[0], params, costs, portfolio_value)
    if len(forecasts) == 1:
        mu, S = _prepare(forecasts[0])
        t = _metric_steps(S, params.gamma_risk, scaled_lmax(S), np.empty(n + 1))
        x0 = _feasible_start(p, lo, hi)
        x, res, it = _fista(mu, S, params.gamma_risk, t, p, a, c, hb, lo, hi, x0,
                            kkt_tol, OBJ_TOL, OBJ_WINDOW, max_iter)
        if it >= max_iter and res > kkt_tol:
            raise SolverError(f"no convergence after {it} iterations", x, res)
        return [x]
    prepared = [_prepare(f) for f in forecasts]
    mu = np.ascontiguousarray(np.stack([m for m, _ in prepared]))
    S = np.ascontiguousarray(np.stack([s for _, s in prepared]))
    L = params.gamma_risk * max(max(np.linalg.eigvalsh(s).max() for s in S), 0.0)
    x0 = _feasible_start(p, lo, hi)
    X0 = np.ascontiguousarray(np.tile(x0, (len(forecasts), 1)))
    X, res, it = _condat_vu(mu, S, params.gamma_risk, L, p, a, c, hb, lo, hi, X0,
                            kkt_tol, OBJ_TOL, OBJ_WINDOW, max_iter, DUAL_STEP)
    if it >= max_iter and res > kkt_tol:
        raise SolverError(f"no convergence after {it} iterations", X, res)
    return [row.copy() for row in X]


def _feasible_start(p, lo, hi):
    out = np.empty_like(p)
    _box_budget_project(np.ascontiguousarray(p, dtype=float), lo, hi, out)
    return out


def objective(w, forecast: PeriodForecast, params: TradeOffParams, costs: CostParams,
              w_prev, portfolio_value: float = 1.0) -> float:
    """Single-period utility being maximised (higher is better)."""
    w = np.asarray(w, dtype=float)
    u = w - np.asarray(w_prev, dtype=float)
    n = forecast.n_assets
    ret = float(w @ forecast.mu)
    risk = 0.5 * params.gamma_risk * float(w @ forecast.sigma @ w)
    trade = phi_trade(u[:n], forecast.day_vol, forecast.volume, portfolio_value, costs)
    hold = phi_hold(w, costs, n)
    return ret - risk - params.gamma_trade * trade - params.gamma_hold * hold
