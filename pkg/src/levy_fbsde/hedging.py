"""Variance-minimizing portfolio, money-market account and capital-injection process.

Holdings ``alpha`` are share counts.  The linear map from holdings to the
loadings on the traded martingales is ``Sigma diag(P)``, so the optimal
portfolio solves ``Sigma(t, P, W) diag(P) alpha = Z^(d)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from statistics import NormalDist

import numpy as np

from .errors import SingularSigma
from .fbsde_solver import FBSDESolution
from .market_model import MarketModel, hedge_matrix
from .path_engine import TimeGrid

COND_THRESHOLD = 1e12


@dataclass(eq=False)
class HedgeResult:
    alpha: np.ndarray  # [paths, N, d]
    alpha0: np.ndarray  # [paths, N]
    P0: np.ndarray  # [paths, N+1]
    C: np.ndarray  # [paths, N+1], budget-residual form
    C_formula: np.ndarray  # [paths, N+1], stochastic-integral form
    variance_profile: np.ndarray  # [N+1], integrand estimate of E|C_t|^2
    hedgeable_profile: np.ndarray  # [N+1], first sum only
    tail_profile: np.ndarray  # [N+1], untraded martingales only
    empirical_second_moment: np.ndarray  # [N+1], mean over paths of C_t^2
    empirical_mean: np.ndarray  # [N+1]
    condition: np.ndarray  # [paths, N]

    def summary(self) -> dict:
        return {
            "alpha0_mean": self.alpha[:, 0].mean(axis=0).tolist(),
            "var_C0": float(self.variance_profile[0]),
            "var_C0_hedgeable": float(self.hedgeable_profile[0]),
            "var_C0_tail": float(self.tail_profile[0]),
            "empirical_E_C0_sq": float(self.empirical_second_moment[0]),
            "empirical_mean_C0": float(self.empirical_mean[0]),
            "max_sigma_condition": float(np.max(self.condition)) if self.condition.size else 1.0,
        }


def _condition_numbers(M: np.ndarray) -> np.ndarray:
    if M.shape[-1] == 1:
        with np.errstate(divide="ignore"):
            return np.where(M[:, 0, 0] != 0.0, 1.0, np.inf)
    with np.errstate(divide="ignore", invalid="ignore"):
        c = np.linalg.cond(M)
    return np.where(np.isfinite(c), c, np.inf)


def optimal_portfolio(
    solution: FBSDESolution, model: MarketModel, threshold: float = COND_THRESHOLD
) -> tuple[np.ndarray, np.ndarray]:
    """alpha = (Sigma diag P)^{-1} Z^(d) on every path and step, plus condition numbers."""
    P, W, Z = solution.P, solution.W, solution.Z
    n_paths, N, _ = Z.shape
    dt = solution.scenario.grid.dt
    traded = model.traded_columns()
    alpha = np.empty((n_paths, N, model.d))
    cond = np.empty((n_paths, N))
    for n in range(N):
        M = hedge_matrix(model, n * dt, P[:, n], W[:, n])
        c = _condition_numbers(M)
        bad = ~(c <= threshold)
        if bad.any():
            p = int(np.argmax(bad))
            raise SingularSigma(
                f"hedge matrix condition number {c[p]:.3e} exceeds {threshold:.1e}",
                location={"path": p, "step": n},
            )
        cond[:, n] = c
        z = Z[:, n, traded]
        if model.d == 1:
            alpha[:, n] = z / M[:, 0, :]
        else:
            alpha[:, n] = np.linalg.solve(M, z[..., None])[..., 0]
    return alpha, cond


def money_market_path(model: MarketModel, W: np.ndarray, alpha: np.ndarray, grid: TimeGrid) -> np.ndarray:
    """P0_{n+1} = P0_n exp(r(t_n, W_n, alpha_n) dt), P0_0 = 1."""
    n_paths = W.shape[0]
    log_growth = np.zeros((n_paths, grid.N + 1))
    for n in range(grid.N):
        r = np.broadcast_to(model.coefficients.r(n * grid.dt, W[:, n], alpha[:, n]), (n_paths,))
        log_growth[:, n + 1] = r * grid.dt
    # plain sequential product keeps r == 0 exactly at 1
    P0 = np.ones((n_paths, grid.N + 1))
    for n in range(grid.N):
        P0[:, n + 1] = P0[:, n] * np.exp(log_growth[:, n + 1])
    return P0


def money_market_weight(W, alpha, P, P0) -> np.ndarray:
    """alpha0 = (W - sum_i alpha_i P_i) / P0 at the rebalancing dates."""
    N = alpha.shape[1]
    return (W[:, :N] - np.sum(alpha * P[:, :N], axis=2)) / P0[:, :N]


def budget_residual(W, alpha, alpha0, P, P0) -> np.ndarray:
    """dW - sum_i alpha_i dP_i - alpha0 dP0 per step: the discrete capital increment."""
    dW = np.diff(W, axis=1)
    dP = np.diff(P, axis=1)
    dP0 = np.diff(P0, axis=1)
    return dW - np.sum(alpha * dP, axis=2) - alpha0 * dP0


def capital_process(solution: FBSDESolution, alpha: np.ndarray, P0: np.ndarray) -> np.ndarray:
    """C_n = -sum_{m >= n} (budget residual)_m, so that C_N = 0 and C_{n+1} - C_n = residual_n."""
    P, W = solution.P, solution.W
    alpha0 = money_market_weight(W, alpha, P, P0)
    res = budget_residual(W, alpha, alpha0, P, P0)
    C = np.zeros_like(W)
    C[:, :-1] = -np.cumsum(res[:, ::-1], axis=1)[:, ::-1]
    return C


def _loading_gap(solution: FBSDESolution, alpha: np.ndarray, model: MarketModel) -> np.ndarray:
    """Per (path, step, martingale): hedge loading minus Z on traded columns, -Z on the tail."""
    P, W, Z = solution.P, solution.W, solution.Z
    N = Z.shape[1]
    dt = solution.scenario.grid.dt
    traded = model.traded_columns()
    gap = -Z.copy()
    for n in range(N):
        M = hedge_matrix(model, n * dt, P[:, n], W[:, n])
        gap[:, n, traded] += np.einsum("prc,pc->pr", M, alpha[:, n])
    return gap


def capital_formula(solution: FBSDESolution, alpha: np.ndarray, model: MarketModel) -> np.ndarray:
    """C_n = sum_{m >= n} [ sum_traded (Sigma diag(P) alpha - Z) dH - sum_tail Z dH ]."""
    gap = _loading_gap(solution, alpha, model)
    inc = np.sum(gap * solution.scenario.dH, axis=2)
    C = np.zeros_like(solution.W)
    C[:, :-1] = np.cumsum(inc[:, ::-1], axis=1)[:, ::-1]
    return C


def objective_profiles(
    alpha: np.ndarray, Z: np.ndarray, model: MarketModel, P: np.ndarray, W: np.ndarray, grid: TimeGrid
) -> tuple[np.ndarray, np.ndarray]:
    """Hedgeable and tail parts of E int_t^T [...] ds, for every t_n (length N+1)."""
    traded = model.traded_columns()
    tail = model.tail_columns()
    N = Z.shape[1]
    hedgeable = np.zeros(Z.shape[:2])
    for n in range(N):
        M = hedge_matrix(model, n * grid.dt, P[:, n], W[:, n])
        diff = np.einsum("prc,pc->pr", M, alpha[:, n]) - Z[:, n, traded]
        hedgeable[:, n] = np.sum(diff**2, axis=1)
    tail_sq = np.sum(Z[:, :, tail] ** 2, axis=2) if tail.size else np.zeros(Z.shape[:2])

    def profile(integrand):
        per_step = integrand.mean(axis=0) * grid.dt
        out = np.zeros(N + 1)
        out[:-1] = np.cumsum(per_step[::-1])[::-1]
        return out

    return profile(hedgeable), profile(tail_sq)


def variance_objective(
    alpha: np.ndarray,
    Z: np.ndarray,
    model: MarketModel,
    P: np.ndarray,
    W: np.ndarray,
    t_index: int,
    grid: TimeGrid,
) -> float:
    """Monte Carlo value of E int_{t}^T [ |Sigma diag(P) alpha - Z^(d)|^2 + |Z_tail|^2 ] ds."""
    h, tl = objective_profiles(alpha, Z, model, P, W, grid)
    return float(h[t_index] + tl[t_index])


def hedge(solution: FBSDESolution, model: MarketModel, threshold: float = COND_THRESHOLD) -> HedgeResult:
    grid = solution.scenario.grid
    alpha, cond = optimal_portfolio(solution, model, threshold)
    P0 = money_market_path(model, solution.W, alpha, grid)
    alpha0 = money_market_weight(solution.W, alpha, solution.P, P0)
    C = capital_process(solution, alpha, P0)
    Cf = capital_formula(solution, alpha, model)
    h, tl = objective_profiles(alpha, solution.Z, model, solution.P, solution.W, grid)
    return HedgeResult(
        alpha=alpha,
        alpha0=alpha0,
        P0=P0,
        C=C,
        C_formula=Cf,
        variance_profile=h + tl,
        hedgeable_profile=h,
        tail_profile=tl,
        empirical_second_moment=np.mean(C**2, axis=0),
        empirical_mean=C.mean(axis=0),
        condition=cond,
    )


def bs_oracle(S0: float, K: float, r: float, sigma: float, T: float) -> tuple[float, float]:
    """Black-Scholes European call price and delta."""
    if sigma <= 0 or T <= 0:
        raise ValueError("need sigma > 0 and T > 0")
    if K <= 0:
        return float(S0), 1.0
    nd = NormalDist()
    vol = sigma * math.sqrt(T)
    d1 = (math.log(S0 / K) + (r + 0.5 * sigma**2) * T) / vol
    d2 = d1 - vol
    price = S0 * nd.cdf(d1) - K * math.exp(-r * T) * nd.cdf(d2)
    return price, nd.cdf(d1)


@dataclass(frozen=True)
class PositivityReport:
    negative_fraction: list[float]  # P_i < 0
    nonpositive_fraction: list[float]  # P_i <= 0, the strict reading
    most_negative: list[float]

    def as_dict(self) -> dict:
        return {
            "negative_fraction": self.negative_fraction,
            "nonpositive_fraction": self.nonpositive_fraction,
            "most_negative": self.most_negative,
        }


def positivity_check(P: np.ndarray) -> PositivityReport:
    """Per-asset share of (path, step) cells breaching zero, and the worst excursion."""
    flat = P.reshape(-1, P.shape[-1])
    return PositivityReport(
        negative_fraction=(flat < 0).mean(axis=0).tolist(),
        nonpositive_fraction=(flat <= 0).mean(axis=0).tolist(),
        most_negative=np.minimum(flat.min(axis=0), 0.0).tolist(),
    )


def jump_positivity_bound(model: MarketModel) -> float:
    """Worst relative jump ``min_i min_atom sum_rows sigma_i^(jk) p_k(x)`` for constant-vol models.

    Prices stay positive under pure jumps when this is > -1.
    """
    pi = np.asarray(model.initial_prices, dtype=float)[None]
    sig = np.asarray(model.coefficients.sigma(0.0, pi, np.zeros(1)))[0]
    worst = math.inf
    row = 0
    for mj, basis in zip(model.allocation.m, model.bases):
        if len(basis.jumps):
            pv = basis.jump_values()[:mj]  # [mj, atoms]
            moves = sig[row : row + mj].T @ pv  # [assets, atoms]
            worst = min(worst, float(moves.min()))
        row += mj
    return worst
