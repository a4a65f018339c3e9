"""Forward Euler / backward least-squares Monte Carlo solver for the coupled FBSDE.

Forward:   P_{n+1} = P_n (1 + f dt + sum_{j, k<=m(j)} sigma^(jk) dH^(jk)_n)
Backward:  W_N = h(P_N)
           What_n = E[W_{n+1} | P_n]
           Z_n    = E[(W_{n+1} - What_n) dH_n | P_n] / dt     (all k <= K(j))
           W_n    = What_n - g(t_n, P_n, What_n, Z_n) dt

Conditional expectations are global polynomial regressions on the step-n
prices.  Picard iteration re-runs the forward pass with the previous
iterate's fitted (W, Z) until W stops moving.
"""

from __future__ import annotations

import itertools
import logging
from dataclasses import dataclass, field

import numpy as np

from .errors import NoConvergence, NonFinite, RankDeficientRegression
from .market_model import MarketModel, assemble_sigma, drift_g, hedge_matrix, payoff_h
from .path_engine import ScenarioSet

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class RegressionSpec:
    degree: int = 8
    cutoff: float = 1e-10

    def __post_init__(self):
        if self.degree < 0:
            raise ValueError("regression degree must be >= 0")
        if not self.cutoff > 0:
            raise ValueError("singular-value cutoff must be > 0")


@dataclass(frozen=True)
class SolverConfig:
    max_iterations: int = 10
    tolerance: float = 1e-8
    regression: RegressionSpec = field(default_factory=RegressionSpec)
    raise_on_no_convergence: bool = True

    def __post_init__(self):
        if self.max_iterations < 1:
            raise ValueError("picard max iterations must be >= 1")
        if not self.tolerance > 0:
            raise ValueError("picard tolerance must be > 0")


@dataclass(frozen=True)
class StepFit:
    """Regression of ``[What, Z * dt]`` on standardized price features at one step."""

    center: np.ndarray
    scale: np.ndarray
    coef: np.ndarray  # [features, 1 + M]
    exponents: tuple
    condition: float

    def predict(self, P: np.ndarray) -> np.ndarray:
        return polynomial_features(P, self.exponents, self.center, self.scale) @ self.coef


@dataclass(eq=False)
class FBSDESolution:
    P: np.ndarray  # [paths, N+1, d]
    W: np.ndarray  # [paths, N+1]
    Z: np.ndarray  # [paths, N, M]
    scenario: ScenarioSet
    iterations: int
    residuals: list[float]
    fits: list[StepFit]
    converged: bool = True
    G: np.ndarray | None = None  # [paths, N], driver g along each path

    def pathwise_values(self) -> np.ndarray:
        """W_N - sum_n g_n dt per path; its mean is the time-0 value W_0."""
        dt = self.scenario.grid.dt
        return self.W[:, -1] - self.G.sum(axis=1) * dt

    @property
    def residual(self) -> float:
        return self.residuals[-1] if self.residuals else float("nan")

    def diagnostics(self) -> dict:
        return {
            "iterations": self.iterations,
            "converged": self.converged,
            "residuals": [float(r) for r in self.residuals],
            "condition_numbers": [float(f.condition) for f in self.fits],
        }


def feature_exponents(d: int, degree: int) -> tuple[tuple[int, ...], ...]:
    """Multi-indices of total degree <= ``degree`` in ``d`` variables, graded order."""
    out = []
    for deg in range(degree + 1):
        for combo in itertools.combinations_with_replacement(range(d), deg):
            e = [0] * d
            for i in combo:
                e[i] += 1
            out.append(tuple(e))
    return tuple(out)


def polynomial_features(P, exponents, center, scale) -> np.ndarray:
    x = (np.asarray(P, dtype=float) - center) / scale
    cols = [np.prod(x ** np.asarray(e), axis=1) for e in exponents]
    return np.column_stack(cols)


def _standardize(P: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    center = P.mean(axis=0)
    scale = P.std(axis=0)
    # a degenerate (deterministic) coordinate maps to the zero column
    scale = np.where(scale > 0, scale, 1.0)
    return center, scale


def _svd_solve(X: np.ndarray, Y: np.ndarray, cutoff: float) -> tuple[np.ndarray, float]:
    U, s, Vt = np.linalg.svd(X, full_matrices=False)
    smax = s[0] if s.size else 0.0
    keep = s > cutoff * smax
    if smax == 0.0 or not keep.any():
        raise RankDeficientRegression("all singular values fall below the cutoff", location="regress")
    coef = Vt[keep].T @ ((U[:, keep].T @ Y) / s[keep, None])
    return coef, float(smax / s[keep][-1])


def regress(features, targets, spec: RegressionSpec = RegressionSpec()) -> np.ndarray:
    """Minimum-norm least squares via SVD, discarding singular values below ``cutoff * s_max``."""
    X = np.asarray(features, dtype=float)
    Y = np.asarray(targets, dtype=float)
    if X.shape[0] != Y.shape[0]:
        raise ValueError("features and targets have different row counts")
    coef, _ = _svd_solve(X, Y.reshape(len(Y), -1), spec.cutoff)
    return coef.reshape((X.shape[1],) + Y.shape[1:])


def portfolio_from_loadings(model: MarketModel, t: float, P, W, Z_full) -> np.ndarray:
    """Share holdings ``a`` solving ``(Sigma diag(P)) a = Z^(d)``; used inside the driver g.

    A singular matrix (no noise, or a zero price) gets the minimum-norm solution.
    """
    M = hedge_matrix(model, t, P, W)
    z = Z_full[:, model.traded_columns()]
    if model.d == 1:
        m = M[:, 0, :]
        safe = np.where(m != 0.0, m, 1.0)
        return np.where(m != 0.0, z / safe, 0.0)
    try:
        return np.linalg.solve(M, z[..., None])[..., 0]
    except np.linalg.LinAlgError:
        return (np.linalg.pinv(M) @ z[..., None])[..., 0]


def _step_values(model, scenario, n, fit, P_n):
    """(W_n, Z_n) from a step fit, evaluated at prices ``P_n``."""
    dt = scenario.grid.dt
    t = n * dt
    pred = fit.predict(P_n)
    W_hat = pred[:, 0]
    Z = pred[:, 1:] / dt
    a = portfolio_from_loadings(model, t, P_n, W_hat, Z)
    g = drift_g(model, t, P_n, W_hat, a, Z)
    return W_hat - g * dt, Z


def forward_prices(
    model: MarketModel, scenario: ScenarioSet, fits: list[StepFit] | None = None
) -> np.ndarray:
    """Euler scheme for the prices, using (W, Z) from ``fits`` (zero when ``None``)."""
    grid = scenario.grid
    n_paths, N, M = scenario.dH.shape
    if M != model.n_martingales:
        raise ValueError("scenario and model disagree on the martingale count")
    traded = model.traded_columns()
    P = np.empty((n_paths, N + 1, model.d))
    P[:, 0] = model.initial_prices
    zeros_W = np.zeros(n_paths)
    zeros_Z = np.zeros((n_paths, M))
    for n in range(N):
        t = n * grid.dt
        Pn = P[:, n]
        if fits is None:
            Wn, Zn = zeros_W, zeros_Z
        else:
            Wn, Zn = _step_values(model, scenario, n, fits[n], Pn)
        f = np.broadcast_to(model.coefficients.f(t, Pn, Wn, Zn), Pn.shape)
        S = assemble_sigma(model, t, Pn, Wn)  # [paths, rows, assets]
        shock = np.einsum("pri,pr->pi", S, scenario.dH[:, n, traded])
        P[:, n + 1] = Pn * (1.0 + f * grid.dt + shock)
        bad = ~np.isfinite(P[:, n + 1])
        if bad.any():
            p = int(np.argwhere(bad.any(axis=1))[0, 0])
            raise NonFinite("price path blew up", location={"path": p, "step": n + 1})
    return P


def backward_sweep(
    model: MarketModel, scenario: ScenarioSet, P: np.ndarray, config: SolverConfig = SolverConfig()
) -> tuple[np.ndarray, np.ndarray, list[StepFit], np.ndarray]:
    grid = scenario.grid
    dt = grid.dt
    n_paths, N, M = scenario.dH.shape
    exps = feature_exponents(model.d, config.regression.degree)
    if n_paths < len(exps):
        raise RankDeficientRegression(
            f"{n_paths} paths cannot support {len(exps)} regression features",
            location="solver.regression.degree",
        )
    W = np.zeros((n_paths, N + 1))
    Z = np.zeros((n_paths, N, M))
    G = np.zeros((n_paths, N))
    W[:, N] = payoff_h(model, P[:, N])
    fits: list[StepFit] = [None] * N  # type: ignore[list-item]
    cutoff = config.regression.cutoff
    for n in range(N - 1, -1, -1):
        t = n * dt
        Pn = P[:, n]
        center, scale = _standardize(Pn)
        X = polynomial_features(Pn, exps, center, scale)
        U, s, Vt = np.linalg.svd(X, full_matrices=False)
        keep = s > cutoff * s[0]
        if s[0] == 0.0 or not keep.any():
            raise RankDeficientRegression("all singular values fall below the cutoff", location={"step": n})
        Uk, sk, Vk = U[:, keep], s[keep], Vt[keep]

        def project(Y):
            return Vk.T @ ((Uk.T @ Y) / sk[:, None])

        c_w = project(W[:, n + 1, None])
        W_hat = (X @ c_w)[:, 0]
        c_z = project((W[:, n + 1] - W_hat)[:, None] * scenario.dH[:, n, :])
        Z[:, n] = (X @ c_z) / dt
        fits[n] = StepFit(center, scale, np.hstack([c_w, c_z]), exps, float(s[0] / sk[-1]))

        a = portfolio_from_loadings(model, t, Pn, W_hat, Z[:, n])
        g = drift_g(model, t, Pn, W_hat, a, Z[:, n])
        G[:, n] = g
        W[:, n] = W_hat - g * dt
    return W, Z, fits, G


def picard_solve(
    model: MarketModel, scenario: ScenarioSet, config: SolverConfig = SolverConfig()
) -> FBSDESolution:
    """Alternate forward and backward passes on a fixed scenario until W settles."""
    fits = None
    W_prev = np.zeros((scenario.n_paths, scenario.grid.N + 1))
    residuals: list[float] = []
    for it in range(1, config.max_iterations + 1):
        P = forward_prices(model, scenario, fits)
        W, Z, fits, G = backward_sweep(model, scenario, P, config)
        res = float(np.max(np.abs(W - W_prev)))
        residuals.append(res)
        log.info("picard iteration %d: sup|dW| = %.3e", it, res)
        if res <= config.tolerance:
            return FBSDESolution(P, W, Z, scenario, it, residuals, fits, True, G)
        W_prev = W
    if config.raise_on_no_convergence:
        raise NoConvergence(
            f"picard iteration did not reach tolerance {config.tolerance} in {config.max_iterations} steps",
            residuals,
        )
    return FBSDESolution(P, W, Z, scenario, config.max_iterations, residuals, fits, False, G)
