"""Market of one money-market account and ``d`` risky assets driven by Teugels martingales.

Index convention everywhere: ``j`` = driver (1..l), ``k`` = martingale order
(1..m(j) for traded directions, up to K(j) overall), ``i`` = asset (1..d).

All coefficient callables are vectorized over a leading batch (path) axis:

    r(t, w[n], a[n, d])            -> [n]
    f(t, pi[n, d], w[n], z[n, M])  -> [n, d]        (M = sum_j K(j))
    sigma(t, pi[n, d], w[n])       -> [n, d, d]     row (j, k), column i
    h(pi[n, d])                    -> [n]
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .levy_basis import LevySpec, TeugelsBasis, build_basis


@dataclass(frozen=True)
class MartingaleAllocation:
    m: tuple[int, ...]
    d: int

    def __post_init__(self):
        object.__setattr__(self, "m", tuple(int(x) for x in self.m))
        if not self.m or any(x < 1 for x in self.m):
            raise ValueError(f"every m(j) must be >= 1, got {list(self.m)}")
        if sum(self.m) != self.d:
            raise ValueError(f"sum of m(j) = {sum(self.m)} must equal d = {self.d}")

    @property
    def l(self) -> int:
        return len(self.m)

    def ordering(self) -> list[tuple[int, int]]:
        """Row labels of Sigma: lexicographic in (j, k), 1-based."""
        return [(j + 1, k + 1) for j, mj in enumerate(self.m) for k in range(mj)]


@dataclass(frozen=True)
class CoefficientSet:
    r: Callable
    f: Callable
    sigma: Callable
    h: Callable


@dataclass(frozen=True)
class Payoff:
    kind: str = "call"
    strike: float = 0.0
    asset: int = 0
    value: float = 0.0

    KINDS = ("call", "put", "forward", "constant")

    def __post_init__(self):
        if self.kind not in self.KINDS:
            raise ValueError(f"unknown payoff {self.kind!r}; expected one of {self.KINDS}")

    def __call__(self, pi: np.ndarray) -> np.ndarray:
        pi = np.asarray(pi, dtype=float)
        x = pi[..., self.asset]
        if self.kind == "call":
            return np.maximum(x - self.strike, 0.0)
        if self.kind == "put":
            return np.maximum(self.strike - x, 0.0)
        if self.kind == "forward":
            return x.copy()
        return np.full(x.shape, float(self.value))


@dataclass(frozen=True, eq=False)
class MarketModel:
    allocation: MartingaleAllocation
    coefficients: CoefficientSet
    initial_prices: tuple[float, ...]
    drivers: tuple[LevySpec, ...]
    bases: tuple[TeugelsBasis, ...] = field(default=())
    name: str = "custom"
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        p = tuple(float(x) for x in self.initial_prices)
        object.__setattr__(self, "initial_prices", p)
        object.__setattr__(self, "drivers", tuple(self.drivers))
        if not self.bases:
            object.__setattr__(self, "bases", tuple(build_basis(s) for s in self.drivers))
        if len(p) != self.d:
            raise ValueError(f"{len(p)} initial prices given for d = {self.d} assets")
        if any(x < 0 for x in p):
            raise ValueError("initial prices must be >= 0")
        if len(self.drivers) != self.allocation.l:
            raise ValueError(
                f"{len(self.drivers)} drivers given but allocation has l = {self.allocation.l}"
            )
        for j, (mj, b) in enumerate(zip(self.allocation.m, self.bases)):
            if mj > b.order:
                raise ValueError(
                    f"m({j + 1}) = {mj} exceeds the basis order K = {b.order} of driver {j + 1}"
                )

    @property
    def d(self) -> int:
        return self.allocation.d

    @property
    def orders(self) -> tuple[int, ...]:
        return tuple(b.order for b in self.bases)

    @property
    def n_martingales(self) -> int:
        return sum(self.orders)

    def traded_columns(self) -> np.ndarray:
        """Columns of the full ``(j, k <= K(j))`` layout that form ``Z^(d)``, in Sigma-row order."""
        cols, off = [], 0
        for mj, K in zip(self.allocation.m, self.orders):
            cols.extend(range(off, off + mj))
            off += K
        return np.array(cols, dtype=int)

    def tail_columns(self) -> np.ndarray:
        cols, off = [], 0
        for mj, K in zip(self.allocation.m, self.orders):
            cols.extend(range(off + mj, off + K))
            off += K
        return np.array(cols, dtype=int)


def _batch(pi, w):
    pi = np.asarray(pi, dtype=float)
    single = pi.ndim == 1
    pi = np.atleast_2d(pi)
    w = np.broadcast_to(np.asarray(w, dtype=float), pi.shape[:1])
    return pi, w, single


def assemble_sigma(model: MarketModel, t: float, pi, w) -> np.ndarray:
    """Sigma(t, pi, w): row (j, k) in lexicographic order, column i = asset."""
    pi, w, single = _batch(pi, w)
    S = np.asarray(model.coefficients.sigma(t, pi, w), dtype=float)
    S = np.broadcast_to(S, pi.shape[:1] + (model.d, model.d))
    return S[0].copy() if single else S


def hedge_matrix(model: MarketModel, t: float, pi, w) -> np.ndarray:
    """Sigma with column i scaled by pi_i: maps share holdings to martingale loadings."""
    pi2, _, single = _batch(pi, w)
    S = np.asarray(assemble_sigma(model, t, pi2, w), dtype=float) * pi2[:, None, :]
    return S[0] if single else S


def drift_g(model: MarketModel, t: float, pi, w, a, z=None) -> np.ndarray | float:
    """g = sum_i a_i pi_i f_i + (w - sum_i a_i pi_i) r(t, w, a)."""
    pi, w, single = _batch(pi, w)
    a = np.atleast_2d(np.asarray(a, dtype=float))
    a = np.broadcast_to(a, pi.shape)
    if z is None:
        z = np.zeros((pi.shape[0], model.n_martingales))
    z = np.atleast_2d(np.asarray(z, dtype=float))
    c = model.coefficients
    invested = np.sum(a * pi, axis=1)
    f = np.broadcast_to(np.asarray(c.f(t, pi, w, z), dtype=float), pi.shape)
    r = np.broadcast_to(np.asarray(c.r(t, w, a), dtype=float), w.shape)
    g = np.sum(a * pi * f, axis=1) + (w - invested) * r
    return float(g[0]) if single else g


def payoff_h(model: MarketModel, pi) -> np.ndarray | float:
    pi = np.asarray(pi, dtype=float)
    out = model.coefficients.h(np.atleast_2d(pi))
    return float(out[0]) if pi.ndim == 1 else out


# --------------------------------------------------------------------------
# built-in drivers and markets
# --------------------------------------------------------------------------

BUILTIN_DRIVERS = {
    "brownian": LevySpec.from_atoms(1.0),
    "two_atom": LevySpec.from_atoms(0.0, [(1.0, 1.0), (-1.0, 1.0)]),
    "mixed": LevySpec.from_atoms(1.0, [(-0.5, 2.0)]),
}


def _const_r(rate: float):
    def r(t, w, a):
        return np.full(np.shape(w), rate)

    return r


def _const_f(mu: np.ndarray):
    def f(t, pi, w, z):
        return np.broadcast_to(mu, pi.shape)

    return f


def _const_sigma(vol: np.ndarray):
    def sigma(t, pi, w):
        return np.broadcast_to(vol, (pi.shape[0],) + vol.shape)

    return sigma


def _vol_matrix(vol, vol_matrix, d) -> np.ndarray:
    if vol_matrix is not None:
        V = np.array(vol_matrix, dtype=float)
        if V.shape != (d, d):
            raise ValueError(f"vol_matrix must be {d}x{d}")
        return V
    v = np.broadcast_to(np.asarray(vol, dtype=float), (d,))
    return np.diag(v)


def _as_prices(s0, d):
    return tuple(np.broadcast_to(np.asarray(s0, dtype=float), (d,)).tolist())


def black_scholes(
    s0=100.0,
    r: float = 0.05,
    mu=None,
    vol=0.2,
    vol_matrix=None,
    d: int = 1,
    payoff: Payoff | None = None,
) -> MarketModel:
    """d assets on d independent standard Brownian drivers; diagonal vol unless a matrix is given."""
    mu_v = np.broadcast_to(np.asarray(r if mu is None else mu, dtype=float), (d,)).copy()
    V = _vol_matrix(vol, vol_matrix, d)
    payoff = payoff or Payoff("call", strike=100.0)
    coeffs = CoefficientSet(r=_const_r(r), f=_const_f(mu_v), sigma=_const_sigma(V), h=payoff)
    return MarketModel(
        allocation=MartingaleAllocation((1,) * d, d),
        coefficients=coeffs,
        initial_prices=_as_prices(s0, d),
        drivers=tuple(BUILTIN_DRIVERS["brownian"] for _ in range(d)),
        name="black_scholes",
        params=dict(s0=s0, r=r, mu=mu, vol=vol, d=d),
    )


def jump_diffusion(
    s0=100.0,
    r: float = 0.05,
    mu=None,
    vol=0.2,
    vol_matrix=None,
    driver: LevySpec | None = None,
    d: int = 1,
    payoff: Payoff | None = None,
) -> MarketModel:
    """d assets on one driver with a jump part; the first d martingales of that driver are traded."""
    driver = driver or BUILTIN_DRIVERS["two_atom"]
    mu_v = np.broadcast_to(np.asarray(r if mu is None else mu, dtype=float), (d,)).copy()
    V = _vol_matrix(vol, vol_matrix, d)
    payoff = payoff or Payoff("call", strike=100.0)
    coeffs = CoefficientSet(r=_const_r(r), f=_const_f(mu_v), sigma=_const_sigma(V), h=payoff)
    return MarketModel(
        allocation=MartingaleAllocation((d,), d),
        coefficients=coeffs,
        initial_prices=_as_prices(s0, d),
        drivers=(driver,),
        name="jump_diffusion",
        params=dict(s0=s0, r=r, mu=mu, vol=vol, d=d),
    )


def large_investor(
    s0: float = 100.0,
    r: float = 0.05,
    mu=None,
    vol: float = 0.2,
    kappa: float = 0.01,
    scale: float | None = None,
    payoff: Payoff | None = None,
) -> MarketModel:
    """One asset whose drift feels the investor's wealth: f = mu + kappa * tanh(w / scale)."""
    mu0 = r if mu is None else float(mu)
    scale = float(s0 if scale is None else scale)
    payoff = payoff or Payoff("call", strike=100.0)

    def f(t, pi, w, z):
        return (mu0 + kappa * np.tanh(np.asarray(w) / scale))[:, None] * np.ones(pi.shape)

    coeffs = CoefficientSet(
        r=_const_r(r), f=f, sigma=_const_sigma(np.array([[float(vol)]])), h=payoff
    )
    return MarketModel(
        allocation=MartingaleAllocation((1,), 1),
        coefficients=coeffs,
        initial_prices=(float(s0),),
        drivers=(BUILTIN_DRIVERS["brownian"],),
        name="large_investor",
        params=dict(s0=s0, r=r, mu=mu, vol=vol, kappa=kappa, scale=scale),
    )


BUILTIN_MODELS: dict[str, Callable[..., MarketModel]] = {
    "black_scholes": black_scholes,
    "jump_diffusion": jump_diffusion,
    "large_investor": large_investor,
}


def with_coefficients(model: MarketModel, **changes) -> MarketModel:
    """Copy of ``model`` with some coefficient callables replaced."""
    c = model.coefficients
    coeffs = CoefficientSet(
        r=changes.get("r", c.r),
        f=changes.get("f", c.f),
        sigma=changes.get("sigma", c.sigma),
        h=changes.get("h", c.h),
    )
    return MarketModel(
        allocation=model.allocation,
        coefficients=coeffs,
        initial_prices=model.initial_prices,
        drivers=model.drivers,
        bases=model.bases,
        name=model.name,
        params=model.params,
    )


def drivers_from_records(records: Sequence[dict]) -> list[LevySpec]:
    return [
        LevySpec.from_atoms(rec.get("sigma", 0.0), [(a["size"], a["intensity"]) for a in rec.get("jumps", [])])
        for rec in records
    ]
