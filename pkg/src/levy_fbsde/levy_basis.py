"""Orthonormalized Teugels martingales of a finite-activity Lévy driver.

A driver is a Gaussian coefficient ``sigma`` plus an atomic Lévy measure
``nu = sum_i lam_i * delta_{x_i}``.  The martingale basis is obtained by
orthonormalizing polynomials in ``L^2(mu)`` with

    mu(dx) = x^2 nu(dx) + sigma^2 delta_0(dx),

so that ``H^(n)_t = sigma q_{n-1}(0) B_t + int p_n(x) Ntilde(t, dx)`` with
``p_n(x) = x q_{n-1}(x)`` satisfies ``<H^(m), H^(n)>_t = delta_mn t``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .errors import DegenerateDriver, IndexOutOfRange

# Residual-norm threshold, relative to the norm of the candidate polynomial.
RANK_TOL = 1e-12


@dataclass(frozen=True)
class JumpMeasure:
    """Finite atomic Lévy measure given as ``(size, intensity)`` pairs."""

    atoms: tuple[tuple[float, float], ...] = ()

    def __post_init__(self):
        atoms = tuple((float(x), float(lam)) for x, lam in self.atoms)
        sizes = [x for x, _ in atoms]
        for x, lam in atoms:
            if not math.isfinite(x) or x == 0.0:
                raise ValueError(f"jump size must be finite and nonzero, got {x}")
            if not math.isfinite(lam) or lam <= 0.0:
                raise ValueError(f"jump intensity must be finite and positive, got {lam}")
        if len(set(sizes)) != len(sizes):
            raise ValueError("jump sizes must be distinct")
        object.__setattr__(self, "atoms", atoms)

    @property
    def sizes(self) -> np.ndarray:
        return np.array([x for x, _ in self.atoms], dtype=float)

    @property
    def intensities(self) -> np.ndarray:
        return np.array([lam for _, lam in self.atoms], dtype=float)

    @property
    def total_intensity(self) -> float:
        return float(sum(lam for _, lam in self.atoms))

    def __len__(self) -> int:
        return len(self.atoms)


@dataclass(frozen=True)
class LevySpec:
    sigma: float = 0.0
    jumps: JumpMeasure = field(default_factory=JumpMeasure)

    def __post_init__(self):
        sigma = float(self.sigma)
        if not math.isfinite(sigma) or sigma < 0.0:
            raise ValueError(f"sigma must be finite and >= 0, got {self.sigma}")
        object.__setattr__(self, "sigma", sigma)
        if not isinstance(self.jumps, JumpMeasure):
            object.__setattr__(self, "jumps", JumpMeasure(tuple(self.jumps)))
        if sigma == 0.0 and len(self.jumps) == 0:
            raise DegenerateDriver(
                "driver has neither a Gaussian part nor jumps", location="sigma"
            )

    @classmethod
    def from_atoms(cls, sigma: float, atoms: Iterable[tuple[float, float]] = ()) -> "LevySpec":
        return cls(sigma, JumpMeasure(tuple(atoms)))

    def support(self) -> tuple[np.ndarray, np.ndarray]:
        """Support points and weights of ``mu``: atoms carry ``lam x^2``, the origin ``sigma^2``."""
        x = self.jumps.sizes
        w = self.jumps.intensities * x**2
        if self.sigma > 0.0:
            x = np.concatenate([[0.0], x])
            w = np.concatenate([[self.sigma**2], w])
        return x, w


@dataclass(frozen=True)
class Polynomial:
    """Dense polynomial, coefficients in ascending degree."""

    coefficients: tuple[float, ...]

    def __post_init__(self):
        c = [float(a) for a in self.coefficients]
        while len(c) > 1 and c[-1] == 0.0:
            c.pop()
        object.__setattr__(self, "coefficients", tuple(c) if c else (0.0,))

    @property
    def degree(self) -> int:
        if self.coefficients == (0.0,):
            return -1
        return len(self.coefficients) - 1

    def __call__(self, x):
        return eval_polynomial(self, x)

    def times_x(self) -> "Polynomial":
        return Polynomial((0.0,) + self.coefficients)

    def __str__(self) -> str:
        terms = []
        for k, a in enumerate(self.coefficients):
            if a == 0.0 and len(self.coefficients) > 1:
                continue
            mono = "" if k == 0 else ("x" if k == 1 else f"x^{k}")
            terms.append(f"{a:.12g}{'*' + mono if mono else ''}")
        return " + ".join(terms)


def eval_polynomial(p: Polynomial | Sequence[float], x):
    """Horner evaluation; ``x`` may be a scalar or an array."""
    coeffs = p.coefficients if isinstance(p, Polynomial) else tuple(p)
    acc = np.zeros_like(np.asarray(x, dtype=float))
    for a in reversed(coeffs):
        acc = acc * x + a
    return float(acc) if np.ndim(acc) == 0 else acc


@dataclass(frozen=True)
class TeugelsBasis:
    """Orthonormal pairs ``(q_{n-1}, p_n)``, n = 1..K, for one driver."""

    pairs: tuple[tuple[Polynomial, Polynomial], ...]
    sigma: float
    jumps: JumpMeasure

    @property
    def order(self) -> int:
        return len(self.pairs)

    K = order

    def q(self, n: int) -> Polynomial:
        """``q_{n-1}``, the polynomial attached to the n-th martingale."""
        self._check(n)
        return self.pairs[n - 1][0]

    def p(self, n: int) -> Polynomial:
        self._check(n)
        return self.pairs[n - 1][1]

    def _check(self, n: int) -> None:
        if not 1 <= n <= self.order:
            raise IndexOutOfRange(f"martingale order {n} outside 1..{self.order}", location=n)

    def jump_values(self) -> np.ndarray:
        """Matrix ``[K, atoms]`` of ``p_n(x_atom)``."""
        x = self.jumps.sizes
        return np.array([p(x) for _, p in self.pairs]).reshape(self.order, len(x))

    def brownian_coefficients(self) -> np.ndarray:
        return np.array([brownian_coefficient(self, n) for n in range(1, self.order + 1)])

    def gram_matrix(self) -> np.ndarray:
        """``<q_{m-1}, q_{n-1}>_mu`` as an exact finite sum over the support of ``mu``."""
        spec = LevySpec(self.sigma, self.jumps)
        x, w = spec.support()
        Q = np.array([q(x) for q, _ in self.pairs]).reshape(self.order, len(x))
        return (Q * w) @ Q.T


def mu_moments(spec: LevySpec, max_order: int) -> list[float]:
    """Moments ``mu_k = sum lam x^{k+2} + sigma^2 [k == 0]`` for k = 0..max_order."""
    if max_order < 0:
        raise ValueError("max_order must be >= 0")
    out = []
    for k in range(max_order + 1):
        m = sum(lam * x ** (k + 2) for x, lam in spec.jumps.atoms)
        if k == 0:
            m += spec.sigma**2
        out.append(float(m))
    return out


def build_basis(spec: LevySpec) -> TeugelsBasis:
    """Orthonormalize ``1, x, x^2, ...`` in ``L^2(mu)``.

    Each new candidate is ``x q_{n-1}``, which spans the same space as the next
    monomial.  It is orthogonalized twice (modified Gram-Schmidt with one
    re-orthogonalization pass).  The loop stops once the residual norm drops
    below ``RANK_TOL`` times the candidate's norm, which happens exactly after
    ``K = |supp mu|`` polynomials.
    """
    x, w = spec.support()
    size = len(x)
    if size == 0:
        raise DegenerateDriver("measure mu has empty support", location="spec")

    def inner(a: np.ndarray, b: np.ndarray) -> float:
        return float(np.sum(w * eval_polynomial(a, x) * eval_polynomial(b, x)))

    qs: list[np.ndarray] = []
    candidate = np.array([1.0])
    # one extra pass confirms termination
    for n in range(size + 1):
        v = candidate.copy()
        ref = math.sqrt(max(inner(v, v), 0.0))
        for _ in range(2):
            for q in qs:
                c = inner(v, q)
                v[: len(q)] -= c * q
        nrm = math.sqrt(max(inner(v, v), 0.0))
        if ref == 0.0 or nrm <= RANK_TOL * ref:
            break
        if n == size:
            # a (size+1)-th orthonormal polynomial cannot exist on a size-point measure
            break
        q = v / nrm
        qs.append(q)
        candidate = np.concatenate([[0.0], q])

    if not qs:
        raise DegenerateDriver("no orthonormal polynomial exists for this driver", location="spec")
    pairs = tuple(
        (Polynomial(tuple(q)), Polynomial((0.0,) + tuple(q))) for q in qs
    )
    return TeugelsBasis(pairs=pairs, sigma=spec.sigma, jumps=spec.jumps)


def brownian_coefficient(basis: TeugelsBasis, n: int) -> float:
    """Weight ``sigma * q_{n-1}(0)`` of the standard Brownian motion in ``H^(n)``."""
    return basis.sigma * basis.q(n)(0.0)
