"""Independent reference computations used by the test-suite."""

from __future__ import annotations

import random
from fractions import Fraction

import mpmath


def exact_orthonormal(sigma: Fraction, atoms: list[tuple[Fraction, Fraction]], dps: int = 50):
    """Gram-Schmidt in exact rationals on the monomials, normalized at the end in mpmath.

    Returns the coefficient lists (ascending) of q_0, ..., q_{K-1} as mpf values.
    """
    pts = [(x, lam * x * x) for x, lam in atoms]
    if sigma:
        pts.append((Fraction(0), sigma * sigma))

    def ev(c, x):
        return sum(a * x**k for k, a in enumerate(c))

    def inner(a, b):
        return sum(w * ev(a, x) * ev(b, x) for x, w in pts)

    monic = []
    for n in range(len(pts)):
        v = [Fraction(0)] * n + [Fraction(1)]
        for q in monic:
            c = inner(v, q) / inner(q, q)
            for k, a in enumerate(q):
                v[k] -= c * a
        assert inner(v, v) > 0
        monic.append(v)
    # the monomial after the last one must be orthogonal-complement-free
    v = [Fraction(0)] * len(pts) + [Fraction(1)]
    for q in monic:
        c = inner(v, q) / inner(q, q)
        for k, a in enumerate(q):
            v[k] -= c * a
    assert inner(v, v) == 0

    with mpmath.workdps(dps):
        out = []
        for q in monic:
            nrm = mpmath.sqrt(mpmath.mpf(inner(q, q).numerator) / inner(q, q).denominator)
            out.append([mpmath.mpf(a.numerator) / a.denominator / nrm for a in q])
    return out


def random_rational_measure(rng: random.Random):
    """Rational sigma in {0, 1/2, 1, 3/2} and 1-4 distinct nonzero atoms in [-2, 2]."""
    sizes = rng.sample([Fraction(k, 4) for k in range(-8, 9) if k != 0], rng.randint(1, 4))
    atoms = [(x, Fraction(rng.randint(1, 12), 4)) for x in sizes]
    sigma = Fraction(rng.randint(0, 3), 2)
    return sigma, atoms


def bs_call_closed_form(S, K, r, sigma, T):
    """Call price and delta from the closed form, via mpmath's erfc."""
    with mpmath.workdps(30):
        vol = sigma * mpmath.sqrt(T)
        d1 = (mpmath.log(mpmath.mpf(S) / K) + (r + sigma**2 / 2) * T) / vol
        d2 = d1 - vol
        N = lambda x: mpmath.erfc(-x / mpmath.sqrt(2)) / 2  # noqa: E731
        return float(S * N(d1) - K * mpmath.exp(-r * T) * N(d2)), float(N(d1))
