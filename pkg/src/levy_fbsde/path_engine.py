"""Driver simulation and Teugels martingale increments on a uniform grid.

Each (path, driver) pair owns a Philox substream whose key is the root seed
and whose counter high words are ``(driver, path)``.  A path therefore draws
the same numbers whatever the chunking or the number of worker threads.
"""

from __future__ import annotations

import csv
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .levy_basis import LevySpec, TeugelsBasis, build_basis

_MASK64 = (1 << 64) - 1


@dataclass(frozen=True)
class TimeGrid:
    T: float
    N: int

    def __post_init__(self):
        if not (self.T > 0 and math.isfinite(self.T)):
            raise ValueError(f"horizon must be positive, got {self.T}")
        if int(self.N) != self.N or self.N < 1:
            raise ValueError(f"steps must be a positive integer, got {self.N}")
        object.__setattr__(self, "N", int(self.N))
        object.__setattr__(self, "T", float(self.T))

    @property
    def dt(self) -> float:
        return self.T / self.N

    @property
    def times(self) -> np.ndarray:
        return np.arange(self.N + 1) * self.dt


@dataclass(frozen=True, eq=False)
class ScenarioSet:
    """Simulated driver noise for ``n_paths`` paths.

    ``dB[p, n, j]`` are Brownian increments, ``counts[j][p, n, a]`` jump counts of
    atom ``a`` of driver ``j`` during step ``n``, and ``dH[p, n, c]`` the martingale
    increments with column ``c`` running over ``(j, k)``, j-major, k = 1..K(j).
    """

    grid: TimeGrid
    seed: int
    bases: tuple[TeugelsBasis, ...]
    dB: np.ndarray
    counts: tuple[np.ndarray, ...]
    dH: np.ndarray

    @property
    def n_paths(self) -> int:
        return self.dH.shape[0]

    @property
    def orders(self) -> tuple[int, ...]:
        return tuple(b.order for b in self.bases)

    @property
    def offsets(self) -> tuple[int, ...]:
        out, acc = [], 0
        for K in self.orders:
            out.append(acc)
            acc += K
        return tuple(out)

    def column(self, j: int, k: int) -> int:
        """Column of ``dH`` for driver ``j`` and order ``k`` (both 1-based)."""
        if not 1 <= j <= len(self.bases) or not 1 <= k <= self.orders[j - 1]:
            raise IndexError(f"no martingale H^({j},{k})")
        return self.offsets[j - 1] + k - 1

    @property
    def labels(self) -> list[tuple[int, int]]:
        return [(j + 1, k + 1) for j, K in enumerate(self.orders) for k in range(K)]

    def H_terminal(self) -> np.ndarray:
        return self.dH.sum(axis=1)


def martingale_increments(
    bases: Sequence[TeugelsBasis],
    grid: TimeGrid,
    dB: np.ndarray,
    counts: Sequence[np.ndarray],
) -> np.ndarray:
    """``dH = sigma q_{k-1}(0) dB + sum_atoms count p_k(x) - dt sum_atoms lam p_k(x)``."""
    cols = []
    for j, basis in enumerate(bases):
        bc = basis.brownian_coefficients()
        out = dB[:, :, j, None] * bc
        if len(basis.jumps):
            pv = basis.jump_values()  # [K, atoms]
            comp = grid.dt * (pv @ basis.jumps.intensities)
            out = out + counts[j] @ pv.T - comp
        cols.append(out)
    return np.concatenate(cols, axis=2)


def _substream(seed: int, driver: int, path: int) -> np.random.Generator:
    bitgen = np.random.Philox(key=seed & _MASK64, counter=[0, 0, driver, path])
    return np.random.Generator(bitgen)


def _fill_chunk(specs, grid, seed, start, stop, dB, counts):
    sqdt = math.sqrt(grid.dt)
    for j, spec in enumerate(specs):
        lam_dt = spec.jumps.intensities * grid.dt
        for p in range(start, stop):
            rng = _substream(seed, j, p)
            dB[p, :, j] = rng.standard_normal(grid.N) * sqdt
            if len(lam_dt):
                counts[j][p] = rng.poisson(lam_dt, size=(grid.N, len(lam_dt)))


def simulate_drivers(
    specs: Sequence[LevySpec],
    grid: TimeGrid,
    n_paths: int,
    seed: int,
    workers: int = 1,
    chunk: int = 4096,
    bases: Sequence[TeugelsBasis] | None = None,
) -> ScenarioSet:
    """Draw Brownian increments and per-step Poisson jump counts for every driver.

    ``workers`` only changes scheduling; the result is bit-identical for any value.
    """
    if n_paths < 1:
        raise ValueError("n_paths must be >= 1")
    specs = list(specs)
    if bases is None:
        bases = [build_basis(s) for s in specs]
    dB = np.zeros((n_paths, grid.N, len(specs)))
    counts = [np.zeros((n_paths, grid.N, len(s.jumps)), dtype=np.int64) for s in specs]
    ranges = [(a, min(a + chunk, n_paths)) for a in range(0, n_paths, chunk)]
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            list(pool.map(lambda r: _fill_chunk(specs, grid, seed, r[0], r[1], dB, counts), ranges))
    else:
        for a, b in ranges:
            _fill_chunk(specs, grid, seed, a, b, dB, counts)
    return scenario_from_increments(bases, grid, dB, counts, seed=seed)


def scenario_from_increments(
    bases: Sequence[TeugelsBasis],
    grid: TimeGrid,
    dB: np.ndarray,
    counts: Sequence[np.ndarray] | None = None,
    seed: int = 0,
) -> ScenarioSet:
    """Build a scenario from given noise, e.g. a deterministic jump schedule."""
    bases = tuple(bases)
    dB = np.asarray(dB, dtype=float)
    if dB.ndim == 2:
        dB = dB[:, :, None]
    if counts is None:
        counts = [np.zeros(dB.shape[:2] + (len(b.jumps),), dtype=np.int64) for b in bases]
    counts = tuple(np.asarray(c) for c in counts)
    dH = martingale_increments(bases, grid, dB, counts)
    for arr in (dB, dH, *counts):
        arr.setflags(write=False)
    return ScenarioSet(grid=grid, seed=int(seed), bases=bases, dB=dB, counts=counts, dH=dH)


def empirical_bracket(scenario: ScenarioSet, j: int, k: int, j2: int, k2: int) -> tuple[float, float]:
    """Normalized realized covariation of ``H^(jk)`` and ``H^(j2 k2)`` with its standard error."""
    a = scenario.dH[:, :, scenario.column(j, k)]
    b = scenario.dH[:, :, scenario.column(j2, k2)]
    per_path = np.sum(a * b, axis=1) / scenario.grid.T
    return _mean_se(per_path)


def bracket_matrix(scenario: ScenarioSet) -> tuple[np.ndarray, np.ndarray]:
    """All pairwise brackets at once: (estimate, standard error) matrices."""
    per_path = np.einsum("pni,pnj->pij", scenario.dH, scenario.dH) / scenario.grid.T
    n = per_path.shape[0]
    se = per_path.std(axis=0, ddof=1) / math.sqrt(n) if n > 1 else np.zeros(per_path.shape[1:])
    return per_path.mean(axis=0), se


def _mean_se(x: np.ndarray) -> tuple[float, float]:
    n = len(x)
    se = float(np.std(x, ddof=1) / math.sqrt(n)) if n > 1 else 0.0
    return float(np.mean(x)), se


def dump_increments_csv(scenario: ScenarioSet, path: str | Path) -> None:
    """Write ``path, step, j, k, value`` rows of ``dH``."""
    labels = scenario.labels
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["path", "step", "j", "k", "value"])
        for p in range(scenario.n_paths):
            for n in range(scenario.grid.N):
                for c, (j, k) in enumerate(labels):
                    w.writerow([p, n, j, k, repr(float(scenario.dH[p, n, c]))])
