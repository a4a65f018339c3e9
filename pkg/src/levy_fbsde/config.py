"""Run configuration: a single JSON document validated with pydantic."""

from __future__ import annotations

import json
from pathlib import Path
from typing import Literal, Optional, Union

from pydantic import BaseModel, ConfigDict, Field, ValidationError, model_validator

from .errors import ConfigError
from .fbsde_solver import RegressionSpec, SolverConfig
from .levy_basis import JumpMeasure, LevySpec
from .market_model import BUILTIN_DRIVERS, BUILTIN_MODELS, MarketModel, Payoff
from .path_engine import TimeGrid

SCHEMA_VERSION = 1
REPORTS = ("summary", "variance_profile", "alpha_stats", "capital_terminal")


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid")


class AtomConfig(_Strict):
    size: float
    intensity: float = Field(gt=0)


class DriverConfig(_Strict):
    sigma: float = Field(default=0.0, ge=0)
    jumps: list[AtomConfig] = []

    def to_spec(self) -> LevySpec:
        return LevySpec(self.sigma, JumpMeasure(tuple((a.size, a.intensity) for a in self.jumps)))


class DimensionsConfig(_Strict):
    d: int = Field(ge=1)
    l: int = Field(ge=1)
    m: list[int]

    @model_validator(mode="after")
    def _allocation(self):
        if len(self.m) != self.l:
            raise ValueError(f"allocation block: m has {len(self.m)} entries but l = {self.l}")
        if any(x < 1 for x in self.m):
            raise ValueError("allocation block: every m(j) must be >= 1")
        if sum(self.m) != self.d:
            raise ValueError(f"allocation block: sum of m(j) = {sum(self.m)} differs from d = {self.d}")
        return self


class PayoffConfig(_Strict):
    kind: Literal["call", "put", "forward", "constant"] = "call"
    strike: float = 100.0
    asset: int = Field(default=0, ge=0)
    value: float = 0.0


class ModelConfig(_Strict):
    name: Literal["black_scholes", "jump_diffusion", "large_investor"]
    dimensions: DimensionsConfig = DimensionsConfig(d=1, l=1, m=[1])
    params: dict[str, Union[float, list[float], list[list[float]], None]] = {}
    driver: Union[Literal["brownian", "two_atom", "mixed"], DriverConfig, None] = None
    payoff: PayoffConfig = PayoffConfig()

    @model_validator(mode="after")
    def _consistent(self):
        dim = self.dimensions
        if self.name == "black_scholes" and dim.m != [1] * dim.d:
            raise ValueError("allocation block: black_scholes uses one Brownian driver per asset, m = [1]*d")
        if self.name == "jump_diffusion" and dim.m != [dim.d]:
            raise ValueError("allocation block: jump_diffusion trades d martingales of one driver, m = [d]")
        if self.name == "large_investor" and (dim.d, dim.m) != (1, [1]):
            raise ValueError("allocation block: large_investor is a single-asset model")
        if self.driver is not None and self.name != "jump_diffusion":
            raise ValueError(f"driver: only jump_diffusion takes a driver, not {self.name}")
        if self.payoff.asset >= dim.d:
            raise ValueError(f"payoff: asset index {self.payoff.asset} out of range for d = {dim.d}")
        return self


class GridConfig(_Strict):
    T: float = Field(default=1.0, gt=0)
    N: int = Field(default=100, ge=1)


class RegressionConfig(_Strict):
    degree: int = Field(default=RegressionSpec.degree, ge=0)
    cutoff: float = Field(default=RegressionSpec.cutoff, gt=0)


class SolverBlock(_Strict):
    max_iterations: int = Field(default=10, ge=1)
    tolerance: float = Field(default=1e-8, gt=0)
    regression: RegressionConfig = RegressionConfig()


class OutputConfig(_Strict):
    directory: str = "out"
    reports: list[Literal["summary", "variance_profile", "alpha_stats", "capital_terminal"]] = list(REPORTS)


class RunConfig(_Strict):
    schema_version: Literal[1] = SCHEMA_VERSION
    model: ModelConfig
    grid: GridConfig = GridConfig()
    paths: int = Field(default=10_000, ge=1)
    seed: int = Field(default=0, ge=0, lt=2**64)
    workers: int = Field(default=1, ge=1)
    solver: SolverBlock = SolverBlock()
    outputs: OutputConfig = OutputConfig()

    def time_grid(self) -> TimeGrid:
        return TimeGrid(self.grid.T, self.grid.N)

    def solver_config(self) -> SolverConfig:
        s = self.solver
        return SolverConfig(
            max_iterations=s.max_iterations,
            tolerance=s.tolerance,
            regression=RegressionSpec(s.regression.degree, s.regression.cutoff),
        )

    def build_model(self) -> MarketModel:
        mc = self.model
        payoff = Payoff(mc.payoff.kind, mc.payoff.strike, mc.payoff.asset, mc.payoff.value)
        kwargs = {k: v for k, v in mc.params.items() if v is not None}
        if mc.name != "large_investor":
            kwargs["d"] = mc.dimensions.d
        if mc.name == "jump_diffusion" and mc.driver is not None:
            kwargs["driver"] = (
                BUILTIN_DRIVERS[mc.driver] if isinstance(mc.driver, str) else mc.driver.to_spec()
            )
        try:
            return BUILTIN_MODELS[mc.name](payoff=payoff, **kwargs)
        except TypeError as exc:
            raise ConfigError(f"bad parameter for {mc.name}: {exc}", location="model.params") from exc
        except ValueError as exc:
            raise ConfigError(str(exc), location="model") from exc


def _loc(err: dict) -> str:
    return ".".join(str(p) for p in err["loc"]) or "<root>"


def parse_config(data: dict) -> RunConfig:
    try:
        return RunConfig.model_validate(data)
    except ValidationError as exc:
        first = exc.errors()[0]
        loc = _loc(first)
        raise ConfigError(
            f"{loc}: {first['msg']}",
            location=loc,
            errors=[{"location": _loc(e), "message": e["msg"]} for e in exc.errors()],
        ) from None


def load_config(path: str | Path) -> RunConfig:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc}", location=str(path)) from None
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"invalid JSON: {exc}", location=f"line {exc.lineno}") from None
    return parse_config(data)


def apply_overrides(cfg: RunConfig, paths=None, steps=None, seed=None, out=None, workers=None) -> RunConfig:
    data = cfg.model_dump()
    if paths is not None:
        data["paths"] = paths
    if steps is not None:
        data["grid"]["N"] = steps
    if seed is not None:
        data["seed"] = seed
    if out is not None:
        data["outputs"]["directory"] = out
    if workers is not None:
        data["workers"] = workers
    return parse_config(data)


def drivers_only(data: dict) -> Optional[list[LevySpec]]:
    """Drivers listed under a top-level ``drivers`` key, for ``basis`` runs without a market."""
    recs = data.get("drivers")
    if recs is None:
        return None
    try:
        return [DriverConfig.model_validate(r).to_spec() for r in recs]
    except ValidationError as exc:
        raise ConfigError(str(exc.errors()[0]["msg"]), location="drivers") from None
