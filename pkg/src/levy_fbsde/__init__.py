"""Option pricing and hedging with FBSDEs driven by orthonormalized Teugels martingales."""

from .errors import (
    ConfigError,
    DegenerateDriver,
    IndexOutOfRange,
    LevyFBSDEError,
    NoConvergence,
    NonFinite,
    RankDeficientRegression,
    SingularSigma,
)
from .fbsde_solver import (
    FBSDESolution,
    RegressionSpec,
    SolverConfig,
    backward_sweep,
    forward_prices,
    picard_solve,
    regress,
)
from .hedging import (
    HedgeResult,
    bs_oracle,
    capital_formula,
    capital_process,
    hedge,
    money_market_path,
    optimal_portfolio,
    positivity_check,
    variance_objective,
)
from .levy_basis import (
    JumpMeasure,
    LevySpec,
    Polynomial,
    TeugelsBasis,
    brownian_coefficient,
    build_basis,
    eval_polynomial,
    mu_moments,
)
from .market_model import (
    BUILTIN_DRIVERS,
    BUILTIN_MODELS,
    CoefficientSet,
    MarketModel,
    MartingaleAllocation,
    Payoff,
    assemble_sigma,
    black_scholes,
    drift_g,
    hedge_matrix,
    jump_diffusion,
    large_investor,
    payoff_h,
)
from .path_engine import (
    ScenarioSet,
    TimeGrid,
    bracket_matrix,
    empirical_bracket,
    scenario_from_increments,
    simulate_drivers,
)

__version__ = "0.1.0"
