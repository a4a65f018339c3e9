import math

import numpy as np
import pytest

from conftest import solve
from levy_fbsde import (
    FBSDESolution,
    LevySpec,
    Payoff,
    SingularSigma,
    TimeGrid,
    black_scholes,
    bs_oracle,
    build_basis,
    capital_formula,
    capital_process,
    hedge,
    jump_diffusion,
    money_market_path,
    optimal_portfolio,
    positivity_check,
    scenario_from_increments,
    variance_objective,
)
from levy_fbsde.hedging import (
    budget_residual,
    jump_positivity_bound,
    money_market_weight,
    objective_profiles,
)
from levy_fbsde.market_model import BUILTIN_DRIVERS, with_coefficients

from oracles import bs_call_closed_form


def synthetic(model, grid, P, W, Z, dB=None, counts=None):
    n_paths = P.shape[0]
    if dB is None:
        dB = np.zeros((n_paths, grid.N, model.allocation.l))
    sc = scenario_from_increments(model.bases, grid, dB, counts)
    return FBSDESolution(P=P, W=W, Z=Z, scenario=sc, iterations=1, residuals=[0.0], fits=[],
                         G=np.zeros((n_paths, grid.N)))


# ---------------------------------------------------------------- oracle


@pytest.mark.parametrize(
    "args",
    [(100.0, 100.0, 0.05, 0.2, 1.0), (80.0, 100.0, 0.01, 0.35, 0.5), (120.0, 90.0, 0.03, 0.15, 2.0)],
)
def test_bs_oracle_matches_independent_closed_form(args):
    price, delta = bs_oracle(*args)
    ref_price, ref_delta = bs_call_closed_form(*args)
    assert price == pytest.approx(ref_price, rel=1e-12)
    assert delta == pytest.approx(ref_delta, rel=1e-12)


def test_bs_oracle_reference_values():
    price, delta = bs_oracle(100.0, 100.0, 0.05, 0.2, 1.0)
    assert round(price, 4) == 10.4506
    assert round(delta, 4) == 0.6368


def test_bs_oracle_limits():
    price, delta = bs_oracle(200.0, 100.0, 0.05, 0.2, 1e-6)
    assert price == pytest.approx(200.0 - 100.0 * math.exp(-0.05e-6), rel=1e-12)
    assert delta == pytest.approx(1.0)
    price, delta = bs_oracle(100.0, 1e-12, 0.05, 0.2, 1.0)
    assert price == pytest.approx(100.0)
    assert delta == pytest.approx(1.0)
    with pytest.raises(ValueError):
        bs_oracle(100.0, 100.0, 0.05, 0.0, 1.0)


# ---------------------------------------------------------------- portfolio


def test_portfolio_identity_sigma():
    grid = TimeGrid(1.0, 3)
    m = black_scholes(d=2, vol=1.0, s0=[1.0, 1.0])
    P = np.ones((4, 4, 2))
    Z = np.random.default_rng(0).normal(size=(4, 3, 2))
    alpha, cond = optimal_portfolio(synthetic(m, grid, P, np.zeros((4, 4)), Z), m)
    np.testing.assert_allclose(alpha, Z, rtol=1e-15)
    np.testing.assert_allclose(cond, 1.0)


def test_portfolio_diagonal_sigma():
    grid = TimeGrid(1.0, 1)
    m = black_scholes(d=2, vol=[2.0, 4.0], s0=[1.0, 1.0])
    Z = np.array([[[2.0, 4.0]]])
    alpha, _ = optimal_portfolio(synthetic(m, grid, np.ones((1, 2, 2)), np.zeros((1, 2)), Z), m)
    np.testing.assert_allclose(alpha[0, 0], [1.0, 1.0])


def test_portfolio_is_bs_delta_for_analytic_z():
    vol, S = 0.2, 100.0
    _, delta = bs_oracle(S, 100.0, 0.05, vol, 1.0)
    grid = TimeGrid(1.0, 1)
    m = black_scholes(vol=vol)
    Z = np.array([[[delta * vol * S]]])
    alpha, _ = optimal_portfolio(synthetic(m, grid, np.full((1, 2, 1), S), np.zeros((1, 2)), Z), m)
    assert alpha[0, 0, 0] == pytest.approx(delta, rel=1e-14)


def test_singular_sigma_reports_location():
    grid = TimeGrid(1.0, 2)
    m = with_coefficients(black_scholes(), sigma=lambda t, pi, w: (0.1 * (w != 0))[:, None, None])
    W = np.ones((3, 3))
    W[2, 1] = 0.0
    sol = synthetic(m, grid, np.full((3, 3, 1), 100.0), W, np.ones((3, 2, 1)))
    with pytest.raises(SingularSigma) as err:
        optimal_portfolio(sol, m)
    assert err.value.location == {"path": 2, "step": 1}


def test_optimizer_identity_on_solution(bs_solution):
    model, sol = bs_solution
    alpha, _ = optimal_portfolio(sol, model)
    loading = 0.2 * sol.P[:, :-1, 0] * alpha[:, :, 0]
    z = sol.Z[:, :, 0]
    assert np.max(np.abs(loading - z) / np.maximum(np.abs(z), 1e-300)) < 1e-10


# ---------------------------------------------------------------- money market


def test_money_market_zero_rate():
    m = black_scholes(r=0.0)
    P0 = money_market_path(m, np.ones((3, 11)), np.zeros((3, 10, 1)), TimeGrid(1.0, 10))
    assert np.all(P0 == 1.0)


@pytest.mark.parametrize("N", [1, 7, 100])
def test_money_market_constant_rate(N):
    m = black_scholes(r=0.05)
    P0 = money_market_path(m, np.ones((2, N + 1)), np.zeros((2, N, 1)), TimeGrid(1.0, N))
    assert P0[0, -1] == pytest.approx(math.exp(0.05), rel=1e-14)


def test_money_market_piecewise_rate():
    m = with_coefficients(black_scholes(), r=lambda t, w, a: np.full(np.shape(w), 0.1 if t < 0.5 else 0.3))
    P0 = money_market_path(m, np.zeros((1, 3)), np.zeros((1, 2, 1)), TimeGrid(1.0, 2))
    np.testing.assert_allclose(P0[0], [1.0, math.exp(0.05), math.exp(0.05) * math.exp(0.15)], rtol=1e-15)


def test_money_market_weight_definition():
    W = np.array([[10.0, 11.0]])
    alpha = np.array([[[0.5]]])
    P = np.array([[[8.0], [9.0]]])
    P0 = np.array([[2.0, 2.1]])
    assert money_market_weight(W, alpha, P, P0)[0, 0] == (10.0 - 4.0) / 2.0


# ---------------------------------------------------------------- capital


def _two_atom_path():
    """One path, N=4, T=1, a single +1 jump in step 0 of the symmetric two-atom driver."""
    m = jump_diffusion(vol=0.1, s0=10.0, driver=BUILTIN_DRIVERS["two_atom"])
    grid = TimeGrid(1.0, 4)
    counts = np.zeros((1, 4, 2), dtype=int)
    counts[0, 0, 0] = 1  # atom 0 is the +1 jump
    P = np.full((1, 5, 1), 10.0)
    Z = np.zeros((1, 4, 2))
    Z[..., 0], Z[..., 1] = 2.0, 3.0
    sol = synthetic(m, grid, P, np.zeros((1, 5)), Z, counts=[counts])
    return m, sol


def test_capital_formula_hand_computed():
    m, sol = _two_atom_path()
    s = 1 / math.sqrt(2)
    np.testing.assert_allclose(sol.scenario.dH[0, :, 0], [s, 0, 0, 0], atol=1e-15)
    np.testing.assert_allclose(sol.scenario.dH[0, :, 1], [s / 2, -s / 2, -s / 2, -s / 2], atol=1e-15)
    alpha = np.full((1, 4, 1), 0.5)  # loading 0.1 * 10 * 0.5 = 0.5
    # per step: (0.5 - 2) dH1 - 3 dH2  ->  -3s, 1.5s, 1.5s, 1.5s
    C = capital_formula(sol, alpha, m)
    np.testing.assert_allclose(C[0], [1.5 * s, 4.5 * s, 3 * s, 1.5 * s, 0.0], atol=1e-14)


def test_capital_zero_when_nothing_held():
    m, sol = _two_atom_path()
    sol.Z[:] = 0.0
    zero = np.zeros((1, 4, 1))
    assert not capital_formula(sol, zero, m).any()
    P0 = money_market_path(m, sol.W, zero, sol.scenario.grid)
    assert not capital_process(sol, zero, P0).any()


def test_capital_vanishes_in_complete_market_formula(bs_solution):
    model, sol = bs_solution
    alpha, _ = optimal_portfolio(sol, model)
    C = capital_formula(sol, alpha, model)
    assert np.max(np.abs(C)) < 1e-10 * np.max(np.abs(sol.W))


def test_budget_identity_and_terminal_zero(bs_solution):
    model, sol = bs_solution
    hr = hedge(sol, model)
    assert not hr.C[:, -1].any()
    res = budget_residual(sol.W, hr.alpha, hr.alpha0, sol.P, hr.P0)
    gap = res - np.diff(hr.C, axis=1)
    assert np.max(np.abs(gap)) <= 1e-9 * np.max(np.abs(sol.W))


# ---------------------------------------------------------------- objective


@pytest.fixture(scope="module")
def jump_solution():
    model = jump_diffusion()
    return model, solve(model, N=25, paths=20_000, seed=2)


def test_objective_at_optimum_is_tail_only(jump_solution):
    model, sol = jump_solution
    grid = sol.scenario.grid
    alpha, _ = optimal_portfolio(sol, model)
    hedgeable, tail = objective_profiles(alpha, sol.Z, model, sol.P, sol.W, grid)
    assert hedgeable[0] < 1e-12
    expected_tail = np.mean(np.sum(sol.Z[:, :, 1] ** 2, axis=1)) * grid.dt
    assert tail[0] == pytest.approx(expected_tail, rel=1e-12)
    assert variance_objective(alpha, sol.Z, model, sol.P, sol.W, 0, grid) == pytest.approx(tail[0], rel=1e-12)
    assert tail[0] > 0


def test_objective_perturbation_never_helps(jump_solution):
    model, sol = jump_solution
    grid = sol.scenario.grid
    alpha, _ = optimal_portfolio(sol, model)
    base = variance_objective(alpha, sol.Z, model, sol.P, sol.W, 0, grid)
    rng = np.random.default_rng(3)
    for _ in range(10):
        delta = rng.normal(size=alpha.shape) * 0.01
        assert variance_objective(alpha + delta, sol.Z, model, sol.P, sol.W, 0, grid) >= base


def test_capital_second_moments_match_objective(jump_solution):
    # both realized forms of C_0 carry the untraded tail; their second moments track the objective
    model, sol = jump_solution
    hr = hedge(sol, model)
    target = hr.variance_profile[0]
    assert hr.empirical_second_moment[0] == pytest.approx(target, rel=0.3)
    assert np.mean(hr.C_formula[:, 0] ** 2) == pytest.approx(target, rel=0.3)


def test_objective_profile_monotone_in_time(jump_solution):
    model, sol = jump_solution
    hr = hedge(sol, model)
    assert hr.variance_profile[-1] == 0.0
    assert np.all(np.diff(hr.variance_profile) <= 0)


def test_objective_complete_market_is_zero(bs_solution):
    model, sol = bs_solution
    alpha, _ = optimal_portfolio(sol, model)
    val = variance_objective(alpha, sol.Z, model, sol.P, sol.W, 0, sol.scenario.grid)
    assert val < 1e-20


# ---------------------------------------------------------------- positivity


def test_positivity_no_noise():
    m = black_scholes(vol=0.0, mu=0.02)
    sol = solve(m, N=10, paths=200)
    rep = positivity_check(sol.P)
    assert rep.negative_fraction == [0.0]
    assert rep.nonpositive_fraction == [0.0]
    assert rep.most_negative == [0.0]


def test_positivity_report_brownian(bs_solution):
    _, sol = bs_solution
    rep = positivity_check(sol.P)
    assert 0.0 <= rep.negative_fraction[0] <= 1.0
    assert rep.most_negative[0] <= 0.0


def test_positivity_jumps_within_bound():
    m = jump_diffusion(vol=0.2, mu=0.0)
    assert jump_positivity_bound(m) > -1.0
    sc_sol = solve(m, N=50, paths=20_000, seed=8)
    assert positivity_check(sc_sol.P).nonpositive_fraction == [0.0]


def test_positivity_report_flags_negative_prices():
    P = np.array([[[1.0], [-0.5], [0.0]]])
    rep = positivity_check(P)
    assert rep.negative_fraction == [pytest.approx(1 / 3)]
    assert rep.nonpositive_fraction == [pytest.approx(2 / 3)]
    assert rep.most_negative == [-0.5]


def test_hedge_summary_keys(bs_solution):
    model, sol = bs_solution
    s = hedge(sol, model).summary()
    assert {"alpha0_mean", "var_C0", "empirical_E_C0_sq", "empirical_mean_C0"} <= set(s)
