"""Command-line entry point: ``levy-fbsde {basis,simulate,solve,hedge,run}``.

Exit codes: 0 success, 2 configuration error, 3 numerical failure.  Every
failure prints one JSON error record on stderr (and to ``error.json`` in the
output directory when one is known).
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import math
import sys
from pathlib import Path

import numpy as np

from .config import RunConfig, apply_overrides, drivers_only, load_config, parse_config
from .errors import ConfigError, LevyFBSDEError
from .fbsde_solver import FBSDESolution, picard_solve
from .hedging import HedgeResult, bs_oracle, hedge, positivity_check
from .levy_basis import TeugelsBasis, build_basis
from .market_model import MarketModel
from .path_engine import ScenarioSet, bracket_matrix, dump_increments_csv, simulate_drivers

log = logging.getLogger("levy_fbsde")


def _dump_json(obj, path: Path) -> None:
    path.write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n")


def _mean_se(x: np.ndarray) -> dict:
    n = len(x)
    se = float(np.std(x, ddof=1) / math.sqrt(n)) if n > 1 else 0.0
    return {"mean": float(np.mean(x)), "se": se}


def basis_table(bases: list[TeugelsBasis]) -> str:
    lines = []
    for j, b in enumerate(bases, start=1):
        lines.append(f"driver {j}: sigma={b.sigma:g} atoms={list(b.jumps.atoms)} K={b.order}")
        lines.append(f"  {'k':>3}  {'sigma*q(0)':>14}  q_(k-1) / p_k coefficients (ascending)")
        for k in range(1, b.order + 1):
            bc = b.sigma * b.q(k)(0.0)
            q = ", ".join(f"{c:.12g}" for c in b.q(k).coefficients)
            p = ", ".join(f"{c:.12g}" for c in b.p(k).coefficients)
            lines.append(f"  {k:>3}  {bc:>14.10g}  q=[{q}]")
            lines.append(f"  {'':>3}  {'':>14}  p=[{p}]")
    return "\n".join(lines)


# ---------------------------------------------------------------------------
# pipeline stages
# ---------------------------------------------------------------------------


def simulate_stage(cfg: RunConfig, model: MarketModel) -> ScenarioSet:
    return simulate_drivers(
        model.drivers, cfg.time_grid(), cfg.paths, cfg.seed, workers=cfg.workers, bases=model.bases
    )


def scenario_summary(scenario: ScenarioSet) -> dict:
    est, se = bracket_matrix(scenario)
    H_T = scenario.H_terminal()
    return {
        "labels": [list(x) for x in scenario.labels],
        "bracket": est.tolist(),
        "bracket_se": se.tolist(),
        "H_T": [_mean_se(H_T[:, c]) for c in range(H_T.shape[1])],
    }


def solve_summary(cfg: RunConfig, model: MarketModel, sol: FBSDESolution) -> dict:
    out = {
        "price": {"mean": float(sol.W[0, 0]), "se": _mean_se(sol.pathwise_values())["se"]},
        "solver": sol.diagnostics(),
        "positivity": positivity_check(sol.P).as_dict(),
    }
    p = model.params
    payoff = model.coefficients.h
    if model.name == "black_scholes" and model.d == 1 and getattr(payoff, "kind", None) == "call":
        price, delta = bs_oracle(model.initial_prices[0], payoff.strike, p["r"], float(p["vol"]), cfg.grid.T)
        out["bs_oracle"] = {"price": price, "delta": delta}
    return out


def run_pipeline(cfg: RunConfig) -> tuple[dict, MarketModel, FBSDESolution, HedgeResult]:
    model = cfg.build_model()
    scenario = simulate_stage(cfg, model)
    sol = picard_solve(model, scenario, cfg.solver_config())
    hr = hedge(sol, model)
    summary = {
        "schema_version": cfg.schema_version,
        "config": cfg.model_dump(mode="json", exclude={"workers", "outputs"}),
        **solve_summary(cfg, model, sol),
        "hedge": hr.summary(),
    }
    return summary, model, sol, hr


def write_reports(out: Path, reports, summary: dict, sol: FBSDESolution, hr: HedgeResult) -> None:
    out.mkdir(parents=True, exist_ok=True)
    times = sol.scenario.grid.times
    if "summary" in reports:
        _dump_json(summary, out / "summary.json")
    if "variance_profile" in reports:
        with open(out / "variance_profile.csv", "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["step", "t", "objective", "hedgeable", "tail", "empirical_E_C_sq", "empirical_mean_C"])
            for n, t in enumerate(times):
                w.writerow([n, repr(float(t)), repr(float(hr.variance_profile[n])),
                            repr(float(hr.hedgeable_profile[n])), repr(float(hr.tail_profile[n])),
                            repr(float(hr.empirical_second_moment[n])), repr(float(hr.empirical_mean[n]))])
    if "alpha_stats" in reports:
        with open(out / "alpha_stats.csv", "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["step", "t", "asset", "mean", "sd"])
            mean = hr.alpha.mean(axis=0)
            sd = hr.alpha.std(axis=0)
            for n in range(hr.alpha.shape[1]):
                for i in range(hr.alpha.shape[2]):
                    w.writerow([n, repr(float(times[n])), i + 1, repr(float(mean[n, i])), repr(float(sd[n, i]))])
    if "capital_terminal" in reports:
        # capital requirement over the whole horizon, C at t = 0, per path
        with open(out / "capital_terminal.csv", "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["path", "C0", "C0_formula"])
            for p in range(hr.C.shape[0]):
                w.writerow([p, repr(float(hr.C[p, 0])), repr(float(hr.C_formula[p, 0]))])


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------


def _load(args) -> RunConfig:
    cfg = load_config(args.config)
    return apply_overrides(cfg, paths=args.paths, steps=args.steps, seed=args.seed, out=args.out,
                           workers=args.workers)


def cmd_basis(args) -> int:
    data = json.loads(Path(args.config).read_text()) if args.config else {}
    specs = drivers_only(data)
    if specs is None:
        specs = list(parse_config(data).build_model().drivers)
    print(basis_table([build_basis(s) for s in specs]))
    return 0


def cmd_simulate(args) -> int:
    cfg = _load(args)
    model = cfg.build_model()
    scenario = simulate_stage(cfg, model)
    out = Path(cfg.outputs.directory)
    out.mkdir(parents=True, exist_ok=True)
    _dump_json(scenario_summary(scenario), out / "scenario.json")
    if args.dump_increments:
        dump_increments_csv(scenario, out / "increments.csv")
    print(out / "scenario.json")
    return 0


def cmd_solve(args) -> int:
    cfg = _load(args)
    model = cfg.build_model()
    sol = picard_solve(model, simulate_stage(cfg, model), cfg.solver_config())
    out = Path(cfg.outputs.directory)
    out.mkdir(parents=True, exist_ok=True)
    result = solve_summary(cfg, model, sol)
    _dump_json(result, out / "solver.json")
    print(json.dumps(result["price"]))
    return 0


def cmd_hedge(args) -> int:
    cfg = _load(args)
    summary, _, sol, hr = run_pipeline(cfg)
    reports = [r for r in cfg.outputs.reports if r != "summary"]
    write_reports(Path(cfg.outputs.directory), reports, summary, sol, hr)
    print(json.dumps(summary["hedge"], sort_keys=True))
    return 0


def cmd_run(args) -> int:
    cfg = _load(args)
    summary, _, sol, hr = run_pipeline(cfg)
    out = Path(cfg.outputs.directory)
    write_reports(out, cfg.outputs.reports, summary, sol, hr)
    print(f"price {summary['price']['mean']:.6f} +- {summary['price']['se']:.6f}  -> {out}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="levy-fbsde", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, fn, helptext in [
        ("basis", cmd_basis, "print the orthonormal Teugels basis of each driver"),
        ("simulate", cmd_simulate, "simulate driver paths and report empirical brackets"),
        ("solve", cmd_solve, "solve the FBSDE and report the price"),
        ("hedge", cmd_hedge, "solve and write the hedging reports"),
        ("run", cmd_run, "full pipeline with summary.json"),
    ]:
        p = sub.add_parser(name, help=helptext)
        p.set_defaults(func=fn)
        p.add_argument("--config", required=name != "basis")
        p.add_argument("--paths", type=int)
        p.add_argument("--steps", type=int)
        p.add_argument("--seed", type=int)
        p.add_argument("--out")
        p.add_argument("--workers", type=int)
        if name == "simulate":
            p.add_argument("--dump-increments", action="store_true", help="also write increments.csv")
    return parser


def _error_dir(args) -> Path | None:
    if getattr(args, "out", None):
        return Path(args.out)
    if args.command == "basis" or not getattr(args, "config", None):
        return None
    # the config may be the thing that failed validation, so read the raw document
    try:
        data = json.loads(Path(args.config).read_text())
        directory = data.get("outputs", {}).get("directory", "out")
        return Path(directory) if isinstance(directory, str) else None
    except (OSError, ValueError, AttributeError):
        return None


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING)
    try:
        return args.func(args)
    except LevyFBSDEError as exc:
        record, code = exc.to_record(), exc.exit_code
    except (ValueError, json.JSONDecodeError) as exc:
        record, code = ConfigError(str(exc), location=args.command).to_record(), 2
    except FileNotFoundError as exc:
        record, code = ConfigError(str(exc), location="--config").to_record(), 2
    print(json.dumps(record, sort_keys=True), file=sys.stderr)
    where = _error_dir(args)
    if where is not None:
        try:
            where.mkdir(parents=True, exist_ok=True)
            _dump_json(record, where / "error.json")
        except OSError:
            pass
    return code


if __name__ == "__main__":
    sys.exit(main())
