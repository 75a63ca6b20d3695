"""Scenario-driven command line interface.

Subcommands: optimize, check, efficiency, closed-form, band-profile, tables,
models.  Exit codes: 0 success (certified where applicable), 1 a computed
certificate failed, 2 invalid input.  All randomness comes from the scenario
seed (or --seed); there is no wall-clock seeding.
"""

from __future__ import annotations

import argparse
import sys


from curvecmp.designs import CriterionSpec, band_profile, criterion_value, pair_from_designs
from curvecmp.equivalence import (
    check_gamma,
    check_mu_inf,
    check_mu_p,
    check_nu,
    efficiency,
    extremal_set,
    solve_rho,
)
from curvecmp.errors import CurveCmpError, InvalidInputError
from curvecmp.extrapolation import corollary_design, extrapolation_design_poly
from curvecmp.models import DEFAULT_THETAS, make_model, model_names
from curvecmp.optimize import optimize
from curvecmp.scenarios import (
    design_to_dict,
    dump_json,
    load_design_file,
    load_scenario,
    pair_to_dict,
)
from curvecmp.tables import BenchmarkSuite, build_table, rows_to_csv

_CERT_EXTREMAL_TOL = 1e-4


def _write(text: str, out: str | None):
    if out:
        with open(out, "w", encoding="utf-8") as fh:
            fh.write(text if text.endswith("\n") else text + "\n")
    else:
        sys.stdout.write(text if text.endswith("\n") else text + "\n")


def _interval_arg(values, label):
    if len(values) != 2:
        raise InvalidInputError(f"{label} expects two numbers: lo hi")
    return (float(values[0]), float(values[1]))


def cmd_optimize(args) -> int:
    scenario = load_scenario(args.scenario)
    problem = scenario.problem(grid_n=args.grid)
    config = scenario.pso_config(args.seed)
    result = optimize(problem, config, threshold=args.threshold,
                      cert_tol=args.tol, restarts=args.restarts)
    _write(dump_json(result.to_dict()), args.out)
    return 0 if result.certified else 1


def _scenario_pair(scenario, designs, gamma_file, grid_n):
    """Assemble the DesignPair a check needs, honoring the scenario mode."""
    spec = scenario.criterion_spec(grid_n)
    for d in designs:
        d.check_in_space(spec.design_space)
    if scenario.eta is not None:
        if len(designs) != 1:
            raise InvalidInputError("nu-criterion scenarios check a single design file")
        return spec, designs[0], None, scenario.gamma or (0.5, 0.5)
    if len(designs) != 2:
        raise InvalidInputError("this scenario checks a design pair (two designs)")
    if scenario.gamma is None:
        if gamma_file is None:
            raise InvalidInputError("allocation-flexible scenarios need gamma in the design file")
        gamma = gamma_file
    else:
        gamma = gamma_file or scenario.gamma
    return spec, designs[0], designs[1], gamma


def cmd_check(args) -> int:
    scenario = load_scenario(args.scenario)
    designs, gamma_file = load_design_file(args.design)
    spec, xi1, xi2, gamma = _scenario_pair(scenario, designs, gamma_file, args.grid)
    seed = scenario.seed if args.seed is None else args.seed
    if scenario.eta is not None:
        pair = pair_from_designs(xi1, scenario.eta, scenario.models, scenario.sigma2, gamma)
        report = check_nu(xi1, scenario.eta, spec, pair.groups, cert_tol=args.tol, seed=seed)
    elif scenario.gamma is None:
        report = check_gamma(xi1, xi2, gamma, spec, scenario.models, scenario.sigma2,
                             cert_tol=args.tol, seed=seed)
    else:
        pair = pair_from_designs(xi1, xi2, scenario.models, scenario.sigma2, gamma)
        if spec.is_sup:
            ext = extremal_set(pair, spec, tol=_CERT_EXTREMAL_TOL)
            rho = solve_rho(pair, spec, ext, seed=seed)
            report = check_mu_inf(pair, spec, rho, cert_tol=args.tol)
        else:
            report = check_mu_p(pair, spec, cert_tol=args.tol)
    _write(dump_json(report.to_dict()), args.out)
    return 0 if report.certified else 1


def cmd_efficiency(args) -> int:
    scenario = load_scenario(args.scenario)
    designs, gamma_file = load_design_file(args.design)
    opt_designs, opt_gamma = load_design_file(args.optimal)
    spec = scenario.criterion_spec(args.grid)
    gamma = gamma_file or scenario.gamma or (0.5, 0.5)
    ogamma = opt_gamma or scenario.gamma or (0.5, 0.5)
    if scenario.eta is not None:
        designs = [designs[0], scenario.eta]
        opt_designs = [opt_designs[0], scenario.eta]
    pair = pair_from_designs(designs[0], designs[1], scenario.models, scenario.sigma2, gamma)
    optimal = pair_from_designs(opt_designs[0], opt_designs[1], scenario.models,
                                scenario.sigma2, ogamma)
    eff = efficiency(pair, optimal, spec)
    _write(dump_json({
        "efficiency": eff,
        "criterion": spec.p,
        "value_design": criterion_value(pair, spec),
        "value_optimal": criterion_value(optimal, spec),
    }), args.out)
    return 0


def cmd_closed_form(args) -> int:
    space = _interval_arg(args.design_space, "--design-space")
    region = _interval_arg(args.region, "--region")
    if args.model == "polynomial":
        if args.degree is None:
            raise InvalidInputError("polynomial closed form needs --degree")
        design = extrapolation_design_poly(args.degree, space, region)
    else:
        if not args.theta:
            raise InvalidInputError("model closed forms need --theta")
        design = corollary_design(args.model, args.theta, space, region)
    _write(dump_json(design_to_dict(design)), args.out)
    return 0


def cmd_band_profile(args) -> int:
    scenario = load_scenario(args.scenario)
    spec = scenario.criterion_spec(args.grid)
    grid = spec.z_grid

    def profile_for(path):
        designs, gamma_file = load_design_file(path)
        if scenario.eta is not None and len(designs) == 1:
            designs = [designs[0], scenario.eta]
        gamma = gamma_file or scenario.gamma or (0.5, 0.5)
        pair = pair_from_designs(designs[0], designs[1], scenario.models,
                                 scenario.sigma2, gamma)
        return band_profile(pair, args.n, grid, quantile=args.quantile)

    main = profile_for(args.design)
    columns = ["t", "halfwidth"]
    data = [main[:, 0], main[:, 1]]
    if args.baseline:
        base = profile_for(args.baseline)
        columns.append("halfwidth_baseline")
        data.append(base[:, 1])
    lines = [",".join(columns)]
    for row in zip(*data):
        lines.append(",".join(f"{v:.10g}" for v in row))
    _write("\n".join(lines), args.out)
    return 0


def cmd_tables(args) -> int:
    suite = BenchmarkSuite(seed=args.seed if args.seed is not None else 20260810,
                           threshold=args.threshold, cert_tol=args.tol)
    try:
        rows = build_table(args.which, suite)
    except ValueError as exc:
        raise InvalidInputError(str(exc))
    _write(rows_to_csv(rows), args.out)
    return 0


def cmd_models(args) -> int:
    lines = []
    for name in model_names():
        default = DEFAULT_THETAS.get(name)
        hint = {
            "emax": "theta1 + theta2*t/(theta3+t), theta3 > 0",
            "exponential": "theta1 + theta2*exp(t/theta3), theta3 != 0",
            "loglinear": "theta1 + theta2*log(t+theta3), theta3 > 0 (theta3_fixed selects 2 free parameters)",
            "michaelis-menten": "theta1*t/(theta2+t), theta2 > 0",
            "polynomial": "sum_j theta_j t^j (degree from theta length)",
            "weighted-polynomial": "omega(t) * sum_j theta_j t^j, omega in {constant, exp, power}",
        }[name]
        suffix = f"  [benchmark theta: {list(default)}]" if default else ""
        lines.append(f"{name:20s} {hint}{suffix}")
    _write("\n".join(lines), args.out)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="curvecmp",
        description="Optimal designs for comparing two parametric regression curves.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, seed=True, grid=True, tol=True):
        p.add_argument("--out", help="write output to this file instead of stdout")
        if seed:
            p.add_argument("--seed", type=int, default=None, help="override the scenario seed")
        if grid:
            p.add_argument("--grid", type=int, default=None, help="grid size for scans and checks")
        if tol:
            p.add_argument("--tol", type=float, default=1e-4,
                           help="relative certification tolerance (default 1e-4)")

    p = sub.add_parser("optimize", help="compute and certify an optimal design")
    p.add_argument("scenario")
    common(p)
    p.add_argument("--threshold", type=float, default=0.99,
                   help="efficiency lower bound required for certification (default 0.99)")
    p.add_argument("--restarts", type=int, default=5, help="maximum seeded attempts (default 5)")
    p.set_defaults(func=cmd_optimize)

    p = sub.add_parser("check", help="run the matching equivalence check on a design file")
    p.add_argument("scenario")
    p.add_argument("--design", required=True, help="design or design-pair JSON file")
    common(p)
    p.set_defaults(func=cmd_check)

    p = sub.add_parser("efficiency", help="criterion ratio of an optimal pair to a candidate")
    p.add_argument("scenario")
    p.add_argument("--design", required=True)
    p.add_argument("--optimal", required=True)
    common(p, tol=False)
    p.set_defaults(func=cmd_efficiency)

    p = sub.add_parser("closed-form", help="analytic extrapolation design for a model")
    p.add_argument("model", choices=["emax", "loglinear", "michaelis-menten", "mm", "polynomial"])
    p.add_argument("--theta", type=float, nargs="+", help="model parameters")
    p.add_argument("--degree", type=int, help="polynomial degree (polynomial only)")
    p.add_argument("--design-space", type=float, nargs=2, required=True, metavar=("LO", "HI"))
    p.add_argument("--region", type=float, nargs=2, required=True, metavar=("LO", "HI"))
    common(p, seed=False, grid=False, tol=False)
    p.set_defaults(func=cmd_closed_form)

    p = sub.add_parser("band-profile", help="confidence band half-width profile")
    p.add_argument("scenario")
    p.add_argument("--design", required=True)
    p.add_argument("--baseline", help="second design file for side-by-side comparison")
    p.add_argument("--n", type=int, required=True, help="total sample size")
    p.add_argument("--quantile", type=float, default=1.96,
                   help="band constant D (default 1.96; calibrate for simultaneous coverage)")
    common(p, seed=False, tol=False)
    p.set_defaults(func=cmd_band_profile)

    p = sub.add_parser("tables", help="recompute a benchmark table as CSV")
    p.add_argument("which", type=int, choices=[2, 3, 4, 5])
    common(p, grid=False)
    p.add_argument("--threshold", type=float, default=0.99)
    p.set_defaults(func=cmd_tables)

    p = sub.add_parser("models", help="list built-in models")
    common(p, seed=False, grid=False, tol=False)
    p.set_defaults(func=cmd_models)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except CurveCmpError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
