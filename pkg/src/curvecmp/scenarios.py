"""Scenario and design files: versioned JSON in, strictly validated.

A scenario file describes one comparison problem end to end (models, group
variances, allocation, spaces, criterion, support sizes, optional frozen
design, swarm overrides, seed).  Unknown keys are rejected so that typos
fail loudly instead of silently running a different problem.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from curvecmp.designs import CriterionSpec, Design, P_INF
from curvecmp.errors import InvalidInputError
from curvecmp.models import ModelSpec, make_model
from curvecmp.optimize import Problem
from curvecmp.pso import PsoConfig

SCENARIO_SCHEMA = "curvecmp/scenario-v1"
DESIGN_SCHEMA = "curvecmp/design-v1"
PAIR_SCHEMA = "curvecmp/design-pair-v1"

_SCENARIO_KEYS = {
    "schema", "models", "sigma2", "gamma", "design_space", "comparison_region",
    "criterion", "lambda", "grid_n", "k", "eta", "pso", "seed",
}
_MODEL_KEYS = {"name", "theta", "theta3_fixed", "weight"}
_LAMBDA_KEYS = {"nodes", "weights"}
_ETA_KEYS = {"points", "weights"}
_PSO_KEYS = {"swarm_size", "inertia", "cognitive", "social", "max_iters", "stagnation_window"}
_DESIGN_KEYS = {"schema", "points", "weights"}
_PAIR_KEYS = {"schema", "designs", "gamma"}


def _require_keys(d, allowed, required, where):
    if not isinstance(d, dict):
        raise InvalidInputError(f"{where}: expected an object")
    unknown = set(d) - allowed
    if unknown:
        raise InvalidInputError(f"{where}: unknown keys {sorted(unknown)}")
    missing = required - set(d)
    if missing:
        raise InvalidInputError(f"{where}: missing keys {sorted(missing)}")


def _parse_model(d, where) -> ModelSpec:
    _require_keys(d, _MODEL_KEYS, {"name", "theta"}, where)
    return make_model(
        d["name"], d["theta"],
        theta3_fixed=d.get("theta3_fixed", False),
        weight=d.get("weight"),
    )


@dataclass
class Scenario:
    """Parsed scenario: everything needed to build a Problem and PsoConfig."""

    models: tuple[ModelSpec, ModelSpec]
    sigma2: tuple[float, float]
    gamma: tuple[float, float] | None  # None means optimize the allocation
    design_space: tuple[float, float]
    comparison_region: tuple[float, float]
    criterion: float | str
    seed: int
    lambda_nodes: np.ndarray | None = None
    lambda_weights: np.ndarray | None = None
    grid_n: int = 501
    k: tuple[int, int] | None = None
    eta: Design | None = None
    pso_overrides: dict = field(default_factory=dict)

    def criterion_spec(self, grid_n: int | None = None) -> CriterionSpec:
        return CriterionSpec(
            p=self.criterion,
            design_space=self.design_space,
            comparison_region=self.comparison_region,
            lambda_nodes=self.lambda_nodes,
            lambda_weights=self.lambda_weights,
            grid_n=grid_n or self.grid_n,
        )

    def problem(self, grid_n: int | None = None) -> Problem:
        return Problem(
            spec=self.criterion_spec(grid_n),
            models=self.models,
            sigma2=self.sigma2,
            gamma=self.gamma if self.gamma is not None else (0.5, 0.5),
            k=self.k,
            eta=self.eta,
            optimize_allocation=self.gamma is None,
        )

    def pso_config(self, seed: int | None = None) -> PsoConfig:
        return PsoConfig(seed=self.seed if seed is None else int(seed), **self.pso_overrides)


def scenario_from_dict(d: dict) -> Scenario:
    _require_keys(d, _SCENARIO_KEYS, {
        "schema", "models", "sigma2", "design_space", "comparison_region", "criterion", "seed",
    }, "scenario")
    if d["schema"] != SCENARIO_SCHEMA:
        raise InvalidInputError(f"scenario: expected schema {SCENARIO_SCHEMA!r}, got {d['schema']!r}")
    if not isinstance(d["models"], list) or len(d["models"]) != 2:
        raise InvalidInputError("scenario.models: expected a list of exactly two models")
    models = tuple(_parse_model(m, f"scenario.models[{i}]") for i, m in enumerate(d["models"]))

    sigma2 = d["sigma2"]
    if not isinstance(sigma2, list) or len(sigma2) != 2:
        raise InvalidInputError("scenario.sigma2: expected [sigma1^2, sigma2^2]")
    sigma2 = tuple(float(s) for s in sigma2)
    if any(s <= 0 for s in sigma2):
        raise InvalidInputError("scenario.sigma2: variances must be positive")

    gamma_raw = d.get("gamma", [0.5, 0.5])
    if gamma_raw == "optimize":
        gamma = None
    else:
        if not isinstance(gamma_raw, list) or len(gamma_raw) != 2:
            raise InvalidInputError('scenario.gamma: expected [g1, g2] or "optimize"')
        gamma = tuple(float(g) for g in gamma_raw)
        if not (0 < gamma[0] < 1 and 0 < gamma[1] < 1) or abs(sum(gamma) - 1) > 1e-9:
            raise InvalidInputError("scenario.gamma: fractions must be in (0,1) and sum to 1")

    criterion = d["criterion"]
    if criterion != P_INF:
        try:
            criterion = float(criterion)
        except (TypeError, ValueError):
            raise InvalidInputError('scenario.criterion: expected a number in [1, inf) or "inf"')

    lam_nodes = lam_weights = None
    if "lambda" in d:
        _require_keys(d["lambda"], _LAMBDA_KEYS, _LAMBDA_KEYS, "scenario.lambda")
        lam_nodes = np.asarray(d["lambda"]["nodes"], dtype=float)
        lam_weights = np.asarray(d["lambda"]["weights"], dtype=float)

    k = d.get("k")
    if k is not None:
        if not isinstance(k, list) or len(k) != 2:
            raise InvalidInputError("scenario.k: expected [k1, k2]")
        k = (int(k[0]), int(k[1]))

    eta = None
    if "eta" in d:
        _require_keys(d["eta"], _ETA_KEYS, _ETA_KEYS, "scenario.eta")
        eta = Design(np.asarray(d["eta"]["points"], dtype=float),
                     np.asarray(d["eta"]["weights"], dtype=float))

    pso = d.get("pso", {})
    _require_keys(pso, _PSO_KEYS, set(), "scenario.pso")

    if not isinstance(d["seed"], int):
        raise InvalidInputError("scenario.seed: expected an integer (no wall-clock seeding)")

    scenario = Scenario(
        models=models,
        sigma2=sigma2,
        gamma=gamma,
        design_space=tuple(float(v) for v in d["design_space"]),
        comparison_region=tuple(float(v) for v in d["comparison_region"]),
        criterion=criterion,
        seed=d["seed"],
        lambda_nodes=lam_nodes,
        lambda_weights=lam_weights,
        grid_n=int(d.get("grid_n", 501)),
        k=k,
        eta=eta,
        pso_overrides=dict(pso),
    )
    scenario.problem()  # validate eagerly so errors surface at parse time
    return scenario


def load_scenario(path) -> Scenario:
    with open(path, "r", encoding="utf-8") as fh:
        try:
            data = json.load(fh)
        except json.JSONDecodeError as exc:
            raise InvalidInputError(f"{path}: not valid JSON ({exc})")
    return scenario_from_dict(data)


def design_to_dict(design: Design) -> dict:
    return {"schema": DESIGN_SCHEMA, **design.to_dict()}


def design_from_dict(d: dict, where="design") -> Design:
    _require_keys(d, _DESIGN_KEYS, {"points", "weights"}, where)
    if d.get("schema", DESIGN_SCHEMA) != DESIGN_SCHEMA:
        raise InvalidInputError(f"{where}: expected schema {DESIGN_SCHEMA!r}")
    return Design(np.asarray(d["points"], dtype=float), np.asarray(d["weights"], dtype=float))


def pair_to_dict(designs, gamma=None) -> dict:
    out = {"schema": PAIR_SCHEMA, "designs": [design_to_dict(d) for d in designs]}
    if gamma is not None:
        out["gamma"] = [float(g) for g in gamma]
    return out


def pair_from_dict(d: dict):
    """Returns (designs, gamma-or-None); accepts single-design files too."""
    if "designs" not in d:
        return [design_from_dict(d)], None
    _require_keys(d, _PAIR_KEYS, {"designs"}, "design pair")
    if d.get("schema", PAIR_SCHEMA) != PAIR_SCHEMA:
        raise InvalidInputError(f"design pair: expected schema {PAIR_SCHEMA!r}")
    designs = [design_from_dict(e, f"designs[{i}]") for i, e in enumerate(d["designs"])]
    gamma = d.get("gamma")
    if gamma is not None:
        gamma = tuple(float(g) for g in gamma)
    return designs, gamma


def load_design_file(path):
    with open(path, "r", encoding="utf-8") as fh:
        try:
            data = json.load(fh)
        except json.JSONDecodeError as exc:
            raise InvalidInputError(f"{path}: not valid JSON ({exc})")
    return pair_from_dict(data)


def dump_json(obj, path=None, indent=2):
    text = json.dumps(obj, indent=indent, sort_keys=False)
    if path is None:
        return text
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(text + "\n")
    return text
