"""Optimality certification, extremal-point measures, and efficiency bounds.

A candidate design (pair) is optimal exactly when a pointwise inequality
holds over the design space, with equality at the support points.  For the
sup criterion the inequality integrates against a measure on the extremal
points of the variance function; that measure is itself found by minimizing
a max-type functional over the simplex.  Each check reports the worst
violation, the equality residuals at the support, the measure used, and a
lower efficiency bound that needs no knowledge of the optimum.

All left-hand sides separate additively in the free design-space variables,
so maxima over product grids reduce to sums of one-dimensional maxima.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from curvecmp.designs import (
    CriterionSpec,
    Design,
    DesignPair,
    PairEvaluator,
    _check_lambda_support,
    criterion_value,
    pair_from_designs,
)
from curvecmp.errors import InvalidInputError
from curvecmp.gridopt import polished_local_maxima, polished_max
from curvecmp.pso import PsoConfig, pso_minimize, shrink_box

DEFAULT_CERT_TOL = 1e-4
DEFAULT_EXTREMAL_TOL = 1e-6
DEFAULT_CHECK_GRID = 201
_ATOM_TOL = 1e-3  # how far below the supremum a measure atom may sit


@dataclass(frozen=True)
class ExtremalSet:
    """Points of the comparison region attaining the variance supremum."""

    points: np.ndarray
    level: float
    tol: float

    @property
    def k(self) -> int:
        return self.points.size


@dataclass(frozen=True)
class RhoMeasure:
    """Probability measure on (near-)extremal points."""

    atoms: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        atoms = np.atleast_1d(np.asarray(self.atoms, dtype=float))
        weights = np.atleast_1d(np.asarray(self.weights, dtype=float))
        if atoms.shape != weights.shape or atoms.ndim != 1:
            raise InvalidInputError("atoms and weights must be equal-length 1-d arrays")
        if np.any(weights < 0) or abs(weights.sum() - 1.0) > 1e-12:
            raise InvalidInputError("measure weights must be nonnegative and sum to 1")
        object.__setattr__(self, "atoms", atoms)
        object.__setattr__(self, "weights", weights)

    def to_dict(self):
        return {"atoms": self.atoms.tolist(), "weights": self.weights.tolist()}


@dataclass(frozen=True)
class EquivalenceReport:
    """Outcome of one equivalence-inequality check.

    ``max_violation`` is the most positive left-hand side found (absolute
    units of ``scale``); ``support_residuals`` are the equality defects at
    support points.  The verdict is certified exactly when both stay within
    ``cert_tol`` relative to ``scale``.
    """

    criterion: str
    p: float | str
    value: float
    scale: float
    max_violation: float
    support_residuals: tuple
    rho: RhoMeasure | None
    eff_lower_bound: float
    cert_tol: float
    verdict: str

    @property
    def certified(self) -> bool:
        return self.verdict == "certified"

    @property
    def rel_violation(self) -> float:
        return self.max_violation / self.scale

    @property
    def max_support_residual(self) -> float:
        return max((r["residual"] for r in self.support_residuals), default=0.0)

    def to_dict(self):
        return {
            "schema": "curvecmp/report-v1",
            "criterion": self.criterion,
            "p": self.p,
            "value": self.value,
            "scale": self.scale,
            "max_violation": self.max_violation,
            "rel_violation": self.rel_violation,
            "support_residuals": list(self.support_residuals),
            "max_support_residual": self.max_support_residual,
            "rho": self.rho.to_dict() if self.rho is not None else None,
            "eff_lower_bound": self.eff_lower_bound,
            "cert_tol": self.cert_tol,
            "verdict": self.verdict,
        }


def _make_report(criterion, spec, value, scale, max_violation, residuals, rho, bound, cert_tol):
    tol_abs = cert_tol * scale
    ok = max_violation <= tol_abs and all(r["residual"] <= tol_abs for r in residuals)
    return EquivalenceReport(
        criterion=criterion,
        p=spec.p,
        value=float(value),
        scale=float(scale),
        max_violation=float(max_violation),
        support_residuals=tuple(residuals),
        rho=rho,
        eff_lower_bound=float(min(1.0, bound)),
        cert_tol=float(cert_tol),
        verdict="certified" if ok else "not-certified",
    )


def extremal_set(pair: DesignPair, spec: CriterionSpec, tol: float = DEFAULT_EXTREMAL_TOL) -> ExtremalSet:
    """All polished local maximizers of the variance within tol of its sup.

    Near-duplicates are merged at a separation of 1e-6 times the comparison
    region's length.
    """
    ev = PairEvaluator(pair)
    grid = spec.z_grid
    values = ev.phi(grid)
    pts, vals = polished_local_maxima(lambda t: float(ev.phi(t)), grid, values)
    level = float(vals.max())
    keep = vals >= level - tol * abs(level)
    pts, vals = pts[keep], vals[keep]
    zlo, zhi = spec.comparison_region
    sep = 1e-6 * max(zhi - zlo, 1e-300)
    merged_p, merged_v = [pts[0]], [vals[0]]
    for t, v in zip(pts[1:], vals[1:]):
        if t - merged_p[-1] <= sep:
            if v > merged_v[-1]:
                merged_p[-1], merged_v[-1] = t, v
        else:
            merged_p.append(t)
            merged_v.append(v)
    return ExtremalSet(points=np.asarray(merged_p), level=level, tol=tol)


class _QuadFormMax:
    """Grid+golden maximization of t -> f(t)' Q f(t) for one model."""

    def __init__(self, model, Q, nodes):
        self.model = model
        self.Q = np.asarray(Q, dtype=float)
        self.nodes = np.asarray(nodes, dtype=float)
        self.grid_values = self.at(self.nodes)

    def at(self, t):
        F = self.model.gradient(np.asarray(t, dtype=float))
        return np.einsum("...d,de,...e->...", F, self.Q, F)

    def max(self):
        _, val = polished_max(lambda t: float(self.at(t)), self.nodes, self.grid_values)
        return val


def _atom_info(model, minv, atoms, weights):
    """M^-1 M(rho) M^-1 for one group, with M(rho) = sum_a w_a f(z_a) f(z_a)'."""
    F = model.gradient(np.asarray(atoms, dtype=float))
    Mrho = (F * np.asarray(weights)[:, None]).T @ F
    return minv @ Mrho @ minv


def _minimize_on_simplex(batch_objective, k, seed, context):
    """Deterministic PSO over the k-simplex with shrinking polish rounds.

    ``context`` is a tuple of ints namespacing the particle random streams so
    measure solves never share randomness with the design optimizer.
    """
    bounds = np.tile([0.0, 1.0], (k, 1))
    blocks = [(0, k)]
    cfg = PsoConfig(seed=seed, swarm_size=max(16, 8 * k), max_iters=500, stagnation_window=120)
    best = pso_minimize(batch_objective, bounds, blocks, cfg, context=tuple(context) + (0,))
    pos, val = best.position, best.value
    small = cfg.with_(swarm_size=16, max_iters=200, stagnation_window=60)
    for round_idx, h in enumerate((0.1, 0.01, 1e-3, 1e-4, 1e-5, 1e-6), start=1):
        box = shrink_box(pos, bounds, h)
        res = pso_minimize(batch_objective, box, blocks, small, context=tuple(context) + (round_idx,), init=pos)
        if res.value < val:
            pos, val = res.position, res.value
    w = np.abs(pos)
    return w / w.sum(), val


class _RhoParts:
    """One group's contribution to a measure objective.

    Precomputes H[n, a] = coeff * (f(x_n)' M^-1 f(z_a))^2 on the check grid,
    so the inner maximum over the design space is a matrix product in the
    measure weights, refined by a batched golden polish per candidate.
    """

    def __init__(self, model, minv, coeff, atoms, x_nodes):
        self.model = model
        self.minv = minv
        self.coeff = coeff
        self.x_nodes = np.asarray(x_nodes, dtype=float)
        Fz = model.gradient(np.asarray(atoms, dtype=float))  # (k, d)
        self.U = Fz @ minv  # rows are M^-1 f(z_a)
        Fx = model.gradient(self.x_nodes)  # (n, d)
        self.H = coeff * (Fx @ self.U.T) ** 2  # (n, k)

    def max_over_x(self, P):
        """Grid max_t of the rho-averaged squared cross term, per row of P.

        The measure solve only needs the argmin in the weights, which is
        insensitive to sub-grid error; reports re-evaluate the final measure
        with polished maxima.
        """
        return (self.H @ P.T).max(axis=0)


def solve_rho(pair: DesignPair, spec: CriterionSpec, extremal: ExtremalSet, seed: int = 0) -> RhoMeasure:
    """Measure on the extremal points minimizing the certification functional.

    The functional is the sum over groups of the maximal rho-averaged squared
    cross-variance over the design space; its minimum equals the criterion
    value exactly when the pair is sup-optimal.  Solved by seeded PSO on the
    simplex with shrinking polish rounds.
    """
    if extremal.k == 0:
        raise InvalidInputError("extremal set must be nonempty")
    if extremal.k == 1:
        return RhoMeasure(extremal.points, np.array([1.0]))
    ev = PairEvaluator(pair)
    # denser scan than the reporting grid: the solved weights feed the
    # certificate, so sub-grid bias must stay well below cert tolerances
    x_nodes = spec.x_grid(max(DEFAULT_CHECK_GRID, 1001))
    parts = [
        _RhoParts(ev.models[j], ev.minv[j], ev.scales[j], extremal.points, x_nodes)
        for j in range(2)
    ]

    def objective(P):
        return parts[0].max_over_x(P) + parts[1].max_over_x(P)

    weights, _ = _minimize_on_simplex(objective, extremal.k, seed, context=(901,))
    return RhoMeasure(extremal.points, weights)


def _support_residuals_pair(qf1, qf2, xi1, xi2, target):
    a = np.atleast_1d(qf1.at(xi1.points))
    b = np.atleast_1d(qf2.at(xi2.points))
    return [
        {"t1": float(t1), "t2": float(t2), "residual": float(abs(av + bv - target))}
        for t1, av in zip(xi1.points, a)
        for t2, bv in zip(xi2.points, b)
    ]


def check_mu_p(pair: DesignPair, spec: CriterionSpec, cert_tol: float = DEFAULT_CERT_TOL,
               x_grid_n: int = DEFAULT_CHECK_GRID) -> EquivalenceReport:
    """Equivalence check for the L_p criterion (finite p).

    The left-hand side integrates the (p-1)-weighted squared cross variances
    against the quadrature measure and subtracts the criterion value to the
    power p; it must be nonpositive everywhere with equality on the support
    product.
    """
    if spec.is_sup:
        raise InvalidInputError("check_mu_p requires finite p; use check_mu_inf")
    _check_lambda_support(spec, pair)
    ev = PairEvaluator(pair)
    nodes, lw = spec.lambda_nodes, spec.lambda_weights
    phi = ev.phi(nodes)
    mup_p = float(lw @ phi**spec.p)
    value = mup_p ** (1.0 / spec.p)
    x_nodes = spec.x_grid(x_grid_n)
    qf = []
    for j in range(2):
        F = ev.models[j].gradient(nodes)
        W = np.einsum("n,nd,ne->de", lw * phi ** (spec.p - 1.0), F, F)
        Q = ev.scales[j] * (ev.minv[j] @ W @ ev.minv[j])
        qf.append(_QuadFormMax(ev.models[j], Q, x_nodes))
    lhs_max = qf[0].max() + qf[1].max()
    residuals = _support_residuals_pair(qf[0], qf[1], pair.xi1, pair.xi2, mup_p)
    bound = mup_p / lhs_max
    return _make_report("mu_p", spec, value, mup_p, lhs_max - mup_p, residuals, None, bound, cert_tol)


def check_mu_inf(pair: DesignPair, spec: CriterionSpec, rho: RhoMeasure,
                 cert_tol: float = DEFAULT_CERT_TOL, x_grid_n: int = DEFAULT_CHECK_GRID,
                 atom_tol: float = _ATOM_TOL) -> EquivalenceReport:
    """Equivalence check for the sup criterion against a supplied measure.

    The measure must sit on (near-)extremal points of the variance; the
    efficiency bound is the criterion value divided by the certification
    functional at ``rho``, which reaches one exactly at optimality.
    """
    ev = PairEvaluator(pair)
    _, mu = ev.sup_phi(spec)
    atom_phi = np.atleast_1d(ev.phi(rho.atoms))
    if np.any(atom_phi < mu * (1.0 - atom_tol)):
        raise InvalidInputError(
            "rho atoms must attain the variance supremum within tolerance "
            f"(worst deficit {float(1 - atom_phi.min() / mu):.2e} relative)"
        )
    x_nodes = spec.x_grid(x_grid_n)
    qf = [
        _QuadFormMax(
            ev.models[j],
            ev.scales[j] * _atom_info(ev.models[j], ev.minv[j], rho.atoms, rho.weights),
            x_nodes,
        )
        for j in range(2)
    ]
    lhs_max = qf[0].max() + qf[1].max()
    residuals = _support_residuals_pair(qf[0], qf[1], pair.xi1, pair.xi2, mu)
    bound = mu / lhs_max
    return _make_report("mu_inf", spec, mu, mu, lhs_max - mu, residuals, rho, bound, cert_tol)


def check_nu(xi1: Design, eta: Design, spec: CriterionSpec, groups,
             cert_tol: float = DEFAULT_CERT_TOL, x_grid_n: int = DEFAULT_CHECK_GRID,
             seed: int = 0, ext_tol: float = 1e-4) -> EquivalenceReport:
    """Equivalence check when group 2's design is frozen at eta.

    Only group 1's cross variance varies; for finite p the frozen group
    contributes a constant integral, for the sup criterion the check compares
    rho-averages of the squared cross term against the rho-average of the
    group-1 variance itself (the measure is solved internally).
    """
    pair = DesignPair(xi1, eta, tuple(groups))
    ev = PairEvaluator(pair)
    x_nodes = spec.x_grid(x_grid_n)

    if not spec.is_sup:
        _check_lambda_support(spec, pair)
        nodes, lw = spec.lambda_nodes, spec.lambda_weights
        phi = ev.phi(nodes)
        nup_p = float(lw @ phi**spec.p)
        value = nup_p ** (1.0 / spec.p)
        F = ev.models[0].gradient(nodes)
        W = np.einsum("n,nd,ne->de", lw * phi ** (spec.p - 1.0), F, F)
        qf1 = _QuadFormMax(ev.models[0], ev.scales[0] * (ev.minv[0] @ W @ ev.minv[0]), x_nodes)
        frozen = float(lw @ (phi ** (spec.p - 1.0) * ev.phi_group(2, nodes)))
        lhs_max = qf1.max() + frozen
        a = np.atleast_1d(qf1.at(xi1.points))
        residuals = [
            {"t1": float(t1), "residual": float(abs(av + frozen - nup_p))}
            for t1, av in zip(xi1.points, a)
        ]
        bound = nup_p / lhs_max
        return _make_report("nu_p", spec, value, nup_p, lhs_max - nup_p, residuals, None, bound, cert_tol)

    ext = extremal_set(pair, spec, tol=ext_tol)
    value = ext.level
    # (gamma1/sigma1^2) phi_1^2 carries the net coefficient sigma1^2/gamma1
    part = _RhoParts(ev.models[0], ev.minv[0], ev.scales[0], ext.points, x_nodes)
    diag = np.atleast_1d(ev.phi_group(1, ext.points))

    if ext.k == 1:
        weights = np.array([1.0])
    else:
        def objective(P):
            return part.max_over_x(P) - P @ diag

        weights, _ = _minimize_on_simplex(objective, ext.k, seed, context=(902,))
    rho = RhoMeasure(ext.points, weights)

    qf1 = _QuadFormMax(
        ev.models[0],
        ev.scales[0] * _atom_info(ev.models[0], ev.minv[0], rho.atoms, rho.weights),
        x_nodes,
    )
    target = float(rho.weights @ diag)
    lhs_max = qf1.max()
    a = np.atleast_1d(qf1.at(xi1.points))
    residuals = [
        {"t1": float(t1), "residual": float(abs(av - target))}
        for t1, av in zip(xi1.points, a)
    ]
    violation = lhs_max - target
    bound = value / (value + max(violation, 0.0))
    return _make_report("nu_inf", spec, value, value, violation, residuals, rho, bound, cert_tol)


def check_gamma(xi1: Design, xi2: Design, gamma, spec: CriterionSpec, models, sigma2,
                cert_tol: float = DEFAULT_CERT_TOL, x_grid_n: int = DEFAULT_CHECK_GRID,
                seed: int = 0, ext_tol: float = 1e-4) -> EquivalenceReport:
    """Equivalence check for jointly optimal designs and group allocation.

    The inequality carries a group indicator: each group's rho-averaged
    squared cross variance, scaled by 1/sigma_i^2, must stay below the
    criterion value, with equality at the support points of both designs.
    """
    g1, g2 = (float(g) for g in gamma)
    if not (0.0 < g1 < 1.0 and 0.0 < g2 < 1.0) or abs(g1 + g2 - 1.0) > 1e-9:
        raise InvalidInputError("gamma must lie on the open simplex (gamma1 + gamma2 = 1)")
    pair = pair_from_designs(xi1, xi2, models, sigma2, gamma=(g1, g2))
    ev = PairEvaluator(pair)
    _, mu = ev.sup_phi(spec)
    x_nodes = spec.x_grid(x_grid_n)
    ext = extremal_set(pair, spec, tol=ext_tol)
    gammas = (g1, g2)
    # (1/sigma_i^2) phi_i^2 carries the coefficient sigma_i^2 / gamma_i^2
    parts = [
        _RhoParts(ev.models[j], ev.minv[j], pair.groups[j].sigma2 / gammas[j] ** 2, ext.points, x_nodes)
        for j in range(2)
    ]

    if ext.k == 1:
        weights = np.array([1.0])
    else:
        def objective(P):
            return np.maximum(parts[0].max_over_x(P), parts[1].max_over_x(P))

        weights, _ = _minimize_on_simplex(objective, ext.k, seed, context=(903,))
    rho = RhoMeasure(ext.points, weights)

    qf = [
        _QuadFormMax(
            ev.models[j],
            (pair.groups[j].sigma2 / gammas[j] ** 2)
            * _atom_info(ev.models[j], ev.minv[j], rho.atoms, rho.weights),
            x_nodes,
        )
        for j in range(2)
    ]
    maxima = [qf[0].max(), qf[1].max()]
    residuals = [
        {"t1": float(t), "omega": 0, "residual": float(abs(v - mu))}
        for t, v in zip(xi1.points, np.atleast_1d(qf[0].at(xi1.points)))
    ] + [
        {"t2": float(t), "omega": 1, "residual": float(abs(v - mu))}
        for t, v in zip(xi2.points, np.atleast_1d(qf[1].at(xi2.points)))
    ]
    lhs_max = max(maxima)
    bound = mu / lhs_max
    return _make_report("mu_inf_gamma", spec, mu, mu, lhs_max - mu, residuals, rho, bound, cert_tol)


def eff_bound(pair: DesignPair, spec: CriterionSpec, seed: int = 0) -> float:
    """Lower bound on the pair's efficiency, without knowing the optimum.

    For finite p this is the ratio of the criterion (to the p-th power) to
    the maximal integrated directional term; for the sup criterion the
    denominator averages over the extremal measure solved for the candidate.
    Always in (0, 1], and equal to 1 only at an optimum.
    """
    if not spec.is_sup:
        return check_mu_p(pair, spec).eff_lower_bound
    ext = extremal_set(pair, spec, tol=1e-4)
    rho = solve_rho(pair, spec, ext, seed=seed)
    return check_mu_inf(pair, spec, rho).eff_lower_bound


def efficiency(pair: DesignPair, optimal_pair: DesignPair, spec: CriterionSpec) -> float:
    """Criterion ratio optimal/candidate; equals 1 when the pair is optimal."""
    return criterion_value(optimal_pair, spec) / criterion_value(pair, spec)
