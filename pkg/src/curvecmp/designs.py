"""Approximate designs, information matrices, and the comparison criteria.

An approximate design is a finite probability measure on the design space; a
pair of designs (one per group) determines the asymptotic variance
``variance_phi(t)`` of the estimated difference of the two regression curves.
The criteria aggregate that variance over the comparison region: ``mu_inf``
takes the supremum, ``mu_p`` an L_p average against a quadrature measure, and
``nu_p`` fixes one group's design.  All functions are pure.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from curvecmp.errors import InvalidInputError, SingularDesignError
from curvecmp.gridopt import polished_max
from curvecmp.models import GroupSpec, ModelSpec

P_INF = "inf"

# Reciprocal-condition threshold below which an information matrix counts as
# singular; dimensions never exceed 6, so an eigenvalue check is cheap.
RCOND_SINGULAR = 1e-10

_WEIGHT_SUM_TOL = 1e-12
_SPACE_SLACK = 1e-12


def _interval(value, label):
    lo, hi = (float(v) for v in value)
    if not (np.isfinite(lo) and np.isfinite(hi)) or hi < lo:
        raise InvalidInputError(f"{label} must be a finite interval [lo, hi]")
    return (lo, hi)


@dataclass(frozen=True, eq=False)
class Design:
    """Support points with the fraction of observations placed at each.

    Points must be strictly increasing; weights must be nonnegative and sum
    to one (within 1e-12).
    """

    points: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        pts = np.atleast_1d(np.asarray(self.points, dtype=float))
        wts = np.atleast_1d(np.asarray(self.weights, dtype=float))
        object.__setattr__(self, "points", pts)
        object.__setattr__(self, "weights", wts)
        if pts.ndim != 1 or pts.shape != wts.shape or pts.size < 1:
            raise InvalidInputError("points and weights must be equal-length 1-d arrays")
        if not np.all(np.isfinite(pts)) or not np.all(np.isfinite(wts)):
            raise InvalidInputError("design entries must be finite")
        if np.any(np.diff(pts) <= 0):
            raise InvalidInputError("support points must be strictly increasing")
        if np.any(wts < 0):
            raise InvalidInputError("weights must be nonnegative")
        if abs(wts.sum() - 1.0) > _WEIGHT_SUM_TOL:
            raise InvalidInputError(f"weights must sum to 1 (got {wts.sum()!r})")

    @property
    def k(self) -> int:
        return self.points.size

    def check_in_space(self, space) -> None:
        lo, hi = _interval(space, "design space")
        slack = _SPACE_SLACK * max(1.0, abs(lo), abs(hi))
        if np.any(self.points < lo - slack) or np.any(self.points > hi + slack):
            raise InvalidInputError(
                f"design has support outside the design space [{lo}, {hi}]"
            )

    def to_dict(self):
        return {"points": self.points.tolist(), "weights": self.weights.tolist()}

    @classmethod
    def from_dict(cls, d):
        return cls(np.asarray(d["points"], dtype=float), np.asarray(d["weights"], dtype=float))

    def __repr__(self):
        rows = ", ".join(f"{t:g}:{w:.4f}" for t, w in zip(self.points, self.weights))
        return f"Design({rows})"


def design_from_raw(points, weights, merge_tol=0.0, drop_tol=0.0) -> Design:
    """Build a valid Design from unsorted raw arrays.

    Sorts points, merges points closer than ``merge_tol`` (weight-averaged
    location), drops weights below ``drop_tol`` and renormalizes.  Used to
    decode optimizer output into a well-formed design.
    """
    pts = np.asarray(points, dtype=float).ravel()
    wts = np.abs(np.asarray(weights, dtype=float).ravel())
    if pts.size != wts.size or pts.size == 0:
        raise InvalidInputError("points and weights must have equal nonzero length")
    total = wts.sum()
    wts = wts / total if total > 0 else np.full(pts.size, 1.0 / pts.size)
    order = np.argsort(pts, kind="stable")
    pts, wts = pts[order], wts[order]
    merged_p, merged_w = [pts[0]], [wts[0]]
    for t, w in zip(pts[1:], wts[1:]):
        if t - merged_p[-1] <= merge_tol:
            tot = merged_w[-1] + w
            if tot > 0:
                merged_p[-1] = (merged_p[-1] * merged_w[-1] + t * w) / tot
            merged_w[-1] = tot
        else:
            merged_p.append(t)
            merged_w.append(w)
    pts = np.asarray(merged_p)
    wts = np.asarray(merged_w)
    keep = wts > drop_tol
    if not np.any(keep):
        keep = wts == wts.max()
    pts, wts = pts[keep], wts[keep]
    wts = wts / wts.sum()
    return Design(pts, wts)


@dataclass(frozen=True, eq=False)
class DesignPair:
    """Two designs with their group specifications (models, sigma^2, gamma)."""

    xi1: Design
    xi2: Design
    groups: tuple[GroupSpec, GroupSpec]

    def __post_init__(self):
        if len(self.groups) != 2:
            raise InvalidInputError("a design pair needs exactly two group specs")
        g1, g2 = self.groups
        if abs(g1.gamma + g2.gamma - 1.0) > 1e-9:
            raise InvalidInputError("group fractions gamma must sum to 1")

    @property
    def designs(self):
        return (self.xi1, self.xi2)

    def design(self, i: int) -> Design:
        return self.designs[_group_index(i)]

    def group(self, i: int) -> GroupSpec:
        return self.groups[_group_index(i)]

    def with_gamma(self, gamma) -> "DesignPair":
        g1, g2 = (float(g) for g in gamma)
        new = tuple(
            GroupSpec(model=g.model, sigma2=g.sigma2, gamma=val)
            for g, val in zip(self.groups, (g1, g2))
        )
        return DesignPair(self.xi1, self.xi2, new)

    def to_dict(self):
        return {
            "designs": [self.xi1.to_dict(), self.xi2.to_dict()],
            "gamma": [self.groups[0].gamma, self.groups[1].gamma],
        }


def _group_index(i: int) -> int:
    if i not in (1, 2):
        raise InvalidInputError("group index must be 1 or 2")
    return i - 1


def pair_from_designs(xi1, xi2, models, sigma2, gamma=(0.5, 0.5)) -> DesignPair:
    groups = (
        GroupSpec(model=models[0], sigma2=float(sigma2[0]), gamma=float(gamma[0])),
        GroupSpec(model=models[1], sigma2=float(sigma2[1]), gamma=float(gamma[1])),
    )
    return DesignPair(xi1, xi2, groups)


@dataclass(frozen=True, eq=False)
class CriterionSpec:
    """Which criterion to evaluate, where, and against which measure.

    ``p`` is a number in [1, inf) or the explicit tag ``P_INF`` (the sup
    criterion is never approximated by a large finite p).  The quadrature
    measure defaults to the uniform probability measure on the comparison
    region, discretized by the trapezoid rule on ``grid_n`` nodes; the same
    node count is used for supremum scans.
    """

    p: float | str
    design_space: tuple[float, float]
    comparison_region: tuple[float, float]
    lambda_nodes: np.ndarray | None = None
    lambda_weights: np.ndarray | None = None
    grid_n: int = 501

    def __post_init__(self):
        object.__setattr__(self, "design_space", _interval(self.design_space, "design space"))
        object.__setattr__(
            self, "comparison_region", _interval(self.comparison_region, "comparison region")
        )
        if self.p != P_INF:
            p = float(self.p)
            if not np.isfinite(p) or p < 1.0:
                raise InvalidInputError("p must lie in [1, inf) or be the 'inf' tag")
            object.__setattr__(self, "p", p)
        if int(self.grid_n) < 2:
            raise InvalidInputError("grid_n must be at least 2")
        object.__setattr__(self, "grid_n", int(self.grid_n))
        if (self.lambda_nodes is None) != (self.lambda_weights is None):
            raise InvalidInputError("lambda nodes and weights must be given together")
        if self.lambda_nodes is None:
            nodes, weights = uniform_lambda(self.comparison_region, self.grid_n)
        else:
            nodes = np.atleast_1d(np.asarray(self.lambda_nodes, dtype=float))
            weights = np.atleast_1d(np.asarray(self.lambda_weights, dtype=float))
            if nodes.shape != weights.shape or nodes.ndim != 1:
                raise InvalidInputError("lambda nodes and weights must be equal-length 1-d arrays")
            lo, hi = self.comparison_region
            slack = _SPACE_SLACK * max(1.0, abs(lo), abs(hi))
            if np.any(nodes < lo - slack) or np.any(nodes > hi + slack):
                raise InvalidInputError("lambda nodes must lie in the comparison region")
            if np.any(weights < 0) or not np.any(weights > 0):
                raise InvalidInputError("lambda weights must be nonnegative and not all zero")
        object.__setattr__(self, "lambda_nodes", nodes)
        object.__setattr__(self, "lambda_weights", weights)

    @property
    def is_sup(self) -> bool:
        return self.p == P_INF

    @property
    def z_grid(self) -> np.ndarray:
        lo, hi = self.comparison_region
        if hi == lo:
            return np.array([lo])
        return np.linspace(lo, hi, self.grid_n)

    def x_grid(self, n: int = 201) -> np.ndarray:
        lo, hi = self.design_space
        if hi == lo:
            return np.array([lo])
        return np.linspace(lo, hi, n)

    def to_dict(self):
        return {
            "p": self.p,
            "design_space": list(self.design_space),
            "comparison_region": list(self.comparison_region),
            "grid_n": self.grid_n,
        }


def uniform_lambda(region, n=501):
    """Trapezoid discretization of the uniform probability measure on a region."""
    lo, hi = _interval(region, "comparison region")
    if hi == lo:
        return np.array([lo]), np.array([1.0])
    nodes = np.linspace(lo, hi, int(n))
    weights = np.full(n, 1.0 / (n - 1))
    weights[0] *= 0.5
    weights[-1] *= 0.5
    return nodes, weights


def info_matrix(design: Design, model: ModelSpec) -> np.ndarray:
    """Weighted sum of gradient outer products; exactly symmetric."""
    F = model.gradient(design.points)  # (k, d)
    M = (F * design.weights[:, None]).T @ F
    return 0.5 * (M + M.T)


def invert_info(M: np.ndarray, group=None) -> np.ndarray:
    """Inverse of an information matrix via Cholesky.

    Declares singularity when the reciprocal condition number falls below
    1e-10 (or the matrix is not positive definite).
    """
    M = np.asarray(M, dtype=float)
    try:
        ev = np.linalg.eigvalsh(M)
    except np.linalg.LinAlgError:
        raise SingularDesignError(group, "eigenvalue computation failed")
    if not np.all(np.isfinite(ev)) or ev[0] <= 0 or ev[0] < RCOND_SINGULAR * ev[-1]:
        raise SingularDesignError(group, f"rcond ~ {ev[0] / max(ev[-1], 1e-300):.2e}")
    L = np.linalg.cholesky(M)
    Linv = np.linalg.solve(L, np.eye(M.shape[0]))
    Minv = Linv.T @ Linv
    return 0.5 * (Minv + Minv.T)


class PairEvaluator:
    """Caches inverse information matrices for repeated variance evaluations."""

    def __init__(self, pair: DesignPair):
        self.pair = pair
        self.models = tuple(g.model for g in pair.groups)
        self.scales = tuple(g.variance_scale for g in pair.groups)
        self.minv = tuple(
            invert_info(info_matrix(pair.design(i), pair.group(i).model), group=i)
            for i in (1, 2)
        )

    def phi_group(self, i: int, t):
        """One group's contribution (sigma^2/gamma) f(t)' M^-1 f(t)."""
        j = _group_index(i)
        F = self.models[j].gradient(np.asarray(t, dtype=float))
        return self.scales[j] * np.einsum("...d,de,...e->...", F, self.minv[j], F)

    def phi(self, t):
        return self.phi_group(1, t) + self.phi_group(2, t)

    def phi_cross(self, i: int, d, t):
        j = _group_index(i)
        Fd = self.models[j].gradient(np.asarray(d, dtype=float))
        Ft = self.models[j].gradient(np.asarray(t, dtype=float))
        return self.scales[j] * np.einsum("...d,de,...e->...", Fd, self.minv[j], Ft)

    def sup_phi(self, spec: CriterionSpec):
        """Polished supremum of the variance over the comparison region."""
        grid = spec.z_grid
        values = self.phi(grid)
        return polished_max(lambda t: float(self.phi(t)), grid, values)


def variance_phi(t, pair: DesignPair):
    """Asymptotic variance of the estimated curve difference at t."""
    val = PairEvaluator(pair).phi(t)
    return float(val) if np.ndim(t) == 0 else val


def phi_cross(i: int, d, t, pair: DesignPair):
    """(sigma_i^2/gamma_i) f_i(d)' M_i^-1 f_i(t); symmetric in (d, t)."""
    val = PairEvaluator(pair).phi_cross(i, d, t)
    return float(val) if np.ndim(d) == 0 and np.ndim(t) == 0 else val


def _check_lambda_support(spec: CriterionSpec, pair: DesignPair) -> None:
    d = max(g.model.dim for g in pair.groups)
    if np.count_nonzero(spec.lambda_weights > 0) < d:
        raise InvalidInputError(
            f"quadrature measure needs at least {d} support points for identifiability"
        )


def mu_p(pair: DesignPair, spec: CriterionSpec) -> float:
    """L_p(lambda) norm of the variance function over the comparison region."""
    if spec.is_sup:
        raise InvalidInputError("mu_p requires finite p; use mu_inf for the sup criterion")
    _check_lambda_support(spec, pair)
    ev = PairEvaluator(pair)
    phi = ev.phi(spec.lambda_nodes)
    return float((spec.lambda_weights @ phi**spec.p) ** (1.0 / spec.p))


def mu_inf(pair: DesignPair, spec: CriterionSpec) -> float:
    """Supremum of the variance function over the comparison region."""
    _, value = PairEvaluator(pair).sup_phi(spec)
    return value


def criterion_value(pair: DesignPair, spec: CriterionSpec) -> float:
    return mu_inf(pair, spec) if spec.is_sup else mu_p(pair, spec)


def nu_p(xi1: Design, eta: Design, spec: CriterionSpec, groups) -> float:
    """Criterion value when group 2's design is frozen at eta."""
    pair = DesignPair(xi1, eta, tuple(groups))
    return criterion_value(pair, spec)


def mu_inf_gamma(xi1, xi2, gamma, spec, models, sigma2) -> float:
    """Sup criterion with an explicit allocation gamma = (gamma1, gamma2)."""
    g1, g2 = (float(g) for g in gamma)
    if not (0.0 < g1 < 1.0 and 0.0 < g2 < 1.0) or abs(g1 + g2 - 1.0) > 1e-9:
        raise InvalidInputError("gamma must lie on the open simplex (gamma1 + gamma2 = 1)")
    pair = pair_from_designs(xi1, xi2, models, sigma2, gamma=(g1, g2))
    return mu_inf(pair, spec)


def band_profile(pair: DesignPair, n_total: int, grid, quantile: float = 1.96) -> np.ndarray:
    """Half-widths D * sqrt(phi(t)/n) of the asymptotic confidence band.

    ``quantile`` is the band constant D; the 1.96 default is the pointwise
    normal quantile and understates a simultaneous band, so supply a properly
    calibrated value when coverage matters.  Returns rows (t, halfwidth).
    """
    n_total = int(n_total)
    if n_total < 1:
        raise InvalidInputError("n_total must be a positive integer")
    if quantile < 0:
        raise InvalidInputError("quantile must be nonnegative")
    grid = np.atleast_1d(np.asarray(grid, dtype=float))
    phi = PairEvaluator(pair).phi(grid)
    halfwidth = quantile * np.sqrt(phi / n_total)
    return np.column_stack([grid, halfwidth])
