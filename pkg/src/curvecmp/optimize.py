"""Certified design optimization: global swarm search, pruning, local polish.

The construction runs in three steps: a particle swarm minimizes the
criterion over encoded designs, the extremal points of the resulting
variance function are located, and the certification measure on them is
solved.  The attempt is accepted once the equivalence check passes and the
efficiency lower bound clears the threshold; otherwise the search restarts
with fresh (still seed-derived) randomness and the best attempt is returned
flagged as not certified.

Encoding: each design contributes its support points as box-bounded
coordinates (sorted before evaluation) and its weights as a simplex block;
the flexible allocation adds one more two-coordinate simplex block.
Singular candidates receive a large penalty value rather than an error.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from curvecmp.designs import (
    CriterionSpec,
    Design,
    DesignPair,
    design_from_raw,
    info_matrix,
    invert_info,
    pair_from_designs,
)
from curvecmp.equivalence import (
    EquivalenceReport,
    check_gamma,
    check_mu_inf,
    check_mu_p,
    check_nu,
    extremal_set,
    solve_rho,
)
from curvecmp.errors import InvalidInputError, NumericalFailureError
from curvecmp.gridopt import golden_max_batch
from curvecmp.models import ModelSpec
from curvecmp.pso import PENALTY, PsoConfig, pso_minimize, shrink_box
from curvecmp.refine import Refiner

DEFAULT_THRESHOLD = 0.99
DEFAULT_RESTARTS = 5
_MERGE_FRACTION = 1e-3  # of the design-space length
_DROP_WEIGHT = 1e-4
_GAMMA_FLOOR = 1e-9
_POLISH_HALFWIDTHS = (3e-2, 5e-3)  # quick tidy-up only; the exchange stage finishes
_POLISH_BASINS = 4
_CERT_EXTREMAL_TOL = 1e-4


@dataclass(frozen=True)
class Problem:
    """A design-optimization problem: what to compare, where, and how."""

    spec: CriterionSpec
    models: tuple[ModelSpec, ModelSpec]
    sigma2: tuple[float, float]
    gamma: tuple[float, float] = (0.5, 0.5)
    k: tuple[int, int] | None = None
    eta: Design | None = None
    optimize_allocation: bool = False

    def __post_init__(self):
        if len(self.models) != 2 or len(self.sigma2) != 2:
            raise InvalidInputError("a problem needs two models and two variances")
        object.__setattr__(self, "models", tuple(self.models))
        object.__setattr__(self, "sigma2", tuple(float(s) for s in self.sigma2))
        if any(s <= 0 for s in self.sigma2):
            raise InvalidInputError("sigma2 must be positive")
        if self.optimize_allocation:
            if self.eta is not None:
                raise InvalidInputError("allocation optimization with a fixed design is not supported")
            if not self.spec.is_sup:
                raise InvalidInputError("allocation optimization is defined for the sup criterion")
        else:
            g1, g2 = (float(g) for g in self.gamma)
            if not (0 < g1 < 1 and 0 < g2 < 1) or abs(g1 + g2 - 1.0) > 1e-9:
                raise InvalidInputError("gamma must lie on the open simplex")
            object.__setattr__(self, "gamma", (g1, g2))
        dims = tuple(m.dim for m in self.models)
        k = self.k
        if k is None:
            k = dims
        k = (int(k[0]), int(k[1]) if self.eta is None else self.eta.k)
        if k[0] < dims[0] or (self.eta is None and k[1] < dims[1]):
            raise InvalidInputError(f"support sizes {k} cannot be below the model dimensions {dims}")
        object.__setattr__(self, "k", k)
        if self.eta is not None:
            self.eta.check_in_space(self.spec.design_space)

    @property
    def criterion(self) -> str:
        if self.optimize_allocation:
            return "mu_inf_gamma"
        base = "nu" if self.eta is not None else "mu"
        return f"{base}_inf" if self.spec.is_sup else f"{base}_p"


@dataclass(frozen=True)
class OptimizeResult:
    criterion: str
    pair: DesignPair
    gamma: tuple[float, float]
    value: float
    report: EquivalenceReport
    iterations: int
    seed: int
    restarts_used: int
    certified: bool

    def to_dict(self):
        return {
            "schema": "curvecmp/result-v1",
            "criterion": self.criterion,
            "value": self.value,
            "certified": self.certified,
            "gamma": list(self.gamma),
            "designs": [self.pair.xi1.to_dict(), self.pair.xi2.to_dict()],
            "report": self.report.to_dict(),
            "seed": self.seed,
            "restarts_used": self.restarts_used,
            "iterations": self.iterations,
        }


class _Encoder:
    """Maps between position vectors and (designs, allocation)."""

    def __init__(self, problem: Problem, k1: int, k2: int):
        self.problem = problem
        self.k1, self.k2 = k1, k2
        self.free2 = problem.eta is None
        self.with_gamma = problem.optimize_allocation
        xlo, xhi = problem.spec.design_space
        self.xlo, self.xhi = xlo, xhi
        bounds, blocks = [], []
        cursor = 0
        self.sl_p1 = slice(cursor, cursor + k1)
        bounds += [(xlo, xhi)] * k1
        cursor += k1
        self.sl_w1 = slice(cursor, cursor + k1)
        blocks.append((cursor, cursor + k1))
        bounds += [(0.0, 1.0)] * k1
        cursor += k1
        if self.free2:
            self.sl_p2 = slice(cursor, cursor + k2)
            bounds += [(xlo, xhi)] * k2
            cursor += k2
            self.sl_w2 = slice(cursor, cursor + k2)
            blocks.append((cursor, cursor + k2))
            bounds += [(0.0, 1.0)] * k2
            cursor += k2
        if self.with_gamma:
            self.sl_g = slice(cursor, cursor + 2)
            blocks.append((cursor, cursor + 2))
            bounds += [(0.0, 1.0)] * 2
            cursor += 2
        self.dim = cursor
        self.bounds = np.asarray(bounds, dtype=float)
        self.blocks = blocks

    @staticmethod
    def _sorted_pairing(pts, wts):
        order = np.argsort(pts, axis=1, kind="stable")
        return np.take_along_axis(pts, order, axis=1), np.take_along_axis(wts, order, axis=1)

    def decode_batch(self, X):
        # weights travel with their points under sorting, matching designs_from
        p1, w1 = self._sorted_pairing(X[:, self.sl_p1], X[:, self.sl_w1])
        out = {"p1": p1, "w1": w1}
        if self.free2:
            p2, w2 = self._sorted_pairing(X[:, self.sl_p2], X[:, self.sl_w2])
            out["p2"] = p2
            out["w2"] = w2
        if self.with_gamma:
            out["g"] = X[:, self.sl_g]
        return out

    def designs_from(self, x, merge_tol=0.0, drop_tol=0.0):
        x = np.asarray(x, dtype=float)
        d1 = design_from_raw(x[self.sl_p1], x[self.sl_w1], merge_tol, drop_tol)
        if self.free2:
            d2 = design_from_raw(x[self.sl_p2], x[self.sl_w2], merge_tol, drop_tol)
        else:
            d2 = self.problem.eta
        if self.with_gamma:
            g = np.abs(x[self.sl_g])
            g = g / g.sum()
            gamma = (float(g[0]), float(g[1]))
        else:
            gamma = self.problem.gamma
        return d1, d2, gamma

    def encode(self, d1: Design, d2: Design, gamma):
        x = np.empty(self.dim)
        x[self.sl_p1] = d1.points
        x[self.sl_w1] = d1.weights
        if self.free2:
            x[self.sl_p2] = d2.points
            x[self.sl_w2] = d2.weights
        if self.with_gamma:
            x[self.sl_g] = gamma
        return x

    def polish_halfwidths(self, h: float):
        hw = np.empty(self.dim)
        hr = h * max(self.xhi - self.xlo, 1.0)
        hw[self.sl_p1] = hr
        hw[self.sl_w1] = h
        if self.free2:
            hw[self.sl_p2] = hr
            hw[self.sl_w2] = h
        if self.with_gamma:
            hw[self.sl_g] = h
        return hw


class _Objective:
    """Batched criterion evaluation over encoded positions."""

    def __init__(self, problem: Problem, enc: _Encoder):
        self.problem = problem
        self.enc = enc
        spec = problem.spec
        self.sup = spec.is_sup
        self.models = problem.models
        if self.sup:
            self.nodes = spec.z_grid
            self.lw = None
            # denser scan for polish rounds: keeps the sup's basin ordering
            # exact enough that golden refinement of the best node suffices
            zlo, zhi = spec.comparison_region
            n_dense = max(spec.grid_n, 2001)
            self.dense_nodes = np.linspace(zlo, zhi, n_dense) if zhi > zlo else self.nodes
        else:
            self.nodes = spec.lambda_nodes
            self.lw = spec.lambda_weights
            self.dense_nodes = None
        self.G = [m.gradient(self.nodes) for m in self.models]
        self.G_dense = None if self.dense_nodes is None else [m.gradient(self.dense_nodes) for m in self.models]
        if problem.eta is not None:
            minv2 = invert_info(info_matrix(problem.eta, self.models[1]), group=2)
            self.minv2_eta = minv2
            c2 = problem.sigma2[1] / problem.gamma[1]
            self.phi2_grid = c2 * np.einsum("nd,de,ne->n", self.G[1], minv2, self.G[1])
            if self.G_dense is not None:
                self.phi2_dense = c2 * np.einsum("nd,de,ne->n", self.G_dense[1], minv2, self.G_dense[1])
            self.c2_eta = c2
        else:
            self.minv2_eta = None

    def _group_inverse(self, model, pts, w):
        F = model.gradient(pts)  # (S, k, d)
        M = np.einsum("skd,ske,sk->sde", F, F, w, optimize=True)
        ev = np.linalg.eigvalsh(M)
        bad = ~np.all(np.isfinite(ev), axis=1) | (ev[:, 0] <= 0) | (ev[:, 0] < 1e-10 * ev[:, -1])
        if np.any(bad):
            M[bad] = np.eye(M.shape[1])
        return np.linalg.inv(M), bad

    def __call__(self, X, polish: bool = False):
        prob, enc = self.problem, self.enc
        dec = enc.decode_batch(np.asarray(X, dtype=float))
        S = X.shape[0]
        minv1, bad = self._group_inverse(self.models[0], dec["p1"], dec["w1"])
        if enc.free2:
            minv2, bad2 = self._group_inverse(self.models[1], dec["p2"], dec["w2"])
            bad = bad | bad2
        if enc.with_gamma:
            g1 = dec["g"][:, 0]
            bad = bad | (g1 < _GAMMA_FLOOR) | (g1 > 1.0 - _GAMMA_FLOOR)
            g1 = np.clip(g1, _GAMMA_FLOOR, 1.0 - _GAMMA_FLOOR)
            c1 = (prob.sigma2[0] / g1)[:, None]
            c2 = (prob.sigma2[1] / (1.0 - g1))[:, None]
        else:
            c1 = prob.sigma2[0] / prob.gamma[0]
            c2 = prob.sigma2[1] / prob.gamma[1]

        use_dense = self.sup and polish and self.dense_nodes is not None
        nodes = self.dense_nodes if use_dense else self.nodes
        G = self.G_dense if use_dense else self.G
        q1 = np.einsum("nd,sde,ne->sn", G[0], minv1, G[0], optimize=True)
        if enc.free2:
            q2 = np.einsum("nd,sde,ne->sn", G[1], minv2, G[1], optimize=True)
            phi = c1 * q1 + c2 * q2
        else:
            phi2 = self.phi2_dense if use_dense else self.phi2_grid
            phi = c1 * q1 + phi2[None, :]

        if not self.sup:
            vals = (phi**prob.spec.p @ self.lw) ** (1.0 / prob.spec.p)
        else:
            vals = phi.max(axis=1)
            if polish and nodes.size > 2:
                # refine the top basins of every particle; refining only the
                # best grid node leaves a design-dependent sub-grid bias that
                # a flat-valley optimizer will exploit
                m = min(_POLISH_BASINS, nodes.size)
                interior = np.empty_like(phi, dtype=bool)
                interior[:, 0] = phi[:, 0] >= phi[:, 1]
                interior[:, -1] = phi[:, -1] >= phi[:, -2]
                interior[:, 1:-1] = (phi[:, 1:-1] >= phi[:, :-2]) & (phi[:, 1:-1] >= phi[:, 2:])
                masked = np.where(interior, phi, -np.inf)
                top = np.argpartition(masked, masked.shape[1] - m, axis=1)[:, -m:]
                rows = np.repeat(np.arange(S), m)
                j = top.ravel()
                lo = nodes[np.maximum(j - 1, 0)]
                hi = nodes[np.minimum(j + 1, nodes.size - 1)]

                def phi_at(t):
                    F1 = self.models[0].gradient(t)
                    e1 = np.einsum("sd,sde,se->s", F1, minv1[rows], F1)
                    if enc.free2:
                        F2 = self.models[1].gradient(t)
                        e2 = np.einsum("sd,sde,se->s", F2, minv2[rows], F2)
                        if enc.with_gamma:
                            return c1[rows, 0] * e1 + c2[rows, 0] * e2
                        return c1 * e1 + c2 * e2
                    F2 = self.models[1].gradient(t)
                    e2 = np.einsum("sd,de,se->s", F2, self.minv2_eta, F2)
                    return c1 * e1 + self.c2_eta * e2

                _, refined = golden_max_batch(phi_at, lo, hi)
                vals = np.maximum(vals, refined.reshape(S, m).max(axis=1))

        vals = np.where(np.isfinite(vals), vals, PENALTY)
        vals[bad] = PENALTY
        return vals

    def value_of(self, x, polish: bool = True) -> float:
        from curvecmp.pso import decode_simplex

        x = decode_simplex(np.asarray(x, dtype=float)[None, :], self.enc.blocks)
        return float(self(x, polish=polish)[0])


def _run_attempt(problem: Problem, config: PsoConfig, restart: int):
    """One swarm attempt: global search, prune, quick polish.

    Returns the decoded (design1, design2, gamma) and iterations used.
    """
    enc = _Encoder(problem, *problem.k)
    obj = _Objective(problem, enc)
    res = pso_minimize(lambda P: obj(P, polish=False), enc.bounds, enc.blocks, config, context=(restart, 0))
    iters = res.iterations
    x = res.position

    xlo, xhi = problem.spec.design_space
    merge_tol = _MERGE_FRACTION * (xhi - xlo)

    def pruned(xvec, encoder):
        d1, d2, gamma = encoder.designs_from(xvec, merge_tol=merge_tol, drop_tol=_DROP_WEIGHT)
        k2 = d2.k if encoder.free2 else problem.k[1]
        changed = (d1.k, k2) != (encoder.k1, encoder.k2)
        return d1, d2, gamma, changed

    d1, d2, gamma, changed = pruned(x, enc)
    if changed:
        enc = _Encoder(problem, d1.k, d2.k if enc.free2 else problem.k[1])
        obj = _Objective(problem, enc)
    x = enc.encode(d1, d2, gamma)
    val = obj.value_of(x)

    # short local polish tidies the swarm result before the exchange stage
    small = config.with_(swarm_size=24, max_iters=200, stagnation_window=50)
    for ridx, h in enumerate(_POLISH_HALFWIDTHS, start=1):
        box = shrink_box(x, enc.bounds, enc.polish_halfwidths(h))
        res = pso_minimize(lambda P: obj(P, polish=True), box, enc.blocks, small,
                           context=(restart, ridx), init=x)
        iters += res.iterations
        if res.value < val:
            x, val = res.position, res.value
    d1, d2, gamma, _ = pruned(x, enc)
    return d1, d2, gamma, iters


def _refined(problem: Problem, d1: Design, d2: Design, gamma, cert_tol: float):
    """Close the certificate gap with the deterministic exchange stage."""
    refiner = Refiner(problem)
    fixed = problem.eta is not None
    pts1, w1, pts2, w2, gamma, _ = refiner.run(
        d1.points, d1.weights,
        None if fixed else d2.points, None if fixed else d2.weights,
        gamma, tol=cert_tol / 5.0,
    )
    d1 = design_from_raw(pts1, w1, merge_tol=1e-12, drop_tol=0.0)
    if not fixed:
        d2 = design_from_raw(pts2, w2, merge_tol=1e-12, drop_tol=0.0)
    return d1, d2, gamma


def _finalize(problem: Problem, d1: Design, d2: Design, gamma, config: PsoConfig,
              restart: int, iterations: int, cert_tol: float, threshold: float) -> OptimizeResult:
    pair = pair_from_designs(d1, d2, problem.models, problem.sigma2, gamma=gamma)
    spec = problem.spec
    tag = problem.criterion
    if tag == "mu_p":
        report = check_mu_p(pair, spec, cert_tol=cert_tol)
    elif tag == "mu_inf":
        ext = extremal_set(pair, spec, tol=_CERT_EXTREMAL_TOL)
        rho = solve_rho(pair, spec, ext, seed=config.seed)
        report = check_mu_inf(pair, spec, rho, cert_tol=cert_tol)
    elif tag in ("nu_p", "nu_inf"):
        report = check_nu(d1, problem.eta, spec, pair.groups, cert_tol=cert_tol, seed=config.seed)
    else:
        report = check_gamma(d1, d2, gamma, spec, problem.models, problem.sigma2,
                             cert_tol=cert_tol, seed=config.seed)
    certified = report.certified and report.eff_lower_bound >= threshold
    return OptimizeResult(
        criterion=tag,
        pair=pair,
        gamma=gamma,
        value=report.value,
        report=report,
        iterations=iterations,
        seed=config.seed,
        restarts_used=restart,
        certified=certified,
    )


def optimize(problem: Problem, config: PsoConfig, threshold: float = DEFAULT_THRESHOLD,
             cert_tol: float = 1e-4, restarts: int = DEFAULT_RESTARTS) -> OptimizeResult:
    """Construct and certify an optimal design for the problem's criterion.

    Runs up to ``restarts`` seeded attempts, each consisting of a global
    swarm search, support pruning, and shrinking local polish rounds, then
    certifies via the matching equivalence check.  Returns the first attempt
    whose check passes with an efficiency lower bound at or above
    ``threshold``; if none does, the best attempt is returned with
    ``certified=False``.
    """
    if not isinstance(config, PsoConfig):
        raise InvalidInputError("optimize requires a PsoConfig with an explicit seed")
    best = None
    for restart in range(max(1, int(restarts))):
        d1, d2, gamma, iters = _run_attempt(problem, config, restart)
        try:
            d1, d2, gamma = _refined(problem, d1, d2, gamma, cert_tol)
        except (NumericalFailureError, np.linalg.LinAlgError):
            pass  # certify the unrefined attempt; a restart may do better
        result = _finalize(problem, d1, d2, gamma, config, restart, iters, cert_tol, threshold)
        if result.certified:
            return result
        if best is None or result.value < best.value:
            best = result
    return best


def optimize_nu(problem: Problem, config: PsoConfig, **kw) -> OptimizeResult:
    """optimize() for problems with group 2 frozen at a given design."""
    if problem.eta is None:
        raise InvalidInputError("optimize_nu requires a problem with a fixed design eta")
    return optimize(problem, config, **kw)


def optimize_gamma(problem: Problem, config: PsoConfig, **kw) -> OptimizeResult:
    """optimize() for the jointly allocation-flexible sup criterion."""
    if not problem.optimize_allocation:
        raise InvalidInputError("optimize_gamma requires optimize_allocation=True")
    return optimize(problem, config, **kw)
