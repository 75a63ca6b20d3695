"""Analytic worst-case-optimal designs for extrapolation problems.

When the comparison region lies strictly outside the design space and the
regression functions form weighted polynomial Chebyshev systems, the optimal
support is the alternation set of the equioscillating (Chebyshev) polynomial
on the design space, and the weights follow from weighted Lagrange
interpolation evaluated at the far end of the comparison region.  The
dose-response closed forms (Michaelis-Menten, loglinear with fixed shift,
EMAX) are the printed specializations of that construction.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from curvecmp.designs import Design, _interval
from curvecmp.errors import InvalidInputError, NumericalFailureError
from curvecmp.gridopt import polished_local_maxima
from curvecmp.models import WeightFunction, make_model

_REMEZ_MAX_ITER = 100
_REMEZ_TOL = 1e-10


def chebyshev_points_poly(p: int, interval) -> np.ndarray:
    """Alternation points of the degree-p Chebyshev polynomial on an interval.

    Returns p+1 increasing points including both endpoints, symmetric about
    the midpoint.
    """
    p = int(p)
    if p < 1:
        raise InvalidInputError("polynomial degree must be at least 1")
    lo, hi = _interval(interval, "design space")
    j = np.arange(p + 1)
    c = np.cos(j * np.pi / p)
    pts = 0.5 * ((1.0 - c) * hi + (1.0 + c) * lo)
    pts[0], pts[-1] = lo, hi  # exact endpoints
    return pts


def lagrange_weights(knots, z: float, omega: WeightFunction | None = None) -> np.ndarray:
    """Design weights proportional to |L_j(z)| for the weighted Lagrange basis.

    ``L_j(t) = (omega(t)/omega(t_j)) * prod_{k!=j} (t - t_k)/(t_j - t_k)``.
    The evaluation point must lie outside the knot hull (the extrapolation
    setting); at a knot the weights would degenerate to a unit vector.
    """
    omega = omega or WeightFunction()
    knots = np.asarray(knots, dtype=float)
    if knots.ndim != 1 or knots.size < 1 or np.any(np.diff(knots) <= 0):
        raise InvalidInputError("knots must be strictly increasing")
    z = float(z)
    if knots[0] <= z <= knots[-1]:
        raise InvalidInputError("evaluation point must lie outside the knot hull")
    wz = float(omega.value(z))
    wk = omega.value(knots)
    vals = np.empty(knots.size)
    for j in range(knots.size):
        others = np.delete(knots, j)
        vals[j] = abs(wz / wk[j] * np.prod((z - others) / (knots[j] - others)))
    return vals / vals.sum()


@dataclass(frozen=True)
class ChebyshevSolution:
    """Equioscillating combination v = omega(t) * q(t) on an interval.

    ``points`` are the alternation points (v alternates between +1 and -1
    starting at +1); ``coefficients`` are the power-basis coefficients of q;
    ``residual`` is the achieved equioscillation defect max|v| - 1.
    """

    points: np.ndarray
    coefficients: np.ndarray
    omega: WeightFunction
    interval: tuple[float, float]
    residual: float

    def value(self, t):
        t = np.asarray(t, dtype=float)
        return self.omega.value(t) * np.polynomial.polynomial.polyval(t, self.coefficients)


def _chebyshev_constant_weight(p: int, interval) -> ChebyshevSolution:
    lo, hi = interval
    cheb = np.polynomial.Chebyshev.basis(p, domain=[lo, hi])
    coeffs = cheb.convert(kind=np.polynomial.Polynomial).coef * (-1.0) ** p
    return ChebyshevSolution(
        points=chebyshev_points_poly(p, interval),
        coefficients=coeffs,
        omega=WeightFunction(),
        interval=(lo, hi),
        residual=0.0,
    )


def _alternating_extrema(err, lo, hi, n_grid=2001):
    """Locations/values of the alternating extrema of an error function."""
    grid = np.linspace(lo, hi, n_grid)
    vals = err(grid)
    pos_t, pos_v = polished_local_maxima(lambda t: float(err(t)), grid, vals)
    neg_t, neg_v = polished_local_maxima(lambda t: float(-err(t)), grid, -vals)
    cand = sorted(
        [(t, v) for t, v in zip(pos_t, pos_v)] + [(t, -v) for t, v in zip(neg_t, neg_v)],
        key=lambda tv: tv[0],
    )
    # collapse runs of equal sign, keeping the largest magnitude
    merged: list[tuple[float, float]] = []
    for t, v in cand:
        if merged and (v >= 0) == (merged[-1][1] >= 0):
            if abs(v) > abs(merged[-1][1]):
                merged[-1] = (t, v)
        else:
            merged.append((t, v))
    return merged


def equioscillating(omega: WeightFunction, p: int, interval) -> ChebyshevSolution:
    """Chebyshev (equioscillating) element of the system {omega * t^j, j<=p}.

    Computed by Remez exchange on the best weighted approximation of
    omega*t^p from span{omega*t^j, j < p}; the constant-weight case returns
    the classical Chebyshev polynomial directly.
    """
    p = int(p)
    if p < 1:
        raise InvalidInputError("polynomial degree must be at least 1")
    lo, hi = _interval(interval, "design space")
    if hi <= lo:
        raise InvalidInputError("interval must have positive length")
    if omega is None or omega.kind == "constant":
        return _chebyshev_constant_weight(p, (lo, hi))

    refs = chebyshev_points_poly(p, (lo, hi))
    signs = (-1.0) ** np.arange(p + 1)
    coeffs = None
    level = None
    for _ in range(_REMEZ_MAX_ITER):
        w = omega.value(refs)
        powers = refs[:, None] ** np.arange(p)
        A = np.column_stack([w[:, None] * powers, signs])
        rhs = w * refs**p
        sol = np.linalg.solve(A, rhs)
        coeffs, level = sol[:p], sol[p]

        def err(t, c=coeffs):
            t = np.asarray(t, dtype=float)
            poly = t**p - (t[..., None] ** np.arange(p)) @ c
            return omega.value(t) * poly

        extrema = _alternating_extrema(err, lo, hi)
        if len(extrema) < p + 1:
            raise NumericalFailureError(
                f"Remez exchange found only {len(extrema)} alternating extrema (need {p + 1})"
            )
        while len(extrema) > p + 1:
            # drop the weaker end extremum, preserving alternation
            if abs(extrema[0][1]) <= abs(extrema[-1][1]):
                extrema.pop(0)
            else:
                extrema.pop()
        new_refs = np.array([t for t, _ in extrema])
        dev = max(abs(v) for _, v in extrema)
        if dev - abs(level) <= _REMEZ_TOL * max(abs(level), 1e-300):
            refs = new_refs
            break
        refs = new_refs
    else:
        raise NumericalFailureError(
            f"Remez exchange did not converge within {_REMEZ_MAX_ITER} iterations "
            f"(level {level!r}, deviation {dev!r})"
        )

    # v = err/level alternates starting at +1 and has sup-norm 1
    full = np.append(-coeffs, 1.0) / level
    residual = float(dev / abs(level) - 1.0)
    return ChebyshevSolution(
        points=refs,
        coefficients=full,
        omega=omega,
        interval=(lo, hi),
        residual=residual,
    )


def _extrapolation_eval_point(design_space, region):
    """End of the comparison region where the variance peaks (mirrored case aware)."""
    xlo, xhi = design_space
    zlo, zhi = region
    if xhi < zlo:
        return zhi
    if xlo > zhi:
        return zlo
    raise InvalidInputError("design space and comparison region must not intersect")


def extrapolation_design_poly(p: int, design_space, comparison_region, omega: WeightFunction | None = None) -> Design:
    """Optimal one-group extrapolation design for a (weighted) polynomial model.

    Support: alternation points of the equioscillating polynomial on the
    design space.  Weights: normalized |Lagrange basis| at the far end of the
    comparison region (its near end in the mirrored orientation).
    """
    design_space = _interval(design_space, "design space")
    comparison_region = _interval(comparison_region, "comparison region")
    z_eval = _extrapolation_eval_point(design_space, comparison_region)
    omega = omega or WeightFunction()
    solution = equioscillating(omega, p, design_space)
    weights = lagrange_weights(solution.points, z_eval, omega)
    return Design(solution.points, weights)


def corollary_design(model_tag: str, theta, design_space, comparison_region) -> Design:
    """Printed closed-form extrapolation designs for the dose-response models.

    Valid for 0 <= L_X and U_X < L_Z (Michaelis-Menten additionally needs
    L_X > 0).  The loglinear branch reproduces the published formula as
    printed; its weights depend on exponentials of the raw interval endpoints
    only, so audit it against the numerical optimum before relying on it.
    """
    xlo, xhi = _interval(design_space, "design space")
    zlo, zhi = _interval(comparison_region, "comparison region")
    if xlo < 0:
        raise InvalidInputError("closed forms require a nonnegative design space")
    if not xhi < zlo:
        raise InvalidInputError("closed forms require the comparison region to the right of the design space")

    tag = str(model_tag).lower()
    if tag in ("mm", "michaelis-menten"):
        model = make_model("michaelis-menten", theta)
        if not xlo > 0:
            raise InvalidInputError("michaelis-menten closed form requires L_X > 0")
        th2 = model.theta[1]
        r2 = math.sqrt(2.0)
        t_low = th2 * xhi * (r2 - 1.0) / ((2.0 - r2) * xhi + th2)
        denom = xhi * zhi * (3.0 * r2 - 4.0) + th2 * (r2 * zhi - (4.0 - 2.0 * r2) * xhi)
        w_low = th2 * (zhi - xhi) / denom
        w_high = (r2 - 1.0) * ((2.0 - r2) * xhi * zhi + th2 * (zhi - (r2 - 1.0) * xhi)) / denom
        return Design([t_low, xhi], np.array([w_low, w_high]) / (w_low + w_high))

    if tag == "loglinear":
        make_model("loglinear", theta, theta3_fixed=True)  # validates theta
        e_lo, e_hi, e_z = math.exp(xlo), math.exp(xhi), math.exp(zhi)
        denom = 2.0 * e_z - (e_lo + e_hi)
        return Design([xlo, xhi], [(e_z - e_hi) / denom, (e_z - e_lo) / denom])

    if tag == "emax":
        model = make_model("emax", theta)
        th3 = model.theta[2]
        mid = (2.0 * xhi * xlo + (xhi + xlo) * th3) / (2.0 * th3 + xhi + xlo)

        def g(a, b):
            return a / (a + th3) - b / (b + th3)

        g_hi = g(zhi, xhi)
        g_lo = g(zhi, xlo)
        norm = g_hi**2 + 6.0 * g_hi * g_lo + g_lo**2
        weights = np.array([(g_hi + g_lo) * g_hi, 4.0 * g_hi * g_lo, (g_hi + g_lo) * g_lo]) / norm
        return Design([xlo, mid, xhi], weights)

    raise InvalidInputError(f"no closed form for model tag {model_tag!r}; use mm, loglinear or emax")
