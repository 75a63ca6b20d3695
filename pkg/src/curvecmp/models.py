"""Parametric regression models with exact analytic gradients.

The design machinery only ever needs two things from a model: the mean
response ``predict(t)`` and the parameter gradient ``gradient(t)``, both
vectorized over arbitrarily shaped arrays of design points.  Gradients are
hand-derived (the model zoo is small and fixed); finite differences are used
only as test oracles.

Built-in models: EMAX, exponential, loglinear (with the intercept-scale
parameter either free or held fixed), Michaelis-Menten, and (weighted)
polynomials of arbitrary degree.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from curvecmp.errors import InvalidInputError

# Parameter sets of the standard dose-response benchmark scenarios on [0, 1].
DEFAULT_THETAS = {
    "emax": (0.2, 0.7, 0.2),
    "exponential": (0.183, 0.017, 0.28),
    "loglinear": (0.74, 0.33, 0.2),
}


@dataclass(frozen=True)
class WeightFunction:
    """Positive weight multiplying a polynomial regression function.

    Supported forms: ``constant`` (1), ``exp`` (e^{a t}) and ``power``
    (t^a with a > 0, positive arguments only).
    """

    kind: str = "constant"
    a: float = 0.0

    def __post_init__(self):
        if self.kind not in ("constant", "exp", "power"):
            raise InvalidInputError(f"unknown weight function kind {self.kind!r}")
        if self.kind == "power" and not self.a > 0:
            raise InvalidInputError("power weight requires exponent a > 0")

    def value(self, t):
        t = np.asarray(t, dtype=float)
        if self.kind == "constant":
            return np.ones_like(t)
        if self.kind == "exp":
            return np.exp(self.a * t)
        if np.any(t <= 0):
            raise InvalidInputError("power weight requires t > 0")
        return t**self.a

    def deriv(self, t):
        t = np.asarray(t, dtype=float)
        if self.kind == "constant":
            return np.zeros_like(t)
        if self.kind == "exp":
            return self.a * np.exp(self.a * t)
        if np.any(t <= 0):
            raise InvalidInputError("power weight requires t > 0")
        return self.a * t ** (self.a - 1.0)

    def to_dict(self):
        return {"kind": self.kind, "a": self.a}


@dataclass(frozen=True, eq=False)
class ModelSpec:
    """A named parametric regression model at a fixed nominal parameter.

    ``dim`` is the number of free parameters; ``gradient`` always returns
    vectors of that length.  Subclasses implement the model formula and its
    exact gradient and must validate their parameter constraints on
    construction.
    """

    name: str
    theta: tuple[float, ...]

    @property
    def dim(self) -> int:
        raise NotImplementedError

    def predict(self, t):
        """Mean response at t; vectorized, raises on domain violations."""
        raise NotImplementedError

    def gradient(self, t):
        """Parameter gradient at t with shape ``t.shape + (dim,)``."""
        raise NotImplementedError

    def check_domain(self, t) -> None:
        """Raise InvalidInputError if any point violates the model domain."""

    def to_dict(self):
        return {"name": self.name, "theta": list(self.theta)}

    def __repr__(self):
        return f"{type(self).__name__}(theta={self.theta})"


def _as_theta(theta, n, name):
    theta = tuple(float(v) for v in theta)
    if len(theta) != n:
        raise InvalidInputError(f"{name} model needs {n} parameters, got {len(theta)}")
    return theta


class EmaxModel(ModelSpec):
    """m(t) = theta1 + theta2 * t / (theta3 + t), theta3 > 0."""

    def __init__(self, theta):
        theta = _as_theta(theta, 3, "emax")
        if not theta[2] > 0:
            raise InvalidInputError("emax model requires theta3 > 0")
        super().__init__(name="emax", theta=theta)

    @property
    def dim(self):
        return 3

    def check_domain(self, t):
        if np.any(np.asarray(t) + self.theta[2] == 0):
            raise InvalidInputError("emax model requires t + theta3 != 0")

    def predict(self, t):
        t = np.asarray(t, dtype=float)
        self.check_domain(t)
        th1, th2, th3 = self.theta
        return th1 + th2 * t / (th3 + t)

    def gradient(self, t):
        t = np.asarray(t, dtype=float)
        self.check_domain(t)
        _, th2, th3 = self.theta
        frac = t / (th3 + t)
        return np.stack([np.ones_like(t), frac, -th2 * t / (th3 + t) ** 2], axis=-1)


class ExponentialModel(ModelSpec):
    """m(t) = theta1 + theta2 * exp(t / theta3), theta3 != 0."""

    def __init__(self, theta):
        theta = _as_theta(theta, 3, "exponential")
        if theta[2] == 0:
            raise InvalidInputError("exponential model requires theta3 != 0")
        super().__init__(name="exponential", theta=theta)

    @property
    def dim(self):
        return 3

    def predict(self, t):
        t = np.asarray(t, dtype=float)
        th1, th2, th3 = self.theta
        return th1 + th2 * np.exp(t / th3)

    def gradient(self, t):
        t = np.asarray(t, dtype=float)
        _, th2, th3 = self.theta
        e = np.exp(t / th3)
        return np.stack([np.ones_like(t), e, -th2 * t * e / th3**2], axis=-1)


class LogLinearModel(ModelSpec):
    """m(t) = theta1 + theta2 * log(t + theta3), theta3 > 0.

    With ``theta3_fixed`` the shift is treated as a known constant, so the
    model has two free parameters and the gradient drops the theta3 entry.
    """

    def __init__(self, theta, theta3_fixed=False):
        theta = _as_theta(theta, 3, "loglinear")
        if not theta[2] > 0:
            raise InvalidInputError("loglinear model requires theta3 > 0")
        super().__init__(name="loglinear", theta=theta)
        object.__setattr__(self, "theta3_fixed", bool(theta3_fixed))

    @property
    def dim(self):
        return 2 if self.theta3_fixed else 3

    def check_domain(self, t):
        if np.any(np.asarray(t) + self.theta[2] <= 0):
            raise InvalidInputError("loglinear model requires t + theta3 > 0")

    def predict(self, t):
        t = np.asarray(t, dtype=float)
        self.check_domain(t)
        th1, th2, th3 = self.theta
        return th1 + th2 * np.log(t + th3)

    def gradient(self, t):
        t = np.asarray(t, dtype=float)
        self.check_domain(t)
        _, th2, th3 = self.theta
        logterm = np.log(t + th3)
        if self.theta3_fixed:
            return np.stack([np.ones_like(t), logterm], axis=-1)
        return np.stack([np.ones_like(t), logterm, th2 / (t + th3)], axis=-1)

    def to_dict(self):
        d = super().to_dict()
        d["theta3_fixed"] = self.theta3_fixed
        return d

    def __repr__(self):
        suffix = ", theta3_fixed" if self.theta3_fixed else ""
        return f"LogLinearModel(theta={self.theta}{suffix})"


class MichaelisMentenModel(ModelSpec):
    """m(t) = theta1 * t / (theta2 + t), theta2 > 0."""

    def __init__(self, theta):
        theta = _as_theta(theta, 2, "michaelis-menten")
        if not theta[1] > 0:
            raise InvalidInputError("michaelis-menten model requires theta2 > 0")
        super().__init__(name="michaelis-menten", theta=theta)

    @property
    def dim(self):
        return 2

    def check_domain(self, t):
        if np.any(np.asarray(t) + self.theta[1] == 0):
            raise InvalidInputError("michaelis-menten model requires theta2 + t != 0")

    def predict(self, t):
        t = np.asarray(t, dtype=float)
        self.check_domain(t)
        th1, th2 = self.theta
        return th1 * t / (th2 + t)

    def gradient(self, t):
        t = np.asarray(t, dtype=float)
        self.check_domain(t)
        th1, th2 = self.theta
        return np.stack([t / (th2 + t), -th1 * t / (th2 + t) ** 2], axis=-1)


class PolynomialModel(ModelSpec):
    """m(t) = omega(t) * sum_j theta_j t^j; degree inferred from theta.

    The plain polynomial is the ``constant`` weight special case.  Only the
    regression functions (omega * t^j) enter design computations, so theta
    matters for prediction alone.
    """

    def __init__(self, theta, weight: WeightFunction | None = None, name=None):
        theta = tuple(float(v) for v in theta)
        if len(theta) < 1:
            raise InvalidInputError("polynomial model needs at least one coefficient")
        weight = weight or WeightFunction()
        super().__init__(name=name or ("polynomial" if weight.kind == "constant" else "weighted-polynomial"), theta=theta)
        object.__setattr__(self, "weight", weight)

    @property
    def degree(self):
        return len(self.theta) - 1

    @property
    def dim(self):
        return len(self.theta)

    def predict(self, t):
        t = np.asarray(t, dtype=float)
        powers = t[..., None] ** np.arange(self.dim)
        return self.weight.value(t) * (powers @ np.asarray(self.theta))

    def gradient(self, t):
        t = np.asarray(t, dtype=float)
        powers = t[..., None] ** np.arange(self.dim)
        return self.weight.value(t)[..., None] * powers

    def to_dict(self):
        d = super().to_dict()
        if self.weight.kind != "constant":
            d["weight"] = self.weight.to_dict()
        return d


_BUILTIN = {
    "emax": EmaxModel,
    "exponential": ExponentialModel,
    "loglinear": LogLinearModel,
    "michaelis-menten": MichaelisMentenModel,
    "polynomial": PolynomialModel,
    "weighted-polynomial": PolynomialModel,
}

_ALIASES = {"mm": "michaelis-menten", "exp": "exponential"}


def model_names():
    return sorted(_BUILTIN)


def make_model(name, theta, theta3_fixed=False, weight=None) -> ModelSpec:
    """Construct a built-in model by name.

    ``theta3_fixed`` applies to the loglinear model only; ``weight`` (a
    WeightFunction or its dict form) applies to weighted polynomials only.
    """
    key = _ALIASES.get(str(name).lower(), str(name).lower())
    if key not in _BUILTIN:
        raise InvalidInputError(f"unknown model {name!r}; available: {', '.join(model_names())}")
    if key == "loglinear":
        return LogLinearModel(theta, theta3_fixed=theta3_fixed)
    if theta3_fixed:
        raise InvalidInputError("theta3_fixed is only meaningful for the loglinear model")
    if key in ("polynomial", "weighted-polynomial"):
        if isinstance(weight, dict):
            weight = WeightFunction(**weight)
        return PolynomialModel(theta, weight=weight)
    if weight is not None:
        raise InvalidInputError("weight functions apply to polynomial models only")
    return _BUILTIN[key](theta)


@dataclass(frozen=True)
class GroupSpec:
    """One group's model together with its error variance and sample fraction.

    ``gamma`` is the asymptotic share of the total sample allocated to the
    group; the two shares of a pair must sum to one.
    """

    model: ModelSpec
    sigma2: float
    gamma: float = 0.5

    def __post_init__(self):
        if not (math.isfinite(self.sigma2) and self.sigma2 > 0):
            raise InvalidInputError("sigma2 must be positive")
        if not (0.0 < self.gamma < 1.0):
            raise InvalidInputError("gamma must lie strictly between 0 and 1")

    @property
    def variance_scale(self) -> float:
        """sigma^2 / gamma, the factor scaling the group's dispersion term."""
        return self.sigma2 / self.gamma
