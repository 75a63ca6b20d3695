"""Exception types shared across the package."""


class CurveCmpError(Exception):
    """Base class for all package-specific errors."""


class InvalidInputError(CurveCmpError, ValueError):
    """An argument violates a documented precondition or domain constraint."""


class SingularDesignError(CurveCmpError):
    """An information matrix is singular (or numerically rank deficient).

    ``group`` is 1 or 2 and identifies which design caused the failure,
    or ``None`` when the context has a single design.
    """

    def __init__(self, group=None, detail=""):
        self.group = group
        where = f" (group {group})" if group is not None else ""
        msg = f"singular information matrix{where}"
        if detail:
            msg += f": {detail}"
        super().__init__(msg)


class NumericalFailureError(CurveCmpError):
    """An iterative numerical procedure failed to converge."""
