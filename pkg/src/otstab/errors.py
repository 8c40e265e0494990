"""Exception types shared across the toolkit."""


class OtstabError(Exception):
    """Base class for all toolkit errors."""


class FieldEvaluationError(OtstabError):
    """A coefficient field produced a non-finite value at some point."""

    def __init__(self, field_name, point, value):
        self.field_name = field_name
        self.point = tuple(float(c) for c in point)
        self.value = value
        super().__init__(
            f"field {field_name!r} is non-finite at point {self.point}: {value!r}"
        )


class BranchCutError(OtstabError):
    """A principal-branch complex power was requested on the negative real axis."""


class SolverError(OtstabError):
    """The linear solver failed to reach the requested tolerance."""

    def __init__(self, message, iterations=None, residual=None):
        self.iterations = iterations
        self.residual = residual
        super().__init__(message)


class MeshError(OtstabError):
    """A mesh violates a structural invariant (orientation, conformity, ...)."""
