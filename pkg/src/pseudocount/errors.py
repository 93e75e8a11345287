"""Exception types shared across the package."""


class DomainError(ValueError):
    """An argument lies outside the domain of a mathematical operation."""

    def __init__(self, message, field=None):
        super().__init__(message)
        self.field = field


class NotLearningPositiveError(DomainError):
    """The recoding probability did not exceed the model probability."""

    def __init__(self, rho, rho_prime):
        super().__init__(
            f"recoding probability {rho_prime!r} must exceed probability {rho!r}",
            field="rho_prime",
        )
        self.rho = rho
        self.rho_prime = rho_prime


class ShapeError(ValueError):
    """A frame or tensor does not have the dimensions a model expects."""


class UnsupportedOperation(TypeError):
    """The model does not implement the requested query."""


class OptimizerFault(ArithmeticError):
    """A non-finite gradient reached the optimizer."""


class SpecError(ValueError):
    """An experiment spec failed validation.

    ``problems`` holds one human-readable line per failed check.
    """

    def __init__(self, problems):
        self.problems = list(problems)
        super().__init__("; ".join(self.problems))
