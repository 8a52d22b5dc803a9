"""Exception types shared across the package."""


class DomainError(ValueError):
    """Input outside the mathematical domain of an operation."""


class PreconditionError(ValueError):
    """A documented precondition of a check does not hold."""


class CapabilityError(RuntimeError):
    """The request exceeds what the chosen numerical path can deliver."""


class HypothesisError(ValueError):
    """The disorder law does not satisfy the hypothesis an experiment needs."""


class ConfigError(ValueError):
    """An experiment configuration failed validation.

    ``violations`` lists one human-readable message per offending constraint.
    """

    def __init__(self, violations):
        if isinstance(violations, str):
            violations = [violations]
        self.violations = list(violations)
        super().__init__("; ".join(self.violations))
