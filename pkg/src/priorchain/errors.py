"""Exception types shared across the package."""


class DomainError(ValueError):
    """An argument lies outside the mathematical domain of an operation."""


class ConfigError(ValueError):
    """Invalid run configuration (CLI or programmatic)."""


class NumericalError(RuntimeError):
    """A numerical procedure failed to meet its accuracy contract.

    Carries a ``diagnostics`` dict describing what failed and how badly.
    """

    def __init__(self, message, **diagnostics):
        super().__init__(message)
        self.diagnostics = dict(diagnostics)

    def __str__(self):
        base = super().__str__()
        if self.diagnostics:
            extras = ", ".join(f"{k}={v!r}" for k, v in sorted(self.diagnostics.items()))
            return f"{base} [{extras}]"
        return base


class TruncationError(NumericalError):
    """A series or table was cut off before reaching its tail-mass target."""
