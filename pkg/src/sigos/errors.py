"""Exception types shared across the package."""


class ParameterError(ValueError):
    """Raised when inputs fall outside an operation's stated domain."""


class InfeasibleError(RuntimeError):
    """Raised when a constraint system that should be solvable is not."""


class AcceptanceFailure(AssertionError):
    """Raised when a checked bound or identity fails on valid inputs."""
