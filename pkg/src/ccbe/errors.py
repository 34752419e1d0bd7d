"""Exception hierarchy shared by the solver modules and the CLI."""


class CCBEError(Exception):
    """Base class for all package errors."""


class DomainError(CCBEError, ValueError):
    """An argument lies outside the domain of a closed-form expression."""


class InadmissibleParameters(CCBEError, ValueError):
    """Kernel, efficiency or daughter parameters violate the standing assumptions."""

    def __init__(self, message, report=None):
        super().__init__(message)
        self.report = report


class ConfigurationError(CCBEError, ValueError):
    """Malformed scenario, grid or integrator configuration."""


class ContractViolation(CCBEError):
    """A precondition on solver state was broken (e.g. negative density)."""


class IntegrationFailure(CCBEError):
    """Time integration could not proceed; carries the last good state."""

    def __init__(self, message, state=None, trajectory=None):
        super().__init__(message)
        self.state = state
        self.trajectory = trajectory
