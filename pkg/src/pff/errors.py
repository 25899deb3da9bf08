class ConfigurationError(ValueError):
    """Invalid or contradictory problem setup."""


class AssemblyError(RuntimeError):
    """Non-finite element contribution."""

    def __init__(self, element_id: int, message: str = "non-finite element system"):
        super().__init__(f"element {element_id}: {message}")
        self.element_id = element_id


class SolverFailure(RuntimeError):
    """A nonlinear step did not converge; the caller rolls back."""
