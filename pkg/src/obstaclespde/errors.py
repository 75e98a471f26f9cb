"""Exception types shared across the package."""


class ConfigurationError(ValueError):
    """Inputs are inconsistent or violate a precondition."""


class IntegrationError(RuntimeError):
    """Time stepping produced a non-finite value."""

    def __init__(self, message: str, step: int | None = None, cell: tuple | None = None):
        detail = message
        if step is not None:
            detail += f" at step {step}"
        if cell is not None:
            detail += f", cell {cell}"
        super().__init__(detail)
        self.step = step
        self.cell = cell


class OracleInvalidError(ValueError):
    """An exact-solution oracle was queried outside its range of validity."""
