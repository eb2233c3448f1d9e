"""Exception hierarchy shared by all rpcompass modules."""


class CompassError(Exception):
    """Base class for every error raised by rpcompass."""


class InvalidMultiplicityError(CompassError, ValueError):
    pass


class LayoutError(CompassError, ValueError):
    pass


class ConfigParseError(CompassError, ValueError):
    """Document does not match the config schema.

    ``path`` is the JSON path of the offending element.
    """

    def __init__(self, message: str, path: str = "$"):
        super().__init__(f"{path}: {message}")
        self.path = path


class ValidationError(CompassError, ValueError):
    """A model invariant is violated; ``field`` names the culprit."""

    def __init__(self, field: str, message: str):
        super().__init__(f"{field}: {message}")
        self.field = field


class NumericalContractError(CompassError, ArithmeticError):
    pass


class DomainError(CompassError, ValueError):
    pass


class IntegrationError(CompassError, ArithmeticError):
    """Master-equation integration failed; ``residual`` is what was achieved."""

    def __init__(self, message: str, residual: float):
        super().__init__(f"{message} (achieved residual {residual:.3e})")
        self.residual = residual


class MutationError(CompassError, ValueError):
    pass
