"""Exception hierarchy shared by all modules."""


class ThzmmError(Exception):
    """Base class; `module` names where the failure originated."""

    module = "thzmm"


class ValidationError(ThzmmError, ValueError):
    module = "scenario"

    def __init__(self, path, message):
        self.path = path
        super().__init__(f"{path}: {message}")


class ConfigParseError(ThzmmError, ValueError):
    module = "scenario"


class DomainError(ThzmmError, ValueError):
    """Argument outside the region where a formula is defined."""

    module = "radio"


class InfeasibleLinkError(ThzmmError):
    """Link budget cannot close at any distance."""

    module = "radio"


class GeometryError(ThzmmError):
    module = "strategies"

    def __init__(self, path, message):
        self.path = path
        super().__init__(f"{path}: {message}")


class ConvergenceError(ThzmmError):
    module = "rels"

    def __init__(self, message, residual=float("nan"), iterations=0, diagnostics=None):
        self.residual = residual
        self.iterations = iterations
        self.diagnostics = diagnostics or {}
        super().__init__(f"{message} (residual={residual:.3e}, iterations={iterations})")


class SimConfigError(ThzmmError, ValueError):
    module = "sim"
