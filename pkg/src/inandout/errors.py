"""Exception hierarchy shared by all modules."""


class InOutError(Exception):
    """Base class for library errors."""


class ParameterError(InOutError, ValueError):
    """Invalid parameter or inconsistent configuration."""


class UnsupportedOperation(InOutError, NotImplementedError):
    """The operation is not defined for this body kind."""


class DiagnosticsError(InOutError, RuntimeError):
    """A safety cap was hit; usually means a mis-set schedule or step size."""


class ToleranceError(InOutError, RuntimeError):
    """A numerical tolerance could not be met (e.g. grid too small)."""
