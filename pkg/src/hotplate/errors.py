"""Exception hierarchy.

The CLI maps ConfigError to exit code 2 and SolverError to exit code 3.
"""


class HotplateError(Exception):
    pass


class ConfigError(HotplateError, ValueError):
    pass


class UnknownMaterialError(ConfigError, KeyError):
    def __str__(self):
        return self.args[0] if self.args else "unknown material"


class GeometryError(HotplateError, ValueError):
    pass


class OverlapError(GeometryError):
    pass


class ResolutionError(GeometryError):
    pass


class ConnectivityError(GeometryError):
    """A conductor region is not reachable from any electrode."""


class SolverError(HotplateError, RuntimeError):
    pass


class SingularSystemError(SolverError):
    pass


class ConvergenceError(SolverError):
    pass


class CalibrationError(HotplateError, ValueError):
    pass


class ExtrapolationWarning(UserWarning):
    pass
