"""Exception types shared across the package."""


class FalconError(Exception):
    """Base class for all errors raised by falcon_lfd."""


class Unreachable(FalconError):
    def __init__(self, leg, ratio):
        self.leg = leg
        self.ratio = ratio
        super().__init__(f"leg {leg} cannot reach the point (|C|/sqrt(A^2+B^2) = {ratio:.6g})")


class NoConvergence(FalconError):
    pass


class SingularError(FalconError):
    pass


class SingularClosure(SingularError):
    pass


class InconsistentState(FalconError):
    pass


class NotPD(FalconError):
    pass


class IntegrationDiverged(FalconError):
    pass


class OutOfWorkspace(FalconError):
    pass


class ParseError(FalconError):
    def __init__(self, message, line=None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class NonMonotoneTime(FalconError):
    pass


class TooFewSamples(FalconError):
    pass


class SolverFailure(FalconError):
    pass


class FormatVersionMismatch(FalconError):
    pass


class EmptyLog(FalconError):
    pass


class ConfigError(FalconError):
    pass


class ScenarioError(FalconError):
    """Wraps a module error with the pipeline phase and simulation time."""

    def __init__(self, phase, t, cause):
        self.phase = phase
        self.t = t
        self.cause = cause
        where = f" at t={t:.6g} s" if t is not None else ""
        super().__init__(f"{phase}{where}: {type(cause).__name__}: {cause}")
