"""Exception hierarchy shared by every mpptbench module."""


class MpptBenchError(Exception):
    """Base class. ``exit_code`` is what the CLI returns for an uncaught instance."""

    exit_code = 1


class UsageError(MpptBenchError):
    exit_code = 2


class DegenerateParams(MpptBenchError):
    pass


class NoConvergence(MpptBenchError):
    pass


class CalibrationFailure(MpptBenchError):
    def __init__(self, message, best_residual=None):
        super().__init__(message)
        self.best_residual = best_residual


class OutOfRange(MpptBenchError):
    pass


class UnknownScenario(UsageError):
    pass


class GainUndefined(MpptBenchError):
    pass


class NonActuatable(MpptBenchError):
    pass


class ParseError(UsageError):
    pass


class NonMonotoneTime(ParseError):
    pass


class NegativeIrradiance(ParseError):
    pass


class EmptyLog(MpptBenchError):
    pass


class AllDark(MpptBenchError):
    pass


class EventOutOfRange(MpptBenchError):
    pass


class WindowInvalid(MpptBenchError):
    pass


class UnknownOpKind(UsageError):
    pass


class UnknownAlgorithm(UsageError):
    pass


class SimulationError(MpptBenchError):
    """Solver or converter failure inside a run, tagged with the step index."""

    def __init__(self, step, cause):
        super().__init__(f"step {step}: {cause}")
        self.step = step
        self.cause = cause


class ConfigError(UsageError):
    pass
