"""Exception hierarchy shared by all iterreg modules."""


class IterRegError(Exception):
    """Base class for all iterreg errors."""


class DimensionError(IterRegError, ValueError):
    """Array or point shapes do not agree."""


class LabelError(IterRegError, ValueError):
    """Labels are not valid for the chosen loss."""


class ParameterError(IterRegError, ValueError):
    """A numeric parameter lies outside its admissible range."""


class ScheduleError(ParameterError):
    """Step-size schedule violates the admissibility bound."""


class DivergenceError(IterRegError, FloatingPointError):
    """Iterates left the theoretical norm envelope or became non-finite."""

    def __init__(self, message, t=None):
        super().__init__(message)
        self.t = t
