"""Exception hierarchy shared by the solver, diagnostics and CLI."""


class SpinBECError(Exception):
    """Base class for all package errors."""


class InvalidArgument(SpinBECError, ValueError):
    pass


class DegenerateInput(SpinBECError, ValueError):
    """Raised for inputs with no meaningful result, e.g. normalizing a zero field."""


class UnsupportedDiagnostic(SpinBECError):
    """A diagnostic was requested for a configuration it is not defined for."""


class PreconditionerBreakdown(SpinBECError):
    """The preconditioner divisor is not positive somewhere on the grid."""


class StepStalled(SpinBECError):
    """Backtracking exhausted without finding an energy-decreasing step."""


class SweepFailed(SpinBECError):
    pass


class FieldFileError(SpinBECError):
    """Corrupt, truncated or incompatible field file."""


class ConfigError(SpinBECError):
    """Invalid run configuration. ``line`` points into the config file when known."""

    def __init__(self, message, line=None, path=None):
        self.line = line
        self.path = path
        loc = ""
        if path is not None:
            loc = f"{path}:"
            if line is not None:
                loc += f"{line}:"
            loc += " "
        elif line is not None:
            loc = f"line {line}: "
        super().__init__(loc + message)
