"""Exception hierarchy shared by all solver modules."""


class DaeError(Exception):
    """Base class for every error raised by this package."""


class ContractViolation(DaeError, ValueError):
    """Inputs violate a documented precondition (shapes, ranges, flags)."""


class EvaluationError(DaeError):
    """A model hook failed or produced non-finite values."""

    def __init__(self, message, x=None, t=None):
        super().__init__(message)
        self.x = x
        self.t = t


class IndexMismatchError(DaeError):
    """The DAE is not of tractability index <= 2 at the evaluation point."""


class NonUniformIndexError(DaeError):
    """Sampled points disagree on the tractability index."""


class NewtonError(DaeError):
    """Newton iteration did not converge."""

    def __init__(self, message, best=None, residual_norm=None):
        super().__init__(message)
        self.best = best
        self.residual_norm = residual_norm


class LinearSolveError(DaeError):
    """A Newton Jacobian was numerically singular."""


class StepError(DaeError):
    """An implicit Euler step failed; carries step diagnostics."""

    def __init__(self, message, t_next=None, h=None, residual_norm=None, step_index=None):
        super().__init__(message)
        self.t_next = t_next
        self.h = h
        self.residual_norm = residual_norm
        self.step_index = step_index


class UnsupportedStructureError(DaeError):
    """The model lacks the structure or hooks an algorithm relies on."""


class NetlistError(DaeError, ValueError):
    """Malformed netlist text; ``lineno`` is 1-based when known."""

    def __init__(self, message, lineno=None):
        if lineno is not None:
            message = f"line {lineno}: {message}"
        super().__init__(message)
        self.lineno = lineno


class StructuralError(DaeError):
    """Circuit topology makes the flux-charge MNA system unsolvable."""


class PararealError(DaeError):
    """A window solve aborted a Parareal run."""

    def __init__(self, message, window=None, iteration=None):
        super().__init__(message)
        self.window = window
        self.iteration = iteration
