"""Exception hierarchy shared by the library and the CLI."""

from __future__ import annotations


class FKGroundError(Exception):
    """Base class for all library errors."""


class EvaluationError(FKGroundError):
    """An interaction term produced a non-finite value."""


class ContractError(FKGroundError, ValueError):
    """An operation was called with arguments violating its preconditions."""


class ModelFileError(FKGroundError, ValueError):
    """A model, config or scenario file is malformed."""


class ResonanceError(FKGroundError):
    """A retained Fourier mode has a divisor below the configured floor."""

    def __init__(self, mode, divisor, floor):
        self.mode = tuple(int(k) for k in mode)
        self.divisor = float(divisor)
        self.floor = float(floor)
        super().__init__(
            f"resonant mode k={self.mode}: divisor {self.divisor:.3e} < floor {self.floor:.3e}"
        )


class ConvergenceError(FKGroundError):
    """Newton iteration failed; ``history`` holds (epsilon, iteration, residual) rows."""

    def __init__(self, message, history=()):
        self.history = list(history)
        super().__init__(message)


class SearchError(FKGroundError):
    """Window minimization did not reach stationarity."""

    def __init__(self, message, trajectory=()):
        self.trajectory = list(trajectory)
        super().__init__(message)


class PreconditionError(FKGroundError):
    """A hypothesis required by an operation does not hold."""


class HypothesisError(PreconditionError):
    """A hypothesis of the ground-state theorem failed; ``hypothesis`` names it."""

    def __init__(self, hypothesis, detail=""):
        self.hypothesis = hypothesis
        self.detail = detail
        msg = f"{hypothesis} failed"
        if detail:
            msg += f": {detail}"
        super().__init__(msg)


class FoliationError(FKGroundError):
    """A foliation member is not an equilibrium."""

    def __init__(self, message, beta=None, site=None, residual=None):
        self.beta = beta
        self.site = site
        self.residual = residual
        super().__init__(message)


class GraphError(FKGroundError):
    """Unreachable pair or disconnected set in the interaction graph."""


class ContactError(FKGroundError):
    """A contact scenario produced a counterexample to the propagation argument."""

    def __init__(self, message, site=None, value=None):
        self.site = site
        self.value = value
        super().__init__(message)
