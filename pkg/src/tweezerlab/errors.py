"""Exception hierarchy shared across the package."""


class TweezerlabError(Exception):
    """Base class for all package errors."""


class ConfigurationError(TweezerlabError):
    """Inconsistent inputs: mismatched grids, bad parameters, invalid config files."""


class ContractViolation(TweezerlabError):
    """A documented precondition was violated (e.g. unnormalized wavefunction)."""


class NumericalOverflowError(TweezerlabError):
    """Non-finite amplitudes appeared during propagation."""


class ConvergenceError(TweezerlabError):
    """Iterative solver did not converge.  Carries the last residual."""

    def __init__(self, message, residual=None):
        super().__init__(message)
        self.residual = residual


class GridTooSmallError(TweezerlabError):
    """A relaxed eigenstate has non-negligible amplitude at the box boundary."""


class MixedSymmetryError(TweezerlabError):
    """A state supposed to live in one exchange-symmetry sector does not."""


class NonAdiabaticError(TweezerlabError):
    """Leakage out of the tracked adiabatic state exceeded the allowed bound."""

    def __init__(self, message, leakage=None):
        super().__init__(message)
        self.leakage = leakage


class StiffnessError(TweezerlabError):
    """Adaptive integrator step size underflowed."""


class OffResonanceError(TweezerlabError):
    """Rabi calibration found no population oscillation to fit."""


class InconsistencyError(TweezerlabError):
    """Cross-checks between two internal computations disagree."""
