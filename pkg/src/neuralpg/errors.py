"""Exception types raised across the package."""


class NeuralPGError(Exception):
    """Base class for all package errors."""


class InvalidDimensionError(NeuralPGError, ValueError):
    pass


class InvalidMdpError(NeuralPGError, ValueError):
    pass


class SolverError(NeuralPGError, RuntimeError):
    pass


class ConvergenceError(NeuralPGError, RuntimeError):
    pass


class NonMixingError(ConvergenceError):
    """Power iteration on the induced chain did not settle.

    ``residual`` holds the final L1 residual ``||rho P - rho||_1``.
    """

    def __init__(self, message, residual):
        super().__init__(message)
        self.residual = residual


class SupportError(NeuralPGError, ValueError):
    """A Radon-Nikodym ratio has a positive numerator over a zero denominator."""

    def __init__(self, message, where):
        super().__init__(message)
        self.where = where


class UnknownEnvError(NeuralPGError, ValueError):
    pass
