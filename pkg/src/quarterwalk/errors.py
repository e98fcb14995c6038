"""Exception hierarchy shared by the numerical modules.

The CLI maps the three base classes onto exit codes (2, 3, 4).
"""


class ModelError(ValueError):
    """Invalid model input (schema, probabilities, thresholds)."""


class NumericalError(RuntimeError):
    """A numerical procedure failed or produced an uncertified result."""


class UnsupportedCase(RuntimeError):
    """The request falls outside what the analytic solver handles."""


class NotPositiveRecurrent(NumericalError):
    pass


class DegenerateDiscriminant(NumericalError):
    pass


class ZeroCountMismatch(NumericalError):
    pass


class DivisorZero(NumericalError):
    def __init__(self, level, message=None):
        self.level = level
        super().__init__(message or f"recursion divisor vanishes at level {level}")


class NoConvergence(NumericalError):
    def __init__(self, iterations, residual, what="iteration"):
        self.iterations = iterations
        self.residual = residual
        super().__init__(f"{what} did not converge after {iterations} steps (residual {residual:.3e})")


class ContourError(NumericalError):
    pass


class UVanishes(NumericalError):
    pass


class BVanishes(NumericalError):
    pass


class PoleCountMismatch(NumericalError):
    pass


class ResidualTooLarge(NumericalError):
    pass


class NegativeMass(NumericalError):
    pass


class UnsupportedIndex(UnsupportedCase):
    pass


class NotErgodic(UnsupportedCase):
    """A stationary solve was requested for a model that is not ergodic."""
