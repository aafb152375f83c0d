"""Exception hierarchy shared by the library and the CLI exit-code mapping."""


class GlrtError(Exception):
    """Base class for all library errors."""


class RhoOutOfRange(GlrtError, ValueError):
    pass


class ZeroSample(GlrtError, ValueError):
    pass


class MissingTruth(GlrtError, ValueError):
    pass


class NonConvergence(GlrtError, RuntimeError):
    """The fixed-point iteration hit ``max_iterations`` before meeting tolerance."""

    def __init__(self, max_iterations, residual):
        super().__init__(
            f"fixed point did not converge in {max_iterations} iterations "
            f"(last relative change {residual:.3e})"
        )
        self.max_iterations = max_iterations
        self.residual = residual


class BracketFailure(GlrtError, RuntimeError):
    pass


class DegenerateDenominator(GlrtError, ArithmeticError):
    pass


class SingularEstimate(GlrtError, ArithmeticError):
    pass


class AllPointsFailed(GlrtError, RuntimeError):
    pass
