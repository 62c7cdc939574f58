class ConvergenceError(RuntimeError):
    """An iterative procedure ran out of budget before meeting its tolerance."""

    def __init__(self, message, residual=None, iterations=None):
        super().__init__(message)
        self.residual = residual
        self.iterations = iterations


class SupportTooNarrowError(ValueError):
    """Returns fall outside the atom grid and had to be clamped."""


class DivergenceError(RuntimeError):
    pass
