class ParameterError(ValueError):
    """Invalid argument: out-of-range rank, mismatched shapes, bad probability."""


class SolverError(RuntimeError):
    """A solver produced non-finite values or violated a monitored invariant."""

    def __init__(self, message, iteration=None):
        super().__init__(message if iteration is None else f"{message} (iteration {iteration})")
        self.iteration = iteration
