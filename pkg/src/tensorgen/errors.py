"""Exception hierarchy.

Two families: bad inputs (files, shapes, arguments) and numerical failures
(rank deficiency, non-convergence). The CLI maps them to distinct exit codes.
"""


class TensorGenError(Exception):
    pass


class InputError(TensorGenError, ValueError):
    pass


class NumericalError(TensorGenError, ArithmeticError):
    pass


class RankDeficiencyError(NumericalError):
    """Fewer than ``k`` usable eigenvalues in the second moment."""

    def __init__(self, k, rank, message=None):
        self.k = k
        self.rank = rank
        super().__init__(
            message
            or f"second moment has numerical rank {rank}, fewer than k={k} latent states"
        )


class CompletionError(NumericalError):
    pass


class DeflationError(NumericalError):
    def __init__(self, component):
        self.component = component
        super().__init__(
            f"tensor power method deflation failed at component {component}: "
            "no restart reached a positive eigenvalue"
        )
