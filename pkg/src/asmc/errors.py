"""Exception types raised by the sampler library."""


class ASMCError(Exception):
    """Base class for all library errors."""


class AllWeightsDegenerate(ASMCError, FloatingPointError):
    """Every log-weight is -inf (or NaN), so the weights cannot be normalized."""


class DimensionMismatch(ASMCError, ValueError):
    pass


class CovarianceNotFactorizable(ASMCError, ArithmeticError):
    """Cholesky factorization failed even after jitter regularization."""


class InvalidScaling(ASMCError, ValueError):
    pass


class UnknownDataset(ASMCError, KeyError):
    pass


class EmptyMenu(ASMCError, ValueError):
    pass


class LengthMismatch(ASMCError, ValueError):
    pass


class TooFewRuns(ASMCError, ValueError):
    pass
