"""Exception types raised by the fbmhd package."""


class FbmhdError(Exception):
    """Base class for all package errors."""


class CollarViolation(FbmhdError):
    pass


class NotStarShaped(FbmhdError):
    pass


class SolverDiverged(FbmhdError):
    pass


class NonZeroMean(FbmhdError):
    pass


class TaylorSignViolation(FbmhdError):
    pass


class TangencyViolation(FbmhdError):
    pass


class DivergenceViolation(FbmhdError):
    pass


class ExtrapolationTooFar(FbmhdError):
    pass


class ScaleTooCoarse(FbmhdError):
    pass


class FixedPointDiverged(FbmhdError):
    pass


class UnknownExpr(FbmhdError):
    pass


class CollarMismatch(FbmhdError):
    """Two states cannot be compared because their collars or grids differ."""
