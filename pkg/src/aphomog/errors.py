"""Exception types raised across the package."""


class AphomogError(Exception):
    pass


class InadmissibleField(AphomogError, ValueError):
    pass


class ShapeMismatch(AphomogError, ValueError):
    pass


class NonConvergence(AphomogError, RuntimeError):
    def __init__(self, max_iter, residual, message=None):
        self.max_iter = max_iter
        self.residual = residual
        super().__init__(
            message or f"no convergence after {max_iter} iterations (rel. residual {residual:.3e})"
        )


class IndefiniteDetected(AphomogError, RuntimeError):
    pass


class ResolutionTooCoarse(AphomogError, ValueError):
    def __init__(self, eps, h):
        self.eps = eps
        self.h = h
        super().__init__(f"grid spacing h={h:.4g} does not resolve eps={eps:.4g} (need h <= eps/16)")


class KernelUnderresolved(AphomogError, ValueError):
    pass


class SupportViolation(AphomogError, RuntimeError):
    pass


class AdmissibilityLost(AphomogError, ValueError):
    pass


class GridIncompatible(AphomogError, ValueError):
    pass
