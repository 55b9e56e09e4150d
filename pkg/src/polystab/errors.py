"""~/
exception hierarchy

Every error raised by the library derives from PolystabError, itself a ValueError, so callers that
only know about ValueError (the CLI loop, tests) keep working. Each class carries the process exit
code the CLI maps it to.

    PolystabError: root, exit code 2 (input / validation)
    UsageError: bad command line, exit code 1
    IdentityCheckFailed: nonzero identity difference, exit code 3
    ToleranceNotReached, FDInstability: numerical tolerance failures, exit code 4
"""


class PolystabError(ValueError):
    exit_code = 2


class UsageError(PolystabError):
    exit_code = 1


class IdentityCheckFailed(PolystabError):
    exit_code = 3


# polytope_core

class UnboundedPolytope(PolystabError):
    pass


class EmptyOrLowerDimensional(PolystabError):
    pass


class InactiveLabel(PolystabError):
    def __init__(self, index: int, message: str | None = None):
        self.index = index
        super().__init__(message or f"label {index} is not active on the polytope")


class NonPrimitiveNormal(PolystabError):
    def __init__(self, index: int, message: str | None = None):
        self.index = index
        super().__init__(message or f"label {index} does not have a primitive integer normal")


class DegenerateHyperplane(PolystabError):
    pass


class DimensionMismatch(PolystabError):
    pass


# exact_integration

class ToleranceNotReached(PolystabError):
    exit_code = 4

    def __init__(self, message: str, value: float | None = None, error: float | None = None):
        self.value = value
        self.error = error
        super().__init__(message)


class EvaluatorFailure(PolystabError):
    def __init__(self, point, message: str | None = None):
        self.point = tuple(float(c) for c in point)
        super().__init__(message or f"evaluator is not finite near {self.point}")


# weights / functionals

class KaehlerConeViolation(PolystabError):
    pass


class SingularGram(PolystabError):
    pass


class PoleNotCancelled(PolystabError):
    pass


class BasePointOnBoundary(PolystabError):
    pass


class LPUnbounded(PolystabError):
    pass


class LPInfeasible(PolystabError):
    pass


# donaldson_tc

class EmptyPieceList(PolystabError):
    pass


class NotStrictlyPositive(PolystabError):
    pass


class NonIntegerSlope(PolystabError):
    pass


# fibration / mabuchi / search

class PullbackNotConstantAlongFibers(PolystabError):
    pass


class NotConvex(PolystabError):
    pass


class FDInstability(PolystabError):
    exit_code = 4


class EnvelopeDegenerate(PolystabError):
    pass
