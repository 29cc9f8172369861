"""Exception types raised across the package."""


class CurveFlowError(Exception):
    """Base class for all package errors."""


class TooFewNodes(CurveFlowError, ValueError):
    pass


class DegenerateCurve(CurveFlowError, ValueError):
    pass


class NumericalFailure(CurveFlowError, ArithmeticError):
    pass


class SingularSolve(NumericalFailure):
    pass


class InsufficientRecords(CurveFlowError, ValueError):
    pass


class MissingSnapshots(CurveFlowError, ValueError):
    pass


class HypothesisNotMet(CurveFlowError, ValueError):
    """Input does not satisfy the hypotheses of the inequality or identity being checked."""


class NonPositiveField(CurveFlowError, ValueError):
    pass


class ZeroFunction(CurveFlowError, ValueError):
    pass


class ClosureFailed(CurveFlowError, RuntimeError):
    pass


class InvalidWinding(CurveFlowError, ValueError):
    pass


class TargetUnreachable(CurveFlowError, ValueError):
    pass


class MalformedTrajectory(CurveFlowError, ValueError):
    pass


class ParseError(CurveFlowError, ValueError):
    def __init__(self, message, line=None, field=None):
        self.line = line
        self.field = field
        where = []
        if line is not None:
            where.append(f"line {line}")
        if field is not None:
            where.append(f"field '{field}'")
        prefix = f"{', '.join(where)}: " if where else ""
        super().__init__(prefix + message)


class ValidationError(CurveFlowError, ValueError):
    def __init__(self, errors):
        if isinstance(errors, str):
            errors = [errors]
        self.errors = list(errors)
        super().__init__("; ".join(self.errors))
