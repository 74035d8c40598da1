class DProvError(Exception):
    """Base class for every error raised by dp_provenance."""


class ParamValidationError(DProvError, ValueError):
    pass


def ensure(condition: bool, message: str) -> None:
    if not condition:
        raise ParamValidationError(message)


class UnknownAttributeError(DProvError, KeyError):
    pass


class BinCapExceededError(DProvError):
    pass


class QueryShapeError(DProvError, ValueError):
    """A query's coefficient vector does not fit the view it names."""


class CalibrationError(DProvError, ArithmeticError):
    pass


class InfeasibleTranslationError(DProvError):
    """Even the largest admissible epsilon cannot meet the accuracy target."""


class DuplicateAnalystError(DProvError, ValueError):
    pass


class UnknownAnalystError(DProvError, KeyError):
    pass


class UnknownViewError(DProvError, KeyError):
    pass


class SequencingError(DProvError, RuntimeError):
    """Synopsis operations were invoked in an order the engine never produces."""


class SpecError(DProvError, ValueError):
    pass
