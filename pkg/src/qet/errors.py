"""Exception hierarchy shared by all modules."""


class QetError(Exception):
    """Base class for every error raised by this package."""


class ParseError(QetError):
    def __init__(self, message, line=None, col=None):
        self.line = line
        self.col = col
        where = f" at line {line}, column {col}" if line is not None else ""
        super().__init__(f"{message}{where}")


class WellFormednessError(QetError):
    """Unknown identifiers, arity or dimension mismatches, type errors."""


class MacroError(QetError):
    pass


class IntegerOverflow(QetError, ArithmeticError):
    pass


class DimensionError(QetError, ValueError):
    pass


class NonExpectationError(QetError, ValueError):
    """An expectation evaluated to a negative number."""


class ChainViolation(QetError):
    """A fixed-point iterate decreased: the functional is not monotone."""


class TruncationError(QetError):
    pass


class SummaryMisuse(QetError):
    """A summary was applied to a continuation it does not cover."""


class UnsummarizedLoop(QetError):
    pass


class MissingInvariant(QetError):
    pass
