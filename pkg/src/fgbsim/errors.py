"""Exception types shared across the simulator."""


class FgbsimError(Exception):
    """Base class for all simulator errors."""


class IndexOutOfRange(FgbsimError, IndexError):
    pass


class ShapeMismatch(FgbsimError, ValueError):
    pass


class DuplicateNode(FgbsimError, ValueError):
    pass


class TooFewSamples(FgbsimError, ValueError):
    pass


class InvalidProbability(FgbsimError, ValueError):
    pass


class NotNodeLevel(FgbsimError, ValueError):
    pass


class InvalidAlpha(FgbsimError, ValueError):
    pass


class EmptyMask(FgbsimError, ValueError):
    pass


class NonFiniteValue(FgbsimError, ArithmeticError):
    pass


class InvalidModelParams(FgbsimError, ValueError):
    pass


class SurrogateUntrained(FgbsimError, ValueError):
    pass


class TooFewNodes(FgbsimError, ValueError):
    pass


class PositionCountMismatch(FgbsimError, ValueError):
    pass


class InvalidRho(FgbsimError, ValueError):
    pass


class EmptyUpdateSet(FgbsimError, ValueError):
    pass


class NoMaliciousClients(FgbsimError, ValueError):
    pass


class EmptyTestSet(FgbsimError, ValueError):
    pass


class MalformedRow(FgbsimError, ValueError):
    def __init__(self, path, line_no, message):
        super().__init__(f"{path}:{line_no}: {message}")
        self.path = str(path)
        self.line_no = line_no


class InconsistentIndicator(FgbsimError, ValueError):
    pass


class InvalidValue(FgbsimError, ValueError):
    pass


class UnknownKey(FgbsimError, ValueError):
    pass


class ParseError(FgbsimError, ValueError):
    pass


class UnknownFactor(FgbsimError, ValueError):
    pass
