"""Exception types raised across the package."""


class NCQMAError(Exception):
    """Base class for all package errors."""


class ZeroVector(NCQMAError, ValueError):
    pass


class DimMismatch(NCQMAError, ValueError):
    pass


class InvalidEffect(NCQMAError, ValueError):
    pass


class InvalidWeights(NCQMAError, ValueError):
    pass


class InvalidThreshold(NCQMAError, ValueError):
    pass


class BadIndex(NCQMAError, IndexError):
    pass


class BadAssignment(NCQMAError, ValueError):
    pass


class TooLarge(NCQMAError, ValueError):
    """Brute-force search space exceeds the desk-scale cap."""


class ParseError(NCQMAError, ValueError):
    """Malformed JSON input; the message names the offending field."""


class Infeasible(NCQMAError, RuntimeError):
    pass


class DegenerateConstants(NCQMAError, ValueError):
    pass


class HypothesisNotMet(NCQMAError, ValueError):
    pass


class ObjectiveError(NCQMAError, FloatingPointError):
    pass
