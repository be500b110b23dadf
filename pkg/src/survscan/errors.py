"""Exception types raised by survscan."""


class SurvScanError(Exception):
    """Base class for all survscan errors."""


class DatasetError(SurvScanError):
    pass


class ParseError(DatasetError, ValueError):
    """Malformed or missing numeric field in an input file."""


class SchemaError(DatasetError, KeyError):
    def __str__(self):
        return str(self.args[0]) if self.args else ""


class DomainError(DatasetError, ValueError):
    """Value outside its admissible domain (negative time, bad status...)."""


class DataIndexError(DatasetError, IndexError):
    """Row or column id out of range in a sparse input."""


class DuplicateEntryError(DatasetError, ValueError):
    pass


class DegenerateCurveError(SurvScanError, ValueError):
    """Censoring survival curve hits zero where weights are needed."""


class NonPositiveDenominator(SurvScanError, ArithmeticError):
    """A risk-set denominator accumulated to a value <= 0."""


class ExpOverflowError(SurvScanError, OverflowError):
    """Linear predictor left the range where exp() is safe."""


class InvalidColumn(SurvScanError, IndexError):
    pass


class NonFiniteStep(SurvScanError, ArithmeticError):
    """Newton step undefined: zero curvature with nonzero slope."""


class EmptyFoldError(SurvScanError, ValueError):
    pass


class BootstrapError(SurvScanError, RuntimeError):
    pass
