"""Exception hierarchy.

Every error raised on purpose by the package derives from
:class:`DriftwatchError`; the ones caused by bad arguments also derive from
:class:`ValueError` so generic callers can catch them the usual way.
"""


class DriftwatchError(Exception):
    pass


class IOFailure(DriftwatchError, OSError):
    pass


class ParseFailure(DriftwatchError, ValueError):
    def __init__(self, row, column, text):
        self.row = row
        self.column = column
        self.text = text
        super().__init__(f"cannot parse {text!r} at row {row}, column {column}")


class EmptyDataset(DriftwatchError, ValueError):
    pass


class InvalidZeta(DriftwatchError, ValueError):
    pass


class SizeMismatch(DriftwatchError, ValueError):
    pass


class DimMismatch(DriftwatchError, ValueError):
    pass


class TooFewRows(DriftwatchError, ValueError):
    pass


class DegenerateData(DriftwatchError, ValueError):
    pass


class LengthMismatch(DriftwatchError, ValueError):
    pass


class TooFewSamples(DriftwatchError, ValueError):
    pass


class EmptySample(DriftwatchError, ValueError):
    pass


class EmptyPermutations(DriftwatchError, ValueError):
    pass


class MetricMissing(DriftwatchError, ValueError):
    pass


class SingleClassTable(DriftwatchError, ValueError):
    pass


class EmptyTable(DriftwatchError, ValueError):
    pass


class RatioInfeasible(DriftwatchError, ValueError):
    pass


class ConfigError(DriftwatchError, ValueError):
    pass
