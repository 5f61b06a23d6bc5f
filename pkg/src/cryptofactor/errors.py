"""Exception hierarchy.

Every error carries an ``exit_code`` so the command line front end can map
failures to the documented status categories without inspecting types.
"""


class CryptoFactorError(Exception):
    exit_code = 1


class ConfigError(CryptoFactorError):
    exit_code = 2


class DataError(CryptoFactorError):
    exit_code = 3


class EstimationError(CryptoFactorError):
    exit_code = 4


class MissingColumn(DataError):
    def __init__(self, path, columns):
        self.path = str(path)
        self.columns = list(columns)
        super().__init__(f"{self.path}: missing column(s) {', '.join(self.columns)}")


class BadNumeric(DataError):
    """One or more rows failed numeric validation.

    ``lines`` holds 1-based file line numbers (the header is line 1).
    """

    def __init__(self, path, column, lines):
        self.path = str(path)
        self.column = column
        self.lines = list(lines)
        shown = ", ".join(str(n) for n in self.lines[:10])
        more = "" if len(self.lines) <= 10 else f" (+{len(self.lines) - 10} more)"
        super().__init__(f"{self.path}: bad value in '{column}' at line(s) {shown}{more}")


class BadDate(BadNumeric):
    pass


class BadCategory(BadNumeric):
    pass


class DuplicateKey(DataError):
    def __init__(self, path, key, lines):
        self.path = str(path)
        self.key = key
        self.lines = list(lines)
        super().__init__(f"{self.path}: duplicate key {key} at line(s) {', '.join(map(str, self.lines))}")


class EmptySeries(DataError):
    pass


class EmptyPanel(DataError):
    pass


class Missing(DataError):
    """A characteristic cannot be computed from the available observations."""


class RankDeficient(EstimationError):
    def __init__(self, column, name=None):
        self.column = column
        self.name = name
        label = name if name is not None else f"#{column}"
        super().__init__(f"design matrix is rank deficient at column {label}")


class Underdetermined(EstimationError):
    pass


class SingularDesign(EstimationError):
    def __init__(self, coin_id, month):
        self.coin_id = coin_id
        self.month = month
        super().__init__(f"singular factor design for {coin_id} in {month}")


class TooFewObservations(EstimationError):
    pass


class TooFewGroups(EstimationError):
    pass
