"""Error hierarchy shared by estimation, diagnostics, simulation and the CLI.

Every error carries a stable ``code`` that the command layer prints as the
machine-readable prefix of its one-line failure message.
"""


class FDDError(Exception):
    code = "FDDError"
    # Exit status used by the command layer; 2 for bad input, 3 for estimation.
    exit_status = 3


class InputError(FDDError):
    exit_status = 2


class EmptyDataset(InputError):
    code = "EmptyDataset"

    def __init__(self, message="dataset has no observations"):
        super().__init__(message)


class NonFiniteValue(InputError):
    code = "NonFiniteValue"

    def __init__(self, row, column):
        self.row = row
        self.column = column
        super().__init__(f"non-finite value in column '{column}' at row {row}")


class InsufficientSupport(FDDError):
    code = "InsufficientSupport"

    def __init__(self, message, cell=None):
        self.cell = cell
        if cell:
            message = f"{message} (cell {cell})"
        super().__init__(message)

    def tagged(self, cell):
        return InsufficientSupport(str(self), cell=cell)


class SingularFit(FDDError):
    code = "SingularFit"

    def __init__(self, message, cell=None):
        self.cell = cell
        if cell:
            message = f"{message} (cell {cell})"
        super().__init__(message)

    def tagged(self, cell):
        return SingularFit(str(self), cell=cell)


class WeakFirstStage(FDDError):
    code = "WeakFirstStage"

    def __init__(self, delta, cohort=None, threshold=None):
        self.delta = delta
        self.cohort = cohort
        self.threshold = threshold
        where = f"{cohort} cohort " if cohort else ""
        limit = f" below {threshold:g}" if threshold is not None else ""
        super().__init__(f"{where}first-stage discontinuity {delta:.6g}{limit}")


class RankDeficient(FDDError):
    code = "RankDeficient"


class DegenerateDenominator(FDDError):
    code = "DegenerateDenominator"


class TooFewClusters(FDDError):
    code = "TooFewClusters"


class AllReplicatesFailed(FDDError):
    code = "AllReplicatesFailed"


class SingularBread(FDDError):
    code = "SingularBread"


class MissingLimits(FDDError):
    code = "MissingLimits"


class PlaceboPrecondition(InputError):
    code = "PlaceboPrecondition"


class InvalidSpec(InputError):
    code = "InvalidSpec"


class InvalidParameter(InputError):
    code = "InvalidParameter"


class FileNotFound(InputError):
    code = "FileNotFound"


class HeaderMismatch(InputError):
    code = "HeaderMismatch"

    def __init__(self, missing):
        self.missing = tuple(missing)
        super().__init__("missing columns: " + ", ".join(self.missing))


class ParseError(InputError):
    code = "ParseError"

    def __init__(self, row, column, value=None):
        self.row = row
        self.column = column
        shown = f" ({value!r})" if value is not None else ""
        super().__init__(f"cannot parse column '{column}' at row {row}{shown}")


class InvalidConfig(InputError):
    code = "InvalidConfig"
