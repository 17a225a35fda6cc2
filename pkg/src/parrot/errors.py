"""Exception hierarchy shared across the package.

Every error raised by this package derives from ParrotError so callers can
catch one base type. The CLI maps subtrees onto its exit-code contract
(2 usage, 3 data/format, 4 numerical).
"""


class ParrotError(Exception):
    """Base class for all errors raised by this package."""


class ShapeError(ParrotError):
    """Operand shapes are incompatible with the requested operation."""


class NumericsError(ParrotError):
    """A numerical hard failure: NaN or Inf appeared, or a parameter is invalid."""


class GraphError(ParrotError):
    """Misuse of the reverse-mode graph (backward without a recorded forward, etc.)."""


class DataError(ParrotError):
    """Base class for dataset and file-format problems."""


class PfvError(DataError):
    """Base class for feature-vector file problems."""


class HeaderError(PfvError):
    """Missing or malformed PFV header line."""


class RowFormatError(PfvError):
    """A data row has the wrong number of columns."""


class CellParseError(PfvError):
    """A value cell could not be parsed as a decimal float."""


class NonFiniteValueError(PfvError):
    """A value cell parsed to NaN or Inf."""


class DuplicateIdError(PfvError):
    """The same utterance id appears more than once."""


class UnknownLabelError(PfvError):
    """A row label is not declared in the header label list."""


class EmptyTableError(PfvError):
    """The file contains a header but no data rows."""


class PairingError(DataError):
    """Two feature tables cannot be aligned (id or label disagreement)."""


class FoldError(DataError):
    """A cross-validation split cannot be constructed."""


class CheckpointError(DataError):
    """A model checkpoint file is malformed or inconsistent."""


class TrainingDivergedError(NumericsError):
    """Training hit a non-finite loss or gradient; carries diagnostics."""

    def __init__(self, message, epoch=None, batch=None, max_abs_grad=None):
        super().__init__(message)
        self.epoch = epoch
        self.batch = batch
        self.max_abs_grad = max_abs_grad
