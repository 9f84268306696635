"""Exception hierarchy shared by all mann modules."""


class MannError(Exception):
    """Base class for every error raised by this package."""


class InputShapeError(MannError, ValueError):
    pass


class NumericError(MannError, ArithmeticError):
    """A non-finite value appeared while propagating through a network."""

    def __init__(self, message, layer=None):
        super().__init__(message)
        self.layer = layer


class TrainingDivergedError(MannError):
    """Raised when a network's training loss blows up or turns non-finite.

    ``epoch`` is the last epoch with a finite validation error and
    ``best_error`` the validation error of the best snapshot seen so far.
    """

    def __init__(self, message, epoch=None, best_error=None):
        super().__init__(message)
        self.epoch = epoch
        self.best_error = best_error


class DegenerateTargetError(MannError, ValueError):
    pass


class ModelKindError(MannError, TypeError):
    pass


class IncompatibleDatasetError(MannError, ValueError):
    pass


class DataError(MannError):
    """Problems reading or splitting a dataset."""


class ModelFormatError(MannError):
    """A model file could not be parsed or fails validation.

    ``field`` holds a dotted path to the offending entry when known.
    """

    def __init__(self, message, field=None, offset=None):
        super().__init__(message)
        self.field = field
        self.offset = offset
