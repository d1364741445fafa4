"""Error taxonomy shared across the package.

Every failure mode has a dedicated class so callers (and the CLI exit-code
mapping) can distinguish bad shapes from bad files from diverged training.
"""


class ShapeError(ValueError):
    """Operand shapes are incompatible for the requested operation."""


class InvalidValueError(ValueError):
    """A NaN or Inf appeared where only finite values are allowed."""


class EmptySupportError(ValueError):
    """Softmax (or another reduction) was asked to normalise over zero valid positions."""


class EmptyInputError(ValueError):
    """An operation received an empty sequence where at least one element is required."""


class ContractError(ValueError):
    """A call violated an operation's preconditions (non-scalar backward, empty batch, ...)."""


class DeterminismError(RuntimeError):
    """A function produced different values across identical calls."""


class TooShortError(ValueError):
    """Input sequence is shorter than the receptive field of the convolution block."""


class NoNegativeError(ValueError):
    """Triplet sampling found no instance with a different category label."""


class DivergenceError(RuntimeError):
    """Training loss became non-finite. Carries the partial loss trace."""

    def __init__(self, message, trace=None):
        super().__init__(message)
        self.trace = trace if trace is not None else []


class FormatError(ValueError):
    """A binary file does not match the expected magic/version/layout."""


class CorruptFileError(FormatError):
    """A binary file is truncated or internally inconsistent."""


class ManifestError(ValueError):
    """Dataset manifest validation failed. Carries the list of offending records."""

    def __init__(self, message, offenders=None):
        super().__init__(message)
        self.offenders = list(offenders) if offenders is not None else []
