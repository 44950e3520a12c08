"""Exception hierarchy shared by every phondrift module."""


class PhondriftError(Exception):
    pass


class FormatError(PhondriftError):
    """Malformed file contents (WAV header, model file, truncated data)."""


class UnsupportedFormatError(FormatError):
    """Well-formed file in a format we refuse to convert (stereo, non-PCM16)."""


class DegenerateInputError(PhondriftError, ValueError):
    pass


class ContractError(PhondriftError, ValueError):
    """Shape or precondition violation by the caller."""


class InfeasibleTargetError(PhondriftError, ValueError):
    """Target label sequence cannot be emitted in the available frames."""


class NumericError(PhondriftError, ArithmeticError):
    def __init__(self, message, iteration=None):
        super().__init__(message)
        self.iteration = iteration


class GuardError(PhondriftError, ValueError):
    """Brute-force oracle asked to enumerate too many paths."""


class DataError(PhondriftError, ValueError):
    pass


class SchemaError(PhondriftError, ValueError):
    pass


class ConfigError(PhondriftError, ValueError):
    pass
