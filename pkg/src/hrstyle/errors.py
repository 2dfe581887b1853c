"""Exception hierarchy.

Every error raised on purpose by this package derives from
:class:`StyleTransferError`. Validation failures additionally derive from
:class:`ValueError` so callers that only know the builtin still catch them.
"""


class StyleTransferError(Exception):
    pass


class ValidationError(StyleTransferError, ValueError):
    """Bad input or configuration (maps to CLI exit code 2)."""


# image_io
class UnreadableFile(StyleTransferError, OSError):
    pass


class UnsupportedFormat(ValidationError):
    pass


class InvalidTarget(ValidationError):
    pass


class WrongRangeMode(ValidationError):
    pass


# generation network
class InvalidSpec(ValidationError):
    pass


class IndivisibleInput(ValidationError):
    pass


class ScaleMismatch(ValidationError):
    pass


# perceptual loss
class UnknownLayer(ValidationError):
    pass


class ShapeMismatch(ValidationError):
    pass


class ChannelMismatch(ValidationError):
    pass


class MissingLayer(ValidationError):
    pass


class ExtractorUnavailable(StyleTransferError):
    pass


# trainer / evaluation
class CorruptCheckpoint(StyleTransferError):
    pass


class TooSmall(ValidationError):
    pass
