"""Exception types raised by this package."""


class AdfdError(Exception):
    """Base class for all errors raised by adfd."""


# --- audio ingest ---

class UnsupportedFormatError(AdfdError):
    """Audio file is not mono WAV in PCM-16 or float-32."""


class SampleRateMismatchError(AdfdError):
    """Audio sample rate is not 16 kHz."""


class EmptyAudioError(AdfdError):
    """Audio clip contains zero samples."""


# --- shapes and configuration ---

class ShapeMismatchError(AdfdError):
    """Array shape does not match what the operation requires."""


class InvalidKindError(AdfdError):
    """Unknown transform, filterbank, or axis name."""


class UnknownArchError(AdfdError):
    """Unknown network architecture identifier."""


# --- training ---

class EmptyDatasetError(AdfdError):
    """Training or dev set contains no examples."""


class LabelOutOfRangeError(AdfdError):
    """Label is not 0 (bonafide) or 1 (spoof)."""


# --- scoring ---

class EmptyInputError(AdfdError):
    """Aggregation or fusion received an empty sequence."""


class UtteranceMismatchError(AdfdError):
    """Fusion inputs do not refer to the same utterances."""


class EmptyClassError(AdfdError):
    """Metric needs both bonafide and spoof scores but one class is empty."""


class MissingKeyError(AdfdError):
    """A scored utterance has no entry in the protocol keys."""


# --- file formats ---

class MalformedLineError(AdfdError):
    """Protocol line does not have the expected field structure."""

    def __init__(self, message: str, line_no: int | None = None):
        super().__init__(message)
        self.line_no = line_no


class UnknownKeyError(AdfdError):
    """Protocol key field is neither 'bonafide' nor 'spoof'."""


class BadMagicError(AdfdError):
    """Binary file does not start with the expected magic bytes."""


class VersionUnsupportedError(AdfdError):
    """Binary file declares a format version this reader does not support."""


class ConfigHashMismatchError(AdfdError):
    """Feature cache was produced under a different feature configuration."""


class ArchMismatchError(AdfdError):
    """Checkpoint parameters do not match the declared architecture."""


class TruncatedFileError(AdfdError):
    """Binary file ended in the middle of a record."""


class RaggedRowsError(AdfdError):
    """Embedding rows do not all have the same dimension."""


class NonNumericFieldError(AdfdError):
    """Embedding value could not be parsed as a float."""


class UnsupportedDimError(AdfdError):
    """Embedding dimension is not one of the supported sizes."""
