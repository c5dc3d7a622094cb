"""Exception hierarchy shared by every segfusion module.

Two broad families exist: :class:`DataError` for anything wrong with inputs,
files, or geometry (CLI exit code 3), and :class:`PredictorError` for failures
of external prediction producers (CLI exit code 4).
"""

from __future__ import annotations


class SegFusionError(Exception):
    """Base class for every error raised by this package."""


class DataError(SegFusionError):
    """A problem with input data, file contents, or requested geometry."""


# -- geometry / value errors ------------------------------------------------

class EmptyInput(DataError):
    """An operation received zero-sized or zero-count input."""


class DimMismatch(DataError):
    """Rasters that must share dimensions (or class counts) do not."""


class PriorityMismatch(DataError):
    """Vote priority is not a permutation of the predictor indices."""


class ZeroWeight(DataError):
    """Averaging weights are all zero (or negative weights were given)."""


class InvalidGeometry(DataError):
    """Tile window or stride parameters are degenerate."""


class CoverageGap(DataError):
    """Some canvas pixel is covered by no tile."""


class ClassOutOfRange(DataError):
    """A label value is outside the bound class range."""


class NoValidPixels(DataError):
    """No class has any ground-truth or predicted pixel; mIoU is undefined."""


class MissingPrediction(DataError):
    """A scene listed in the manifest has no prediction file (strict mode)."""


class UnreadableGroundTruth(DataError):
    """A scene's ground-truth raster cannot be read."""


class InvalidParams(DataError):
    """Weather-mark parameters are out of range or inconsistent."""


class InvalidSpec(DataError):
    """A geometric transform specification is malformed."""


class InvalidRange(DataError):
    """A random-augmentation range is empty or inverted."""


# -- file format errors -----------------------------------------------------

class IoFailure(DataError):
    """Underlying file I/O failed."""


class BadFormat(DataError):
    """A raster file has the wrong channel count, bit depth, or layout."""


class BadMagic(BadFormat):
    """A binary file does not start with the expected magic bytes."""


class BadVersion(BadFormat):
    """A binary file declares an unsupported format version."""


class TruncatedFile(BadFormat):
    """A binary file is shorter than its header promises."""


class SchemaError(DataError):
    """A JSON document does not match its schema; message carries the field path."""


class DuplicateSceneId(SchemaError):
    """Two scenes in one manifest share an id."""


# -- external predictor errors ----------------------------------------------

class PredictorError(SegFusionError):
    """Base class for failures of an external prediction producer."""


class ProtocolError(PredictorError):
    """A predictor response violates the wire protocol or value contract."""


class PredictorCrash(PredictorError):
    """The predictor process exited nonzero or closed its stream mid-message."""


class ClassMismatch(PredictorError):
    """The predictor returned a class count other than the declared one."""


class PredictorTimeout(PredictorError):
    """The predictor did not answer within the configured deadline."""
