"""Exception hierarchy shared by every module.

Each error carries the CLI exit code it maps to (2 config, 3 data, 4 numeric).
"""

from __future__ import annotations


class FKDError(Exception):
    exit_code = 1


class ConfigError(FKDError):
    exit_code = 2


class DataError(FKDError):
    exit_code = 3


class NumericError(FKDError):
    exit_code = 4


# audio_io
class MalformedContainer(DataError):
    pass


class UnsupportedFormat(DataError):
    pass


class EmptyAudio(DataError):
    pass


class UnknownKeyToken(DataError):
    pass


class DuplicateUttId(DataError):
    pass


class EmptyProtocol(DataError):
    pass


# features
class TooShort(DataError):
    pass


class ShapeMismatch(DataError):
    pass


# freqmix
class BatchTooSmall(DataError):
    pass


# model / distill
class FrozenUpdate(FKDError):
    pass


class ArchitectureMismatch(DataError):
    pass


class CheckpointError(DataError):
    pass


class InvalidMargin(ConfigError):
    pass


class EmptyBatch(DataError):
    pass


class SingleClassManifest(DataError):
    pass


class NonFiniteLoss(NumericError):
    pass


# metrics
class EmptyScores(DataError):
    pass


class InvalidCoefficients(ConfigError):
    pass


class UnknownUttId(DataError):
    pass


class MissingScore(DataError):
    pass


class MalformedLine(DataError):
    pass
