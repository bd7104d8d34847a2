"""Exceptions raised across cprlab, each mapped to a CLI exit code."""


class CprLabError(Exception):
    """Base class for every error cprlab raises on purpose"""

    exit_code = 1


class InvalidInputError(CprLabError, ValueError):
    exit_code = 3


class ShapeError(CprLabError, ValueError):
    exit_code = 3


class DegenerateChannelError(InvalidInputError):
    exit_code = 3


class UndefinedSignalError(InvalidInputError):
    exit_code = 3


class DegenerateMatrixError(InvalidInputError):
    exit_code = 3


class SchemaError(CprLabError):
    exit_code = 4


class MissingChannelError(SchemaError):
    exit_code = 5


class FormatError(CprLabError):
    exit_code = 6


class VersionMismatchError(FormatError):
    exit_code = 7


class TrainingDivergedError(CprLabError):
    """Raised when a training loss turns non-finite"""

    exit_code = 8

    def __init__(self, epoch, batch, channel, loss):
        self.epoch = epoch
        self.batch = batch
        self.channel = channel
        self.loss = loss
        super().__init__(
            f"non-finite loss {loss} at epoch {epoch}, batch {batch}, channel '{channel}'"
        )


class OutputError(CprLabError):
    exit_code = 9


EXIT_CODES = {
    "ok": 0,
    "unexpected": 1,
    "usage": 2,
    "invalid-input": InvalidInputError.exit_code,
    "schema": SchemaError.exit_code,
    "missing-channel": MissingChannelError.exit_code,
    "format": FormatError.exit_code,
    "version": VersionMismatchError.exit_code,
    "diverged": TrainingDivergedError.exit_code,
    "output": OutputError.exit_code,
}
