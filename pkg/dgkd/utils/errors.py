"""
File: dgkd/utils/errors.py
Description: Exception hierarchy shared by every layer of the distillation toolkit.
             Controllers raise these; only the CLI layer turns them into exit statuses.
"""


class DGKDError(Exception):
    """Base class for every error raised by the toolkit."""

    exit_code = 1


class ParameterError(DGKDError, ValueError):
    """A scalar parameter is outside its admissible range (T <= 0, t out of range, ...)."""


class NumericError(DGKDError, ArithmeticError):
    """A computation produced or received a non-finite value."""

    exit_code = 5


class DivergenceError(NumericError):
    """
    Training produced a non-finite loss and the stage was aborted.

    Args:
        message (str): Diagnostic text
        stage (int): Stage index in the plan (or -1 outside a plan)
        epoch (int): Epoch in which the loss diverged
        batch (int): Mini-batch index inside the epoch
    """

    def __init__(self, message, stage=-1, epoch=-1, batch=-1):
        super().__init__(message)
        self.stage = stage
        self.epoch = epoch
        self.batch = batch


class StructuralError(DGKDError, ValueError):
    """Shapes, lengths or graph structure do not line up."""


class LadderError(StructuralError):
    """A capacity ladder is ambiguous, misordered, or violated by a trainer list."""


class CheckpointError(DGKDError, OSError):
    """A checkpoint file cannot be used."""

    exit_code = 7


class CorruptCheckpointError(CheckpointError):
    """Checkpoint bytes are truncated, malformed, or carry trailing data."""


class CheckpointVersionError(CheckpointError):
    """Checkpoint was written with an unsupported format version."""


class DatasetError(DGKDError, ValueError):
    """A dataset file or generator request is malformed."""

    exit_code = 4


class BadMagicError(DatasetError):
    """IDX file starts with an unexpected magic number."""


class TruncatedFileError(DatasetError):
    """File ends before the structure its header declares."""


class CountMismatchError(DatasetError):
    """Image and label files disagree on the number of items."""


class RecordSizeError(DatasetError):
    """CIFAR binary file length is not a multiple of the record size."""


class LabelRangeError(DatasetError):
    """A label is outside [0, num_classes)."""


class ConfigError(DGKDError, ValueError):
    """
    Experiment configuration failed validation.

    Args:
        message (str): Human readable description
        key_path (str): Dotted path of the offending key, e.g. "plans.0.distill.temperature"
    """

    exit_code = 3

    def __init__(self, message, key_path=""):
        super().__init__(f"{key_path}: {message}" if key_path else message)
        self.key_path = key_path


class NoReportsError(DGKDError):
    """The report command found no stored plan reports."""

    exit_code = 6
