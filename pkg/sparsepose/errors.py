"""Exception hierarchy shared by the engine, the file formats and the CLI.

Every error carries the process exit code the CLI should terminate with.
"""


class SparsePoseError(Exception):
    """Base class for all errors raised by sparsepose"""
    exit_code = 1


class ConfigError(SparsePoseError):
    """Invalid run configuration (unknown backbone, modality/channel mismatch, ...)"""
    exit_code = 2


class DataError(SparsePoseError):
    """Malformed input data: bad magic, truncated header, inconsistent record counts"""
    exit_code = 3


class ShapeError(DataError, ValueError):
    """Dimension, channel or site-set mismatch between tensors or parameters"""


class DivergenceError(SparsePoseError):
    """Non-finite loss during training or non-finite output during benchmarking"""
    exit_code = 4


class BenchmarkMismatchError(DivergenceError):
    """Dense and sparse engines disagree beyond tolerance on a benchmarked frame"""


class ChecksumError(SparsePoseError):
    """Stored checksum does not match the file contents"""
    exit_code = 5


class ValueRangeError(SparsePoseError, ValueError):
    """A sensor value or coordinate lies outside its documented range"""
    exit_code = 6


class ContextError(SparsePoseError, RuntimeError):
    """Backward called without a recorded forward context"""
