"""
Exception hierarchy for the support detection toolkit
"""


class SupportDetectionError(Exception):
    """Base class for every error raised by this package"""


class ConfigError(SupportDetectionError):
    """Invalid configuration values or combinations"""


class UsageError(SupportDetectionError):
    """Bad command-line usage"""


class DimensionError(SupportDetectionError):
    """Array or matrix dimensions do not agree"""


class GridError(SupportDetectionError):
    """A sampling grid is too narrow or too coarse for the requested density"""


class AliasingError(GridError):
    """A convolution would wrap mass around the FFT window"""


class MassAnnihilationError(SupportDetectionError):
    """A density product left no probability mass"""


class MatrixConstructionError(SupportDetectionError):
    """A measurement matrix could not be built under the requested constraints"""


class NumericalGateError(SupportDetectionError):
    """A numerical self-consistency check failed"""


class ResultIOError(SupportDetectionError):
    """Reading or writing an artifact failed"""

    def __init__(self, path, message: str):
        self.path = str(path)
        super().__init__(f"{self.path}: {message}")


class DensityError(SupportDetectionError):
    """A density violates nonnegativity, finiteness or normalization"""
