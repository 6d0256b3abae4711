"""Exception hierarchy shared by every NIT-CycleGAN module"""

from typing import Any, Optional


class NitCycleGANError(Exception):
    """Base class for all toolkit errors"""


class ShapeError(NitCycleGANError, ValueError):
    """Tensor or matrix dimensions do not line up"""


class ConfigError(NitCycleGANError, ValueError):
    """Invalid or unknown configuration value"""


class AudioFormatError(NitCycleGANError):
    """WAV file is not 16-bit PCM mono"""


class SampleRateError(AudioFormatError):
    """Audio sample rate differs from the configured one"""


class CheckpointFormatError(NitCycleGANError):
    """Checkpoint file is corrupt, foreign or from an unsupported version"""


class LabelDimensionError(NitCycleGANError, ValueError):
    """Domain-label dimension differs between two parts of an experiment"""


class ManifestError(NitCycleGANError):
    """Corpus manifest cannot be read or built"""

    def __init__(self, message: str, failures: Optional[list] = None):
        super().__init__(message)
        self.failures = failures or []


class PesqProviderError(NitCycleGANError):
    """External PESQ provider failed or returned an out-of-range score"""


class NonFiniteLossError(NitCycleGANError):
    """A training loss became NaN or infinite"""

    def __init__(self, message: str, report: Any = None):
        super().__init__(message)
        self.report = report


class GradientError(NitCycleGANError):
    """Backward pass or optimizer step cannot proceed"""
