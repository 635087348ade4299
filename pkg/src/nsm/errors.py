"""Exception types raised by the library.

Everything user-facing derives from NsmError so the CLI can catch one base
class and exit nonzero with a clean message.
"""


class NsmError(Exception):
    """Base class for all library errors."""


class ConfigError(NsmError):
    """Bad config file, unknown key, or inconsistent CLI options."""


class NoiseModelError(NsmError):
    """Invalid noise parameters (negative variance, rate outside [0, 1])."""


class DegenerateNoiseError(NoiseModelError):
    """Operation needs positive noise variance but the model has none."""


class NormalizationError(NsmError):
    """A weight row has zero norm where normalization is required."""


class ShapeError(NsmError):
    """Array arguments do not conform (fan-in mismatch, bad batch rank)."""


class NanGradientError(NsmError):
    """A gradient contained NaN or Inf; parameters were left untouched."""


class DataError(NsmError):
    """Dataset loading or validation failure (bad magic, truncation, labels)."""


class InitError(NsmError):
    """Data-dependent initialization hit a zero-variance feature."""


class CheckpointError(NsmError):
    """Checkpoint file is unreadable for a structural reason."""


class CheckpointVersionError(CheckpointError):
    """Checkpoint was written by an incompatible format version."""


class CheckpointCorruptError(CheckpointError):
    """Checkpoint payload fails its integrity checksum."""
