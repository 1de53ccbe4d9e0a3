"""Exception hierarchy for lesionbench.

Every error raised deliberately by the package derives from LesionBenchError,
so callers (the CLI in particular) can separate bad inputs from bugs.
"""


class LesionBenchError(Exception):
    """Base exception for lesionbench errors."""
    pass


class DataError(LesionBenchError):
    """Invalid volume, case or manifest data."""
    pass


class ManifestError(DataError):
    """Malformed manifest, duplicate case id or unknown diagnosis tag."""
    pass


class MissingFileError(DataError):
    """A manifest row references a file that does not exist."""
    pass


class ShapeMismatchError(DataError):
    """Arrays that must be spatially aligned are not."""
    pass


class LabelRangeError(DataError):
    """A label value lies outside [0, num_classes)."""
    pass


class PreprocessError(LesionBenchError):
    """Cropping or normalization cannot be performed."""
    pass


class AugmentError(LesionBenchError):
    """Augmentation magnitudes are out of range."""
    pass


class SamplingError(LesionBenchError):
    """A sampler precondition does not hold."""
    pass


class LossInputError(LesionBenchError):
    """Loss inputs have mismatched shapes or are not normalized."""
    pass


class ModelConfigError(LesionBenchError):
    """Invalid model configuration."""
    pass


class UnknownArchitectureError(ModelConfigError):
    """The requested architecture is not registered."""
    pass


class ShapeContractError(ModelConfigError):
    """An input violates the architecture's shape contract."""
    pass


class MetricInputError(LesionBenchError):
    """Metric inputs are misaligned or out of range."""
    pass


class SynthError(LesionBenchError):
    """The synthetic generator cannot honor its configuration."""
    pass


class ExperimentConfigError(LesionBenchError):
    """An experiment configuration file is invalid."""
    pass


class TrainingError(LesionBenchError):
    """Training cannot proceed."""
    pass


class OutOfMemoryGuidanceError(TrainingError):
    """The device ran out of memory; carries configuration guidance."""
    pass


class CheckpointError(LesionBenchError):
    """A checkpoint is missing, corrupt or of an incompatible format."""
    pass
