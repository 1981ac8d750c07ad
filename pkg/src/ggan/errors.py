"""Exception hierarchy shared across the package."""


class GganError(Exception):
    """Base class for all errors raised by this package."""


class ParseError(GganError):
    """Malformed input file (genotype CSV, subset file, JSON document)."""


class DataMismatchError(GganError):
    """Inputs that parse fine but do not fit together (unknown SNP ids, disjoint cohorts)."""


class MissingGenotypeError(DataMismatchError):
    """A missing genotype was hit under the reject policy."""


class ConfigError(GganError):
    """Invalid configuration value."""


class SpecError(GganError):
    """Inconsistent network specification (bad layer params, shape chain broken)."""


class NumericsError(GganError):
    """Non-finite value produced where a finite one is required."""


class TrainingDivergedError(NumericsError):
    """Training produced a non-finite loss."""

    def __init__(self, epoch: int, message: str):
        super().__init__(message)
        self.epoch = epoch


class CheckpointError(GganError):
    """Unreadable, corrupted, or incompatible checkpoint file."""


class ArtifactMismatchError(GganError):
    """A checkpoint does not match the data it is being applied to."""
