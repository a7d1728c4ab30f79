"""Exception hierarchy shared across the toolkit."""


class ConsensusPruneError(Exception):
    """Base class for every error raised by this package."""


# representation metrics
class InvalidRepresentation(ConsensusPruneError, ValueError):
    pass


class InsufficientSamples(InvalidRepresentation):
    pass


class DegenerateRepresentation(InvalidRepresentation):
    pass


class ShapeMismatch(InvalidRepresentation):
    pass


class InvalidParameter(ConsensusPruneError, ValueError):
    pass


class NumericalFailure(ConsensusPruneError, ArithmeticError):
    pass


# consensus
class DuplicateLayer(ConsensusPruneError, ValueError):
    pass


class InconsistentTables(ConsensusPruneError, ValueError):
    pass


class NoEligibleLayers(ConsensusPruneError):
    pass


class PruneIterationError(ConsensusPruneError):
    """Candidate evaluation failed; ``layer`` names the offending block."""

    def __init__(self, layer, cause):
        super().__init__(f"candidate {layer}: {cause}")
        self.layer = layer
        self.cause = cause


# netlib
class SpecError(ConsensusPruneError, ValueError):
    pass


class TrainingDiverged(ConsensusPruneError):
    pass


class InvalidProbes(ConsensusPruneError, ValueError):
    pass


class DatasetError(ConsensusPruneError):
    pass


# surgery
class IneligibleLayer(ConsensusPruneError, ValueError):
    pass


class CorruptCheckpoint(ConsensusPruneError):
    pass


class OracleUndefined(ConsensusPruneError):
    pass


# accounting
class UnsupportedLayer(ConsensusPruneError):
    pass


class NegativeReduction(ConsensusPruneError, ValueError):
    pass


# robustness
class AttackFailed(ConsensusPruneError):
    pass


class UnknownCorruption(ConsensusPruneError, KeyError):
    pass


class ReportMismatch(ConsensusPruneError, ValueError):
    pass


# expcli
class ConfigError(ConsensusPruneError, ValueError):
    pass


class ReportError(ConsensusPruneError):
    pass


class CampaignLocked(ConsensusPruneError):
    """Another process holds the run directory."""
