"""Exception vocabulary shared across the package."""


class EngineError(Exception):
    """Base class for all corridorctl errors."""


class ConfigError(EngineError):
    """Corridor or pipeline configuration violates a structural invariant."""


class NonIntegralSpeed(ConfigError):
    """A km/h value does not map to a whole number of cells per step."""


class OutOfCorridor(EngineError):
    """A kilometre position falls outside the corridor."""


class SchemaError(EngineError):
    """A CSV or JSON document does not match the expected schema."""


class GapError(EngineError):
    """Timestamps in an ingested series are not contiguous one-minute steps."""


class RangeError(EngineError):
    """A physical quantity is outside its sane range (e.g. speed > 150 km/h)."""


class InsufficientData(EngineError):
    """Too few usable samples or bins to calibrate a curve."""


class DegenerateBin(InsufficientData):
    """All samples collapse onto a single density value."""


class BadRange(EngineError):
    """A prior range or parameter bound is empty or inverted."""


class NoOverlap(EngineError):
    """Two fields share no jointly observed patches."""


class CollapseError(EngineError):
    """Every particle's likelihood underflowed to zero."""


class OverCapacity(EngineError):
    """A reconstructed segment needs more vehicles than it has cells."""


class InsufficientHistory(EngineError):
    """Not enough trailing observations to run a predictor."""


class EmptyRegion(EngineError):
    """A space-time region with zero area was passed to a flow estimator."""


class NoOccupancy(EngineError):
    """No vehicle time was accumulated in the region; mean speed undefined."""


class SynthSpecError(EngineError):
    """Invalid synthetic-dataset specification."""
