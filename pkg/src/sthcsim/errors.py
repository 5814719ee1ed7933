"""Exception and warning types shared across the simulator."""


class DimensionError(ValueError):
    """Array shapes are incompatible with the requested operation."""


class NumericalConsistencyError(ArithmeticError):
    """A numerically derived quantity violated its consistency bound."""


class EncodingError(ValueError):
    """Field cannot be realized on an intensity-only modulator."""


class TimingError(ValueError):
    """Pulse-sequence ordering violated."""


class CrosstalkError(ValueError):
    """Modulator layout lets neighbouring optical channels interfere."""


class LayoutCapacityError(ValueError):
    """Canvas too small for the requested channel layout."""


class FormatError(ValueError):
    """Malformed binary container."""


class IngestionError(ValueError):
    """Source clip could not be loaded."""


class ManifestError(ValueError):
    """Malformed dataset manifest."""


class ParameterError(ValueError):
    """Parameter outside its valid range."""


class InfeasibleOverlapError(ParameterError):
    """Segment overlap leaves no forward progress."""


class DivergenceError(ArithmeticError):
    """Training produced a non-finite loss."""

    def __init__(self, message, epoch=None, batch=None):
        super().__init__(message)
        self.epoch = epoch
        self.batch = batch


class BandwidthWarning(UserWarning):
    """Temporal bandwidth demand is not met by the medium or the pulse."""


class CoherenceDecayWarning(UserWarning):
    """Stored grating has decayed beyond practical use."""
