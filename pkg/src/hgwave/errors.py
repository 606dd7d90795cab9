"""Exception types raised across the package."""


class HgwaveError(Exception):
    """Base class for all package errors."""


# --- data loading / panel construction ---

class MissingColumn(HgwaveError):
    pass


class EmptyPanel(HgwaveError):
    pass


class NonPositivePrice(HgwaveError):
    pass


class ZeroPrice(HgwaveError):
    pass


class CalendarTooShort(HgwaveError):
    pass


# --- tensor core ---

class ShapeMismatch(HgwaveError):
    pass


class NonFiniteValue(HgwaveError):
    pass


class NonScalarLoss(HgwaveError):
    pass


class GraphConsumed(HgwaveError):
    pass


# --- model ---

class WindowTooShort(HgwaveError):
    pass


class InsufficientHistory(HgwaveError):
    pass


class ZeroDegreeVertex(HgwaveError):
    pass


class DecompositionFailed(HgwaveError):
    pass


# --- training / evaluation ---

class EmptyBatch(HgwaveError):
    pass


class NoTrainableDays(HgwaveError):
    pass


class DegenerateDay(HgwaveError):
    pass


class MissingPrice(HgwaveError):
    pass


class PhaseCheckpointMissing(HgwaveError):
    pass


# --- CLI / orchestration ---

class UnknownCommand(HgwaveError):
    pass


class ConfigInvalid(HgwaveError):
    pass


class UpstreamArtifactMissing(HgwaveError):
    pass


class IoFailure(HgwaveError):
    pass
